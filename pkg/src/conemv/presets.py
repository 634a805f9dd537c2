"""Ready-made market and constraint setups used by the examples.

The three-index market is a three-asset, three-year setup built from
an annual summary table (S&P 500, emerging markets, small stock):
expected returns 14%, 16%, 17%, volatilities 18.5%, 30%, 24%,
pairwise correlations 0.64 / 0.79 / 0.75, riskless rate 5%.
"""

from __future__ import annotations

import numpy as np

from .cones import ConvexCone, construct_tcie_cone
from .market import MarketSpec, PeriodDistribution, from_annual_table

THREE_INDEX_RETURNS = (0.14, 0.16, 0.17)
THREE_INDEX_VOLS = (0.185, 0.30, 0.24)
THREE_INDEX_CORR = ((1.00, 0.64, 0.79),
                    (0.64, 1.00, 0.75),
                    (0.79, 0.75, 1.00))
THREE_INDEX_RISKLESS = 0.05


def three_index_moments() -> tuple[np.ndarray, np.ndarray]:
    """Excess-return mean and covariance of the three-index table."""
    return from_annual_table(THREE_INDEX_RETURNS, THREE_INDEX_VOLS,
                             THREE_INDEX_CORR, THREE_INDEX_RISKLESS)


def three_index_market(family: str = "gaussian", horizon: int = 3,
                       df: float = 5.0) -> MarketSpec:
    """Three risky assets, i.i.d. periods, 5% riskless rate."""
    mean, cov = three_index_moments()
    if family == "gaussian":
        period = PeriodDistribution.gaussian(mean, cov)
    elif family == "student_t":
        period = PeriodDistribution.student_t(mean, cov, df)
    else:
        raise ValueError(f"unsupported family for this preset: {family!r}")
    return MarketSpec.iid(horizon, 1.0 + THREE_INDEX_RISKLESS, period)


def unconstrained_cone() -> ConvexCone:
    return ConvexCone.whole_space(3)


def mean_half_space_cone() -> ConvexCone:
    """Largest cone keeping the problem time-consistent in efficiency."""
    mean, _ = three_index_moments()
    return construct_tcie_cone(mean)


def limited_short_cone() -> ConvexCone:
    """No shorting of assets 2 and 3; asset 1 may be shorted only up to
    the combined long position: u2 >= 0, u3 >= 0, u1 + u2 + u3 >= 0."""
    return ConvexCone.polyhedral([[0.0, 1.0, 0.0],
                                  [0.0, 0.0, 1.0],
                                  [1.0, 1.0, 1.0]])


def study_config(case: str, family: str = "gaussian",
                 x0: float = 1.0, d: float = 1.35) -> dict:
    """Full run configuration for one constraint case of the study.

    ``case`` is one of ``unconstrained``, ``half_space``, ``polyhedral``.
    """
    mean, cov = three_index_moments()
    market = {
        "horizon": 3,
        "riskless_rates": [1.0 + THREE_INDEX_RISKLESS] * 3,
        "family": family,
        "mean": mean.tolist(),
        "covariance": cov.tolist(),
    }
    if family == "student_t":
        market["df"] = 5
    cones = {
        "unconstrained": unconstrained_cone(),
        "half_space": mean_half_space_cone(),
        "polyhedral": limited_short_cone(),
    }
    if case not in cones:
        raise ValueError(f"unknown case {case!r}")
    return {
        "market": market,
        "cones": cones[case].to_dict(),
        "policy": {"kind": "precommitted", "x0": x0, "d": d},
        "numerics": {"backend": "saa", "samples": 1_000_000, "seed": 7,
                     "optimizer": "projected_gradient", "tol": 1e-8,
                     "max_iter": 5000},
    }
