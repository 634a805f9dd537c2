"""Backward recursion for cone-constrained mean-variance control.

For each period t and sign branch the one-period cost of a feedback
gain K is

    h_t^+(K) = E[ C_{t+1}^+ (1 - P'K)^2 1{P'K <= 1}
                + C_{t+1}^- (1 - P'K)^2 1{P'K > 1} ],
    h_t^-(K) = E[ C_{t+1}^+ (1 + P'K)^2 1{P'K <= -1}
                + C_{t+1}^- (1 + P'K)^2 1{P'K > -1} ],

and the recursion stores the constrained minimisers

    K_t^{+-} = argmin_{K in cone_t} h_t^{+-}(K),
    C_t^{+-} = h_t^{+-}(K_t^{+-}),         C_T^{+-} = 1.

Both branch costs are convex and continuously differentiable with

    grad h_t^{+-}(K) = 2 E[ c(K) P (P'K -+ 1) ],

where c(K) picks C_{t+1}^+ or C_{t+1}^- by the same indicator.  The
costs satisfy the exact identity h = L + grad h(K)'K / 2 against the
linear form L(K) = E[c(K) (1 -+ P'K)], so at a minimiser satisfying
complementarity the quadratic and linear evaluations agree; the
recursion cross-checks this at every step.

Expectations run through one of two backends: exact summation over
discrete atoms, or sample-average approximation with one frozen sample
matrix per period (common random numbers across all evaluations).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .cones import ConvexCone
from .errors import (BackendMismatch, ConsistencyError, NoConvergence,
                     TargetUnattainable)
from .market import MarketSpec
from .rng import STREAM_SAA

_STEP_FLOOR = 1e-18
_BB_CLIP = (1e-10, 1e10)


# ---------------------------------------------------------------------------
# expectation backends
# ---------------------------------------------------------------------------

class ExactDiscreteBackend:
    """Exact expectations by summation over scenario atoms."""

    kind = "exact_discrete"
    is_exact = True

    def __init__(self, market: MarketSpec):
        for t, p in enumerate(market.periods):
            if p.family != "discrete":
                raise BackendMismatch(
                    f"exact backend needs discrete periods; period {t} is "
                    f"{p.family}")
        self.market = market

    def points(self, t: int) -> np.ndarray:
        return self.market.periods[t].atoms

    def weights(self, t: int) -> Optional[np.ndarray]:
        return self.market.periods[t].probs

    def describe(self) -> dict:
        return {"kind": self.kind}


class SaaBackend:
    """Sample-average approximation with frozen per-period samples.

    The sample matrix for period t is drawn once (counter-based stream,
    so the draw is independent of evaluation order) and reused by every
    cost and gradient evaluation at that period.
    """

    kind = "saa"
    is_exact = False

    def __init__(self, market: MarketSpec, sample_count: int, seed: int):
        if sample_count < 2:
            raise ValueError(f"sample_count must be >= 2, got {sample_count}")
        self.market = market
        self.sample_count = int(sample_count)
        self.seed = int(seed)
        self._cache: dict[int, np.ndarray] = {}

    def points(self, t: int) -> np.ndarray:
        if t not in self._cache:
            self._cache[t] = self.market.sample_block(
                t, self.seed, 0, self.sample_count, stream=STREAM_SAA)
        return self._cache[t]

    def weights(self, t: int) -> Optional[np.ndarray]:
        return None  # uniform 1/N

    def describe(self) -> dict:
        return {"kind": self.kind, "samples": self.sample_count,
                "seed": self.seed}


def make_backend(market: MarketSpec, backend: str = "saa",
                 sample_count: int = 1_000_000, seed: int = 0):
    if backend in ("exact", "exact_discrete"):
        return ExactDiscreteBackend(market)
    if backend == "saa":
        return SaaBackend(market, sample_count, seed)
    raise ValueError(f"unknown backend {backend!r}")


# ---------------------------------------------------------------------------
# one-period cost
# ---------------------------------------------------------------------------

def _avg(w: Optional[np.ndarray], v: np.ndarray) -> float:
    return float(np.mean(v)) if w is None else float(w @ v)


def _cost_pieces(points, weights, sign, k, c_plus, c_minus):
    """Per-sample quantities shared by value/gradient/linear form."""
    y = points @ k
    if sign > 0:
        resid = 1.0 - y
        mask = y <= 1.0
    else:
        resid = 1.0 + y
        mask = y <= -1.0
    c = np.where(mask, c_plus, c_minus)
    return y, resid, c


def eval_h(backend, t: int, sign: int, k, c_plus_next: float,
           c_minus_next: float) -> float:
    """Quadratic one-period cost h_t^{sign}(k)."""
    k = np.asarray(k, dtype=float)
    pts, w = backend.points(t), backend.weights(t)
    _, resid, c = _cost_pieces(pts, w, sign, k, c_plus_next, c_minus_next)
    return _avg(w, c * resid * resid)


def grad_h(backend, t: int, sign: int, k, c_plus_next: float,
           c_minus_next: float) -> np.ndarray:
    """Gradient of h_t^{sign} at k."""
    k = np.asarray(k, dtype=float)
    pts, w = backend.points(t), backend.weights(t)
    _, resid, c = _cost_pieces(pts, w, sign, k, c_plus_next, c_minus_next)
    coeff = c * resid
    if w is None:
        return (-2.0 * sign / pts.shape[0]) * (pts.T @ coeff)
    return -2.0 * sign * (pts.T @ (w * coeff))


def linear_form(backend, t: int, sign: int, k, c_plus_next: float,
                c_minus_next: float) -> float:
    """Piecewise-linear evaluation E[c(k) (1 -+ P'k)].

    Coincides with eval_h at any point where grad h(k)'k = 0, in
    particular at every constrained minimiser.
    """
    k = np.asarray(k, dtype=float)
    pts, w = backend.points(t), backend.weights(t)
    _, resid, c = _cost_pieces(pts, w, sign, k, c_plus_next, c_minus_next)
    return _avg(w, c * resid)


def _h_and_grad(pts, w, sign, k, c_plus, c_minus):
    _, resid, c = _cost_pieces(pts, w, sign, k, c_plus, c_minus)
    coeff = c * resid
    value = _avg(w, coeff * resid)
    if w is None:
        grad = (-2.0 * sign / pts.shape[0]) * (pts.T @ coeff)
    else:
        grad = -2.0 * sign * (pts.T @ (w * coeff))
    return value, grad


# ---------------------------------------------------------------------------
# options / results
# ---------------------------------------------------------------------------

@dataclass
class SolverOptions:
    optimizer: str = "projected_gradient"  # or "penalty"
    tol: float = 1e-8
    max_iter: int = 5000
    armijo_slope: float = 1e-4
    armijo_shrink: float = 0.5
    cross_tol_exact: float = 1e-6
    vi_directions: int = 64


@dataclass
class MinimizeResult:
    k: np.ndarray
    value: float
    iterations: int
    pg_residual: float
    complementarity: float
    vi_min: float
    converged: bool
    method: str
    snapped_zero: bool = False


# ---------------------------------------------------------------------------
# cone-constrained minimisation of h
# ---------------------------------------------------------------------------

def _zero_is_optimal(cone: ConvexCone, sign: int, exact_mean: np.ndarray,
                     c_plus: float, c_minus: float) -> bool:
    """First-order test of K = 0 using the declared (exact) mean.

    At the origin every sample sits on one branch, so the gradient has
    the closed form -+ 2 c E[P].  Zero minimises the convex cost over
    the cone iff -grad h(0) lies in the polar cone.  Deciding this with
    the exact mean rather than the sampled one keeps structural zeros
    (and the C = 1 bookkeeping built on them) immune to SAA noise.
    """
    c0 = c_plus if sign > 0 else c_minus
    grad0 = -2.0 * sign * c0 * exact_mean
    return cone.polar_contains(-grad0)


def _vi_residual(cone: ConvexCone, k: np.ndarray, grad: np.ndarray,
                 n_dirs: int) -> float:
    """Smallest grad'(u - k) over a deterministic sample of cone points."""
    gen = np.random.Generator(np.random.Philox(key=0xD1CE))
    dirs = gen.standard_normal((n_dirs, k.shape[0]))
    worst = np.inf
    for d in dirs:
        u = cone.project(d)
        worst = min(worst, float(grad @ (u - k)))
    return worst


def minimize_over_cone(backend, t: int, sign: int, cone: ConvexCone,
                       c_plus_next: float, c_minus_next: float,
                       exact_mean: np.ndarray,
                       exact_second: np.ndarray,
                       opts: SolverOptions,
                       zero_tol: float) -> MinimizeResult:
    """Constrained minimiser of h_t^{sign} over the cone.

    Tries the exact first-order test at the origin first, then runs the
    configured optimizer.  Solutions with norm below ``zero_tol`` snap
    to exactly zero, in which case the cost equals the next-period
    constant by construction.
    """
    c_at_zero = c_plus_next if sign > 0 else c_minus_next
    n = exact_mean.shape[0]
    if _zero_is_optimal(cone, sign, exact_mean, c_plus_next, c_minus_next):
        return MinimizeResult(np.zeros(n), c_at_zero, 0, 0.0, 0.0, 0.0,
                              True, "zero_test", snapped_zero=True)

    pts, w = backend.points(t), backend.weights(t)
    k_unc = np.linalg.solve(exact_second, exact_mean)
    init = cone.project(sign * k_unc)

    if opts.optimizer == "penalty":
        k, value, iters, converged = _penalty_descent(
            pts, w, sign, cone, c_plus_next, c_minus_next, init, opts)
    elif opts.optimizer == "projected_gradient":
        k, value, iters, converged = _projected_gradient(
            pts, w, sign, cone, c_plus_next, c_minus_next, init, opts)
    else:
        raise ValueError(f"unknown optimizer {opts.optimizer!r}")

    snapped = bool(np.linalg.norm(k) <= zero_tol)
    if snapped:
        k = np.zeros(n)
        value = c_at_zero
    grad = grad_h_points(pts, w, sign, k, c_plus_next, c_minus_next)
    pg_res = float(np.linalg.norm(k - cone.project(k - grad)))
    comp = abs(float(grad @ k))
    vi = _vi_residual(cone, k, grad, opts.vi_directions)
    result = MinimizeResult(k, value, iters, pg_res, comp, vi, converged,
                            opts.optimizer, snapped_zero=snapped)
    if not converged:
        raise NoConvergence(
            f"optimizer {opts.optimizer!r} exhausted {opts.max_iter} "
            f"iterations at t={t} sign={sign:+d} (pg residual {pg_res:.3e})",
            best=result)
    return result


def grad_h_points(pts, w, sign, k, c_plus, c_minus) -> np.ndarray:
    _, g = _h_and_grad(pts, w, sign, k, c_plus, c_minus)
    return g


def _projected_gradient(pts, w, sign, cone, c_plus, c_minus, init, opts):
    """Projected gradient with Armijo backtracking.

    The first trial step is 1.0; later iterations reuse a
    Barzilai-Borwein estimate as the trial step, still safeguarded by
    the same Armijo test, which keeps iteration counts modest on the
    poorly scaled instances produced by long horizons.
    """
    k = init.astype(float).copy()
    f, g = _h_and_grad(pts, w, sign, k, c_plus, c_minus)
    # The origin is always admissible; starting from the better of the
    # two guarantees the final cost never exceeds the next-period
    # constant, which the recursion's monotonicity invariant relies on.
    f0, g0 = _h_and_grad(pts, w, sign, np.zeros_like(k), c_plus, c_minus)
    if f0 < f:
        k = np.zeros_like(k)
        f, g = f0, g0
    trial = 1.0
    for it in range(1, opts.max_iter + 1):
        pg_res = np.linalg.norm(k - cone.project(k - g))
        if pg_res <= opts.tol:
            return k, f, it - 1, True
        step = trial
        while True:
            k_new = cone.project(k - step * g)
            d = k_new - k
            slope = float(g @ d)
            f_new = _h_and_grad(pts, w, sign, k_new, c_plus, c_minus)[0]
            if f_new <= f + opts.armijo_slope * slope or step < _STEP_FLOOR:
                break
            step *= opts.armijo_shrink
        if step < _STEP_FLOOR:
            # No admissible descent step.  Honest only if the projected
            # gradient is already small; otherwise report the stall.
            pg_res = np.linalg.norm(k - cone.project(k - g))
            return k, f, it, bool(pg_res <= 100.0 * opts.tol)
        g_new = grad_h_points(pts, w, sign, k_new, c_plus, c_minus)
        dk = k_new - k
        dg = g_new - g
        denom = float(dk @ dg)
        trial = float(dk @ dk) / denom if denom > 0 else 1.0
        trial = min(max(trial, _BB_CLIP[0]), _BB_CLIP[1])
        k, f, g = k_new, f_new, g_new
    return k, f, opts.max_iter, False


def _penalty_descent(pts, w, sign, cone, c_plus, c_minus, init, opts):
    """Quadratic-penalty alternative: unconstrained BB descent on
    h + mu * sum(violations^2) with an increasing penalty schedule,
    followed by an exact projection onto the cone."""
    if cone.kind == "whole_space":
        rows = None
    elif cone.kind == "orthant":
        rows = np.eye(init.shape[0])
    elif cone.kind == "half_space":
        rows = cone.normal[None, :]
    else:
        rows = cone.rows

    def phi_and_grad(k, mu):
        f, g = _h_and_grad(pts, w, sign, k, c_plus, c_minus)
        if rows is not None:
            viol = np.minimum(rows @ k, 0.0)
            f += mu * float(viol @ viol)
            g = g + 2.0 * mu * (rows.T @ viol)
        return f, g

    k = init.astype(float).copy()
    total_iters = 0
    mu_schedule = [1e1, 1e2, 1e3, 1e4, 1e5, 1e6, 1e7, 1e8]
    if rows is None:
        mu_schedule = [0.0]
    for mu in mu_schedule:
        f, g = phi_and_grad(k, mu)
        trial = 1.0
        for _ in range(opts.max_iter):
            if np.linalg.norm(g) <= opts.tol:
                break
            step = trial
            while True:
                k_new = k - step * g
                f_new, g_new = phi_and_grad(k_new, mu)
                if (f_new <= f - opts.armijo_slope * step * float(g @ g)
                        or step < _STEP_FLOOR):
                    break
                step *= opts.armijo_shrink
            if step < _STEP_FLOOR:
                break
            dk, dg = -step * g, g_new - g
            denom = float(dk @ dg)
            trial = float(dk @ dk) / denom if denom > 0 else 1.0
            trial = min(max(trial, _BB_CLIP[0]), _BB_CLIP[1])
            k, f, g = k_new, f_new, g_new
            total_iters += 1
        if rows is not None and float(np.max(-np.minimum(rows @ k, 0.0))) < 1e-9:
            break
    k = cone.project(k)
    f, _ = _h_and_grad(pts, w, sign, k, c_plus, c_minus)
    return k, f, total_iters, True


# ---------------------------------------------------------------------------
# recursion table
# ---------------------------------------------------------------------------

@dataclass
class RecursionTable:
    """Feedback gains and cost constants from the backward recursion.

    ``k_plus[t]`` / ``k_minus[t]`` are the gains applied below / above
    the wealth threshold over period t; ``c_plus[t]`` / ``c_minus[t]``
    the corresponding cost constants at time t with the terminal
    convention c_plus[T] = c_minus[T] = 1.
    """

    horizon: int
    n_assets: int
    rates: np.ndarray            # gross riskless returns, length T
    k_plus: np.ndarray           # (T, n)
    k_minus: np.ndarray          # (T, n)
    c_plus: np.ndarray           # (T+1,)
    c_minus: np.ndarray          # (T+1,)
    zero_tols: np.ndarray        # (T,)
    backend_info: dict = field(default_factory=dict)
    diagnostics: list = field(default_factory=list)

    def rho(self, t: int) -> float:
        if not 0 <= t <= self.horizon:
            raise ValueError(f"t must lie in [0, {self.horizon}], got {t}")
        return float(np.prod(self.rates[t:]))

    def gain_is_zero(self, t: int, sign: int) -> bool:
        k = self.k_plus[t] if sign > 0 else self.k_minus[t]
        return bool(np.linalg.norm(k) <= self.zero_tols[t])

    def to_dict(self) -> dict:
        return {
            "horizon": self.horizon,
            "n_assets": self.n_assets,
            "riskless_rates": self.rates.tolist(),
            "k_plus": self.k_plus.tolist(),
            "k_minus": self.k_minus.tolist(),
            "c_plus": self.c_plus.tolist(),
            "c_minus": self.c_minus.tolist(),
            "zero_tols": self.zero_tols.tolist(),
            "backend": self.backend_info,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RecursionTable":
        return cls(
            horizon=int(data["horizon"]),
            n_assets=int(data["n_assets"]),
            rates=np.asarray(data["riskless_rates"], dtype=float),
            k_plus=np.asarray(data["k_plus"], dtype=float),
            k_minus=np.asarray(data["k_minus"], dtype=float),
            c_plus=np.asarray(data["c_plus"], dtype=float),
            c_minus=np.asarray(data["c_minus"], dtype=float),
            zero_tols=np.asarray(data["zero_tols"], dtype=float),
            backend_info=data.get("backend", {}),
        )


def default_zero_tol(exact_mean: np.ndarray, exact_second: np.ndarray) -> float:
    k_unc = np.linalg.solve(exact_second, exact_mean)
    return 1e-7 * (1.0 + float(np.linalg.norm(k_unc)))


def _cross_tol(backend, t, sign, k, c_plus, c_minus, opts) -> float:
    if backend.is_exact:
        return opts.cross_tol_exact
    pts, w = backend.points(t), backend.weights(t)
    _, resid, c = _cost_pieces(pts, w, sign, k, c_plus, c_minus)
    diff = c * resid * resid - c * resid
    se = float(np.std(diff)) / np.sqrt(pts.shape[0])
    return max(3.0 * se, 100.0 * opts.tol)


def backward_recursion(market: MarketSpec, cones_by_period,
                       backend, opts: Optional[SolverOptions] = None
                       ) -> RecursionTable:
    """Run the full backward recursion and return the solved table.

    Parameters
    ----------
    market : MarketSpec
        Validated market.
    cones_by_period : ConvexCone or sequence of ConvexCone
        Constraint cone per period (a single cone is broadcast).
    backend : ExactDiscreteBackend or SaaBackend
    opts : SolverOptions, optional
    """
    opts = opts or SolverOptions()
    market.validate()
    T, n = market.horizon, market.n_assets
    if isinstance(cones_by_period, ConvexCone):
        cones_list = [cones_by_period] * T
    else:
        cones_list = list(cones_by_period)
        if len(cones_list) != T:
            raise ValueError(f"need {T} cones, got {len(cones_list)}")
    for cone in cones_list:
        if cone.dim != n:
            raise ValueError(f"cone dimension {cone.dim} != {n}")

    c_plus = np.ones(T + 1)
    c_minus = np.ones(T + 1)
    k_plus = np.zeros((T, n))
    k_minus = np.zeros((T, n))
    zero_tols = np.zeros(T)
    diagnostics = []

    for t in reversed(range(T)):
        period = market.periods[t]
        mean = period.mean
        second = period.second_moment()
        zero_tols[t] = default_zero_tol(mean, second)
        cone = cones_list[t]

        if cone.is_origin_only():
            # Only the riskless position is admissible; the recursion
            # passes the constants through unchanged.
            c_plus[t] = c_plus[t + 1]
            c_minus[t] = c_minus[t + 1]
            diagnostics.append({"t": t, "note": "origin_only_cone"})
            continue

        for sign, k_store, c_store in ((1, k_plus, c_plus),
                                       (-1, k_minus, c_minus)):
            res = minimize_over_cone(
                backend, t, sign, cone, c_plus[t + 1], c_minus[t + 1],
                mean, second, opts, zero_tols[t])
            if res.snapped_zero:
                value = c_plus[t + 1] if sign > 0 else c_minus[t + 1]
            else:
                value = res.value
                lin = linear_form(backend, t, sign, res.k,
                                  c_plus[t + 1], c_minus[t + 1])
                tol = _cross_tol(backend, t, sign, res.k,
                                 c_plus[t + 1], c_minus[t + 1], opts)
                if abs(value - lin) > tol:
                    raise ConsistencyError(
                        f"quadratic/linear cost mismatch at t={t} "
                        f"sign={sign:+d}: {value!r} vs {lin!r} "
                        f"(tol {tol:.3e})")
            k_store[t] = res.k
            c_store[t] = value
            diagnostics.append({
                "t": t, "sign": sign, "iterations": res.iterations,
                "pg_residual": res.pg_residual,
                "complementarity": res.complementarity,
                "vi_min": res.vi_min, "method": res.method,
                "snapped_zero": res.snapped_zero, "value": value,
            })

        next_plus, next_minus = c_plus[t + 1], c_minus[t + 1]
        for c_now, c_next, label in ((c_plus[t], next_plus, "+"),
                                     (c_minus[t], next_minus, "-")):
            if not (0.0 < c_now <= c_next * (1.0 + 1e-12) + 1e-15):
                raise ConsistencyError(
                    f"cost constant out of range at t={t} sign={label}: "
                    f"{c_now!r} vs next {c_next!r}")
        c_plus[t] = min(c_plus[t], next_plus)
        c_minus[t] = min(c_minus[t], next_minus)

    return RecursionTable(
        horizon=T, n_assets=n,
        rates=np.asarray(market.riskless_rates, dtype=float),
        k_plus=k_plus, k_minus=k_minus, c_plus=c_plus, c_minus=c_minus,
        zero_tols=zero_tols, backend_info=backend.describe(),
        diagnostics=diagnostics)


def unconstrained_table(market: MarketSpec) -> RecursionTable:
    """Closed-form table for the unconstrained cone.

    With the whole space admissible the minimisers are the plus/minus
    images of E[PP']^{-1} E[P] and the cost constants collapse to the
    product prod_i (1 - B_i) with B_i = E[P]'E[PP']^{-1}E[P].
    """
    market.validate()
    T, n = market.horizon, market.n_assets
    k_plus = np.zeros((T, n))
    k_minus = np.zeros((T, n))
    b = np.zeros(T)
    zero_tols = np.zeros(T)
    for t, period in enumerate(market.periods):
        second = period.second_moment()
        k_unc = np.linalg.solve(second, period.mean)
        k_plus[t] = k_unc
        k_minus[t] = -k_unc
        b[t] = float(period.mean @ k_unc)
        zero_tols[t] = default_zero_tol(period.mean, second)
    c = np.ones(T + 1)
    for t in reversed(range(T)):
        c[t] = (1.0 - b[t]) * c[t + 1]
    return RecursionTable(
        horizon=T, n_assets=n,
        rates=np.asarray(market.riskless_rates, dtype=float),
        k_plus=k_plus, k_minus=k_minus,
        c_plus=c.copy(), c_minus=c.copy(),
        zero_tols=zero_tols,
        backend_info={"kind": "closed_form_unconstrained"},
        diagnostics=[{"t": t, "note": "closed_form", "b": float(b[t])}
                     for t in range(T)])


# ---------------------------------------------------------------------------
# value function and dual
# ---------------------------------------------------------------------------

def value_function(table: RecursionTable, t: int, y) -> np.ndarray | float:
    """Optimal cost-to-go 0.5 rho_t^2 [C_t^+ y^2 (y <= 0) + C_t^- y^2 (y > 0)]
    as a function of the shifted wealth y at time t."""
    if not 0 <= t <= table.horizon:
        raise ValueError(f"t must lie in [0, {table.horizon}], got {t}")
    y_arr = np.asarray(y, dtype=float)
    c = np.where(y_arr <= 0.0, table.c_plus[t], table.c_minus[t])
    out = 0.5 * table.rho(t) ** 2 * c * y_arr * y_arr
    return float(out) if np.isscalar(y) or y_arr.ndim == 0 else out


def dual_value(table: RecursionTable, x0: float, d: float, mu) -> np.ndarray | float:
    """Concave dual objective g(mu) whose maximiser is the optimal
    multiplier and whose maximum is the optimal variance."""
    mu_arr = np.asarray(mu, dtype=float)
    gap = d - table.rho(0) * x0
    c = np.where(mu_arr <= gap, table.c_plus[0], table.c_minus[0])
    out = c * (gap - mu_arr) ** 2 - mu_arr ** 2
    return float(out) if np.isscalar(mu) or mu_arr.ndim == 0 else out
