"""Command-line interface.

Subcommands: solve, frontier, simulate, tcie, vssm, make-cone.  All
read a JSON run configuration (see :mod:`conemv.config`); results go
to stdout or --out.  Exit codes: 0 success, 1 runtime failure
(non-convergence, unattainable target), 2 configuration problems.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys

import numpy as np

from . import policy as policy_mod
from . import sim, tcie, vssm
from .cones import construct_tcie_cone
from .config import parse_config
from .errors import ConemvError, ConfigError, InvalidMarket, InvalidTarget, \
    TargetUnattainable
from .errors import InvalidCone
from .solver import backward_recursion

_CONFIG_ERRORS = (ConfigError, InvalidMarket, InvalidCone)


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)!r}")


def _emit(text: str, out_path) -> None:
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")


def _emit_json(payload, out_path) -> None:
    _emit(json.dumps(payload, indent=2, default=_json_default), out_path)


def _load_config(args):
    if not args.config:
        raise ConfigError("--config is required")
    try:
        with open(args.config) as fh:
            data = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {args.config}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    cfg = parse_config(data)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.samples is not None:
        cfg.samples = args.samples
    return cfg


def _solve_table(cfg):
    backend = cfg.make_backend()
    return backward_recursion(cfg.market, cfg.cones, backend,
                              cfg.solver_options), backend


def _build_policy(cfg, table):
    kind = cfg.policy_kind
    if kind == "precommitted":
        return policy_mod.precommitted(table, cfg.x0, cfg.d)
    if kind == "minimum_variance":
        return policy_mod.minimum_variance(table, cfg.x0)
    if kind == "time_consistent":
        return policy_mod.time_consistent(cfg.market, cfg.x0, cfg.d)
    return policy_mod.truncated(table, cfg.truncate_k, cfg.truncate_x_k,
                                cfg.truncate_d_k)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_solve(args) -> int:
    cfg = _load_config(args)
    table, _ = _solve_table(cfg)
    payload = table.to_dict()
    if cfg.policy_kind == "precommitted":
        try:
            mu = policy_mod.mu_star(table, cfg.x0, cfg.d)
            payload["policy"] = {
                "kind": "precommitted", "x0": cfg.x0, "d": cfg.d,
                "mu_star": mu,
                "thresholds": {t: (cfg.d - mu) / table.rho(t)
                               for t in range(table.horizon + 1)},
            }
        except TargetUnattainable as exc:
            payload["policy"] = {"kind": "precommitted", "x0": cfg.x0,
                                 "d": cfg.d, "error": str(exc)}
    _emit_json(payload, args.out)
    return 0


def cmd_frontier(args) -> int:
    cfg = _load_config(args)
    table, _ = _solve_table(cfg)
    aux = None
    try:
        aux = policy_mod.time_consistent_aux(cfg.market)
    except ConemvError:
        pass
    riskless = table.rho(0) * cfg.x0
    grid = np.linspace(args.mean_min, args.mean_max, args.points)
    rows = []
    for mean in grid:
        if mean < riskless and not args.include_lower_branch:
            continue
        try:
            fp = policy_mod.frontier_point(table, cfg.x0, float(mean))
            var, eff = f"{fp.variance:.12g}", fp.efficient
        except TargetUnattainable:
            var, eff = "NA", False
        tc_var = "NA"
        if aux is not None and mean >= riskless:
            tc_var = f"{policy_mod.tc_frontier_point(aux, cfg.x0, float(mean)).variance:.12g}"
        rows.append({"mean": f"{mean:.12g}",
                     "variance_precommitted": var,
                     "variance_time_consistent": tc_var,
                     "efficient": str(eff).lower()})
    if args.format == "json":
        _emit_json(rows, args.out)
    else:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=[
            "mean", "variance_precommitted", "variance_time_consistent",
            "efficient"])
        writer.writeheader()
        writer.writerows(rows)
        _emit(buf.getvalue(), args.out)
    return 0


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    table, _ = _solve_table(cfg)
    pol = _build_policy(cfg, table)
    ensemble = sim.simulate(pol, cfg.market, n_paths=args.paths,
                            seed=cfg.seed)
    stats = sim.terminal_stats(ensemble)
    payload = {
        "policy": cfg.policy_kind,
        "n_paths": ensemble.n_paths,
        "seed": cfg.seed,
        "terminal": {
            "mean": stats.mean, "variance": stats.variance,
            "se_mean": stats.se_mean, "se_variance": stats.se_variance,
        },
    }
    if pol.kind in ("precommitted", "truncated"):
        thresholds = sim.policy_thresholds(pol)
        report = sim.exceedance_prob(ensemble, thresholds)
        payload["exceedance"] = {
            "probability": report.probability,
            "standard_error": report.standard_error,
            "first_crossing_counts": {str(t): c for t, c
                                      in report.first_crossing_counts.items()},
            "thresholds": {str(t): v for t, v in report.thresholds.items()},
        }
    _emit_json(payload, args.out)
    return 0


def cmd_tcie(args) -> int:
    cfg = _load_config(args)
    table, backend = _solve_table(cfg)
    verdict = tcie.check_tcie(table, cfg.market)
    probs = [tcie.transition_probs(table, cfg.market, t, backend=backend)
             for t in range(table.horizon)]
    payload = {
        "is_tcie": verdict.is_tcie,
        "reason": verdict.reason,
        "flip_period": verdict.flip_period,
        "first_violation_period": verdict.first_violation_period,
        "evidence": verdict.evidence,
        "periods": [{
            "t": p.t, "ess_sup_plus": p.ess_sup_plus,
            "can_cross": p.can_cross, "k_minus_norm": p.k_minus_norm,
            "c_minus": p.c_minus,
            "transition": {
                "stay_below": probs[p.t].stay_below,
                "cross_up": probs[p.t].cross_up,
                "return_from_above": probs[p.t].return_from_above,
                "stay_above": probs[p.t].stay_above,
                "standard_error": probs[p.t].standard_error,
            },
        } for p in verdict.periods],
    }
    try:
        mu = policy_mod.mu_star(table, cfg.x0, cfg.d)
        payload["thresholds"] = {
            str(t): (cfg.d - mu) / table.rho(t)
            for t in range(table.horizon + 1)}
    except TargetUnattainable:
        pass
    _emit_json(payload, args.out)
    return 0


def cmd_vssm(args) -> int:
    cfg = _load_config(args)
    table, _ = _solve_table(cfg)
    payload = {"theoretical": {
        "mean": 1.0, "second_moment": 1.0 / table.c_plus[0]}}
    if cfg.backend_kind == "exact":
        mean, second = vssm.exact_density_moments(table, cfg.market)
        report = vssm.supermartingale_check(table, cfg.market, cfg.cones)
        payload["exact"] = {"mean": mean, "second_moment": second,
                            "supermartingale_ok": report.ok}
    returns = sim.sample_returns(cfg.market, args.paths, cfg.seed)
    dens = vssm.density_for_paths(table, returns)
    n = dens.shape[0]
    payload["monte_carlo"] = {
        "n_paths": n,
        "seed": cfg.seed,
        "mean": float(dens.mean()),
        "se_mean": float(dens.std(ddof=1) / np.sqrt(n)),
        "second_moment": float((dens ** 2).mean()),
        "se_second_moment": float((dens ** 2).std(ddof=1) / np.sqrt(n)),
        "negative_fraction": float((dens < 0).mean()),
        "zero_density_paths": int((dens == 0.0).sum()),
    }
    _emit_json(payload, args.out)
    return 0


def cmd_make_cone(args) -> int:
    cfg = _load_config(args)
    if not args.from_mean:
        raise ConfigError("make-cone currently requires --from-mean")
    cone = construct_tcie_cone(cfg.market.periods[0].mean)
    _emit_json(cone.to_dict(), args.out)
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", help="path to JSON run configuration")
    shared.add_argument("--seed", type=int, default=None,
                        help="override the configured seed")
    shared.add_argument("--samples", type=int, default=None,
                        help="override the configured SAA sample count")
    shared.add_argument("--out", default=None,
                        help="write output to this path instead of stdout")
    shared.add_argument("--format", choices=("json", "csv"), default=None,
                        help="output format (csv applies to frontier only)")

    parser = argparse.ArgumentParser(
        prog="conemv",
        description="Cone-constrained multi-period mean-variance solver")
    subs = parser.add_subparsers(dest="command", required=True)

    subs.add_parser("solve", parents=[shared],
                    help="run the backward recursion").set_defaults(
        func=cmd_solve)

    p_front = subs.add_parser("frontier", parents=[shared],
                              help="efficient frontier on a mean grid")
    p_front.add_argument("--mean-min", type=float, required=True)
    p_front.add_argument("--mean-max", type=float, required=True)
    p_front.add_argument("--points", type=int, default=50)
    p_front.add_argument("--include-lower-branch", action="store_true")
    p_front.set_defaults(func=cmd_frontier)

    p_sim = subs.add_parser("simulate", parents=[shared],
                            help="Monte Carlo under the configured policy")
    p_sim.add_argument("--paths", type=int, default=sim.DEFAULT_PATHS)
    p_sim.set_defaults(func=cmd_simulate)

    subs.add_parser("tcie", parents=[shared],
                    help="time-consistency-in-efficiency verdict"
                    ).set_defaults(func=cmd_tcie)

    p_vssm = subs.add_parser("vssm", parents=[shared],
                             help="density moments of the attached measure")
    p_vssm.add_argument("--paths", type=int, default=sim.DEFAULT_PATHS)
    p_vssm.set_defaults(func=cmd_vssm)

    p_cone = subs.add_parser("make-cone", parents=[shared],
                             help="construct an efficiency-preserving cone")
    p_cone.add_argument("--from-mean", action="store_true",
                        help="use the market's mean excess return")
    p_cone.set_defaults(func=cmd_make_cone)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.format == "csv" and args.command != "frontier":
        print("error: csv output applies to 'frontier' only",
              file=sys.stderr)
        return 2
    if args.format is None:
        args.format = "csv" if args.command == "frontier" else "json"
    try:
        return args.func(args)
    except _CONFIG_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (InvalidTarget, TargetUnattainable, ConemvError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
