"""Command line front end: ``solve``, ``simulate`` and ``verify``.

Exit codes: 0 success, 1 I/O or parse error, 2 validation error,
3 verification failure.
"""

from __future__ import annotations

import argparse
import io
import math
import os
import sys

import numpy as np

from . import __version__
from .errors import DomainError, InvalidInputError, ValidationError
from .scenario_io import ScenarioFormatError, dumps, load_parameter_path, load_scenario, scenario_to_dict, write_atomic
from .simulator import PathConfig, Scheme, summarize
from .solver import RobustSolution, solve, value_at
from .utility import check_wealth_domain
from .verification import (
    expected_utility_table,
    hjb_residual,
    martingale_check,
    optimal_strategy,
    saddle_point_scan,
    sample_interior_points,
    shape_check,
    simulate_terminal_wealth,
    worst_case_path,
)

EXIT_OK, EXIT_IO, EXIT_INVALID, EXIT_VERIFY = 0, 1, 2, 3
SEED_ENV = "ROBUST_MERTON_SEED"
SUITES = ("saddle", "hjb", "martingale", "shape")

HJB_TOLERANCE = 1e-6
GAP_TOLERANCE = 1e-8


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _tool() -> dict:
    return {"name": "robust-merton", "version": __version__}


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    return int(raw) if raw else 0


def _solution_summary(sol: RobustSolution) -> list[dict]:
    kind = "cash" if sol.cash_strategy else "fraction"
    return [
        {
            "index": c.cell_index,
            "t_start": c.t_start,
            "t_end": c.t_end,
            "mu_star": c.mu_star.tolist(),
            "C": c.eig_max,
            "strategy": c.strategy.tolist(),
            "strategy_kind": kind,
            "rate": c.rate,
        }
        for c in sol.cells
    ]


def _parse_point(text: str) -> tuple[float, float]:
    try:
        t, x = (float(v) for v in text.split(","))
    except ValueError:
        raise _UsageError(f"--at expects 't,x', got {text!r}") from None
    return t, x


def cmd_solve(args) -> int:
    scenario = load_scenario(args.scenario)
    sol = solve(scenario)
    values = [{"t": t, "x": x, "value": float(value_at(sol, t, x))} for t, x in map(_parse_point, args.at)]
    report = {
        "tool": _tool(),
        "scenario": scenario_to_dict(scenario),
        "cells": _solution_summary(sol),
        "value_t0_x0": float(value_at(sol, 0.0, scenario.x0)),
        "values": values,
    }
    write_atomic(args.output, dumps(report))
    return EXIT_OK


def cmd_simulate(args) -> int:
    scenario = load_scenario(args.scenario)
    sol = solve(scenario)
    seed = _default_seed() if args.seed is None else args.seed
    config = PathConfig(args.paths, args.steps_per_year, seed, Scheme(args.scheme), args.workers)
    path = worst_case_path(sol) if args.theta == "worst" else load_parameter_path(args.theta)
    if path.dim != scenario.d or path.t0 != 0.0 or path.horizon != scenario.horizon:
        raise InvalidInputError("parameter path must span [0, T] in the scenario's dimension")
    wealth = simulate_terminal_wealth(sol, optimal_strategy(sol), path, scenario.x0, config)
    growth = math.exp(scenario.r * scenario.horizon)
    undiscounted = wealth * growth
    check_wealth_domain(sol.utility, wealth)
    utility = np.asarray(sol.utility(wealth), dtype=float)

    buf = io.StringIO()
    buf.write("path_id,terminal_wealth,terminal_wealth_undiscounted,utility_value\n")
    for i, (w, wu, u) in enumerate(zip(wealth, undiscounted, utility)):
        buf.write(f"{i},{_fmt(w)},{_fmt(wu)},{_fmt(u)}\n")
    cols = [summarize(wealth), summarize(undiscounted), summarize(utility)]
    buf.write("mean," + ",".join(_fmt(c.mean) for c in cols) + "\n")
    buf.write("std_error," + ",".join(_fmt(c.std_error) for c in cols) + "\n")
    write_atomic(args.output, buf.getvalue())

    v0 = float(value_at(sol, 0.0, scenario.x0))
    est = cols[2]
    print(
        f"paths={config.n_paths} seed={seed} mean_utility={_fmt(est.mean)} "
        f"std_error={_fmt(est.std_error)} V(0,x0)={_fmt(v0)} z={_fmt((est.mean - v0) / est.std_error) if est.std_error else 'nan'}"
    )
    return EXIT_OK


def _run_saddle(sol: RobustSolution, seed: int) -> dict:
    out = []
    sc = sol.scenario
    for i, cell in enumerate(sol.cells):
        rep = saddle_point_scan(sc, i, seed=seed)
        pi_ok = bool(np.all(np.abs(rep.arg_pi - cell.strategy) <= rep.step * (1 + 1e-9)))
        theta_ok = bool(np.allclose(rep.arg_theta[0], cell.mu_star, atol=1e-12) and np.allclose(rep.arg_theta[1], cell.sigma_star, atol=1e-12))
        if not theta_ok:
            # the worst case is not unique when pi* = 0; accept any tied theta
            tied, star = (
                expected_utility_table(cell.strategy[None], mu[None], cov[None], cell.length, sc.x0, sc.r, sc.utility)[0, 0]
                for mu, cov in (rep.arg_theta, (cell.mu_star, cell.sigma_star))
            )
            theta_ok = bool(abs(tied - star) <= 1e-12 * max(1.0, abs(star)))
        passed = pi_ok and theta_ok and rep.gap <= GAP_TOLERANCE and bool(rep.worst_case_certified)
        out.append(
            {
                "cell": i,
                "maximin": rep.maximin,
                "minimax": rep.minimax,
                "gap": rep.gap,
                "arg_pi": rep.arg_pi.tolist(),
                "analytic_pi": cell.strategy.tolist(),
                "arg_mu": rep.arg_theta[0].tolist(),
                "arg_sigma": rep.arg_theta[1].tolist(),
                "worst_case_certified": rep.worst_case_certified,
                "grid": rep.grid,
                "pass": passed,
            }
        )
    return {"cells": out, "pass": all(c["pass"] for c in out)}


def _run_hjb(sol: RobustSolution, seed: int) -> dict:
    pts = sample_interior_points(sol, 100, seed)
    rep = hjb_residual(sol, pts)
    worst = rep.max_abs_relative_residual
    return {"n_points": int(len(pts)), "max_relative_residual": worst, "tolerance": HJB_TOLERANCE, "pass": worst <= HJB_TOLERANCE}


def _run_martingale(sol: RobustSolution, config: PathConfig) -> dict:
    s, t = 0.0, 0.5 * sol.horizon
    strat = optimal_strategy(sol)
    out = {}
    for name, candidate in (("optimal", strat), ("perturbed", strat.shifted(0.5))):
        rep = martingale_check(sol, candidate, s, t, config)
        out[name] = {
            "s": s,
            "t": t,
            "estimate": rep.lhs.mean,
            "std_error": rep.lhs.std_error,
            "n_paths": rep.n_paths_used,
            "value_s": rep.rhs,
            "verdict": rep.verdict,
            "strictly_below": rep.strictly_below,
        }
    out["pass"] = out["optimal"]["verdict"] and out["perturbed"]["verdict"] and out["perturbed"]["strictly_below"]
    return out


def _run_shape(sol: RobustSolution, seed: int) -> dict:
    rng = np.random.default_rng(seed)
    x_grid = sol.scenario.x0 * np.logspace(-2, 2, 50)
    times = np.sort(rng.uniform(0.0, sol.horizon, 10))
    reps = [shape_check(sol, float(t), x_grid) for t in times]
    return {
        "times": times.tolist(),
        "increasing": [r.increasing for r in reps],
        "concave": [r.concave for r in reps],
        "pass": all(r.passed for r in reps),
    }


def cmd_verify(args) -> int:
    suites = SUITES if args.suite == "all" else (args.suite,)
    if args.suite != "all" and args.suite not in SUITES:
        raise _UsageError(f"unknown suite {args.suite!r}; choose from {', '.join(SUITES + ('all',))}")
    scenario = load_scenario(args.scenario)
    sol = solve(scenario)
    if args.inject_rate_scale != 1.0:
        sol = sol.with_rate_scale(args.inject_rate_scale)
    seed = _default_seed() if args.seed is None else args.seed
    config = PathConfig(args.paths, args.steps_per_year, seed, Scheme.EXACT, args.workers)
    results = {}
    for name in suites:
        if name == "saddle":
            results[name] = _run_saddle(sol, seed)
        elif name == "hjb":
            results[name] = _run_hjb(sol, seed)
        elif name == "martingale":
            results[name] = _run_martingale(sol, config)
        else:
            results[name] = _run_shape(sol, seed)
    passed = all(r["pass"] for r in results.values())
    report = {
        "tool": _tool(),
        "scenario": scenario_to_dict(scenario),
        "seed": seed,
        "paths": args.paths,
        "steps_per_year": args.steps_per_year,
        "inject_rate_scale": args.inject_rate_scale,
        "suites": results,
        "pass": passed,
    }
    write_atomic(args.output, dumps(report))
    for name, r in results.items():
        print(f"{name}: {'PASS' if r['pass'] else 'FAIL'}")
    return EXIT_OK if passed else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="robust-merton", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="closed-form robust strategy and value")
    p.add_argument("scenario")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--at", action="append", default=[], metavar="T,X", help="extra (t, x) points to evaluate")
    p.set_defaults(func=cmd_solve)

    def sim_opts(q, paths):
        q.add_argument("--paths", type=int, default=paths)
        q.add_argument("--steps-per-year", type=int, default=252)
        q.add_argument("--seed", type=int, default=None, help=f"defaults to ${SEED_ENV} or 0")
        q.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("simulate", help="Monte Carlo of the optimal strategy")
    p.add_argument("scenario")
    p.add_argument("-o", "--output", required=True)
    sim_opts(p, 100_000)
    p.add_argument("--theta", default="worst", help="'worst' or a parameter-path JSON file")
    p.add_argument("--scheme", default="exact", choices=[s.value for s in Scheme])
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="run verification suites")
    p.add_argument("scenario")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--suite", default="all")
    p.add_argument("--inject-rate-scale", type=float, default=1.0)
    sim_opts(p, 100_000)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValidationError as exc:
        print(f"validation failed: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (InvalidInputError, DomainError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (OSError, ScenarioFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
