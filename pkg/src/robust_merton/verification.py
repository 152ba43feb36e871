"""Independent checks of the closed-form robust solution.

Nothing here reuses the solver's formulas for strategies or rates: the saddle
scan works from exact expected utilities under constant parameters, the HJB
check differentiates ``value_at`` numerically, and the martingale check
simulates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from .errors import InadmissibleStrategyError, InvalidInputError
from .simulator import (
    ParameterPath,
    PathConfig,
    Segment,
    SimEstimate,
    StepFunction,
    simulate_wealth_cash,
    simulate_wealth_fraction,
    summarize,
)
from .solver import RobustSolution, Scenario, solve, value_at
from .uncertainty import covariance_candidates, drift_candidates
from .utility import ExponentialUtility, LogUtility, PowerUtility, UtilitySpec, check_wealth_domain


# --- bridges from a solution to simulator inputs ----------------------------


def worst_case_path(solution: RobustSolution) -> ParameterPath:
    return ParameterPath(
        [Segment(c.t_start, c.t_end, c.mu_star, np.sqrt(c.eig_max) * np.eye(len(c.mu_star))) for c in solution.cells]
    )


def optimal_strategy(solution: RobustSolution) -> StepFunction:
    """Per-cell fractions (log/power) or cash amounts (exponential)."""
    knots = [c.t_start for c in solution.cells] + [solution.horizon]
    return StepFunction(np.array(knots), np.array([c.strategy for c in solution.cells]))


def simulate_terminal_wealth(
    solution: RobustSolution, strategy: StepFunction, path: ParameterPath, x0: float, config: PathConfig
) -> NDArray[np.float64]:
    r = solution.scenario.r
    if solution.cash_strategy:
        return simulate_wealth_cash(path, strategy, x0, config, r)
    return simulate_wealth_fraction(path, strategy, x0, config, r)


# --- exact expected utility under constant parameters -----------------------


def _moments(pi, mu, cov, r):
    pi = np.atleast_2d(np.asarray(pi, dtype=float))
    mu = np.atleast_2d(np.asarray(mu, dtype=float))
    cov = np.asarray(cov, dtype=float).reshape(-1, pi.shape[1], pi.shape[1])
    excess = pi @ (mu - r).T  # (n_pi, n_theta)
    quad = np.einsum("pi,kij,pj->pk", pi, cov, pi)
    return excess, quad


def expected_utility_table(pis, mus, covs, horizon: float, x: float, r: float, utility: UtilitySpec):
    """Matrix ``E[u(X_h)]`` for every strategy row against every ``(mu_k, cov_k)`` column."""
    a, q = _moments(pis, mus, covs, r)
    h = horizon
    if isinstance(utility, LogUtility):
        return math.log(x) + (a - 0.5 * q) * h
    if isinstance(utility, PowerUtility):
        g = utility.gamma
        return x**g * np.exp(g * (a - 0.5 * q) * h + 0.5 * g * g * q * h)
    if isinstance(utility, ExponentialUtility):
        b = utility.beta
        return -b * np.exp(-b * x - b * a * h + 0.5 * b * b * q * h)
    raise InvalidInputError(f"unsupported utility {utility!r}")


def analytic_expected_utility(pi, theta, horizon: float, x: float, r: float, utility: UtilitySpec) -> float:
    """Exact ``E[u(X_h)]`` for a constant strategy under constant ``theta = (mu, Sigma)``.

    ``pi`` is a wealth fraction for log/power and a cash amount for exponential.
    """
    mu, cov = theta
    pi = np.atleast_1d(np.asarray(pi, dtype=float))
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    if not (np.all(np.isfinite(pi)) and np.all(np.isfinite(mu)) and np.all(np.isfinite(cov))):
        raise InvalidInputError("strategy and parameters must be finite")
    if pi.shape != mu.shape or cov.shape != (len(mu), len(mu)):
        raise InvalidInputError("dimension mismatch between strategy and parameters")
    if np.linalg.eigvalsh(0.5 * (cov + cov.T)).min() < -1e-12 * max(1.0, np.abs(cov).max()):
        raise InvalidInputError("covariance must be positive semidefinite")
    if not horizon >= 0:
        raise InvalidInputError("horizon must be non-negative")
    check_wealth_domain(utility, x)
    return float(expected_utility_table(pi[None, :], mu[None, :], cov[None], horizon, x, r, utility)[0, 0])


# --- saddle-point scan -------------------------------------------------------


@dataclass
class SaddleScanReport:
    maximin: float
    minimax: float
    arg_pi: NDArray[np.float64]
    arg_theta: tuple[NDArray[np.float64], NDArray[np.float64]]
    gap: float
    grid: dict
    analytic_pi: NDArray[np.float64] | None = None
    worst_case_certified: bool | None = None

    @property
    def step(self) -> float:
        return self.grid["final_step"]


def default_pi_box(solution: RobustSolution, cell_index: int) -> tuple[NDArray, NDArray]:
    """Symmetric box around 0 covering the analytic strategy with at least 100% margin."""
    target = np.abs(solution.cells[cell_index].strategy)
    half = np.maximum(2.0, 2.0 * target)
    return -half, half


def _centered_grid(center, half_width, step):
    axes = [c + np.arange(-n, n + 1) * step for c, n in zip(center, np.ceil(np.asarray(half_width) / step).astype(int))]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _scan(pis, mus, covs, horizon, x, r, utility):
    table = expected_utility_table(pis, mus, covs, horizon, x, r, utility)
    worst = table.min(axis=1)
    i = int(np.argmax(worst))
    best = table.max(axis=0)
    k = int(np.argmin(best))
    return float(worst[i]), float(best[k]), i, k


def saddle_point_scan(
    scenario: Scenario,
    cell_index: int = 0,
    pi_bounds: tuple[Sequence[float], Sequence[float]] | None = None,
    step: float | None = None,
    mus: Sequence | None = None,
    covs: Sequence | None = None,
    refinements: int = 10,
    n_random_cov: int = 50,
    seed: int = 0,
    max_points: int = 40_000,
) -> SaddleScanReport:
    """Brute-force max-min and min-max of the one-cell expected utility.

    The strategy grid is a box (``pi_bounds``) with spacing ``step``; the
    adversary picks from ``mus x covs``, by default the drift set's extreme
    points with the projection of ``r * 1``, and ``eig_min I``, ``eig_max I``
    plus ``n_random_cov`` random members of the covariance set.  The grid is
    then refined ``refinements`` times around the max-min strategy, halving
    the spacing each time.
    """
    cell = scenario.schedule[cell_index]
    d, r, x = scenario.d, scenario.r, scenario.x0
    horizon = cell.length
    mus = np.asarray(drift_candidates(cell, r) if mus is None else mus, dtype=float).reshape(-1, d)
    covs = np.asarray(covariance_candidates(cell, n_random_cov, seed) if covs is None else covs, dtype=float)
    covs = covs.reshape(-1, d, d)
    if len(mus) == 0 or len(covs) == 0:
        raise InvalidInputError("theta candidate set is empty")
    theta_mu = np.repeat(mus, len(covs), axis=0)
    theta_cov = np.tile(covs, (len(mus), 1, 1))

    if pi_bounds is None:
        lo, hi = default_pi_box(solve(scenario), cell_index)
    else:
        lo, hi = (np.atleast_1d(np.asarray(b, dtype=float)) for b in pi_bounds)
    if lo.shape != (d,) or hi.shape != (d,) or np.any(hi < lo):
        raise InvalidInputError("pi grid bounds are empty or have the wrong dimension")
    if step is None:
        per_axis = max(3, int(max_points ** (1.0 / d)))
        step = max(1e-3, float(np.max(hi - lo)) / (per_axis - 1))
    if not step > 0:
        raise InvalidInputError("grid step must be positive")
    center = 0.5 * (lo + hi)
    pis = _centered_grid(center, 0.5 * (hi - lo), step)
    if len(pis) == 0:
        raise InvalidInputError("pi grid is empty")

    maximin, minimax, i, k = _scan(pis, theta_mu, theta_cov, horizon, x, r, scenario.utility)
    arg_pi = pis[i]
    coarse_step = step
    for _ in range(refinements):
        step /= 2.0
        local = _centered_grid(arg_pi, np.full(d, 10 * step), step)
        maximin, minimax, i, k = _scan(local, theta_mu, theta_cov, horizon, x, r, scenario.utility)
        arg_pi = local[i]

    sol = solve(scenario)
    cs = sol.cells[cell_index]
    analytic_value = expected_utility_table(cs.strategy[None, :], theta_mu, theta_cov, horizon, x, r, scenario.utility)[0]
    star = expected_utility_table(
        cs.strategy[None, :], cs.mu_star[None, :], cs.sigma_star[None], horizon, x, r, scenario.utility
    )[0, 0]
    certified = bool(analytic_value.min() >= star - 1e-12 * max(1.0, abs(star)))

    grid = {
        "lower": lo.tolist(),
        "upper": hi.tolist(),
        "coarse_step": coarse_step,
        "refinements": refinements,
        "final_step": step,
        "n_theta": int(len(theta_mu)),
        "n_random_cov": n_random_cov,
        "seed": seed,
        "horizon": horizon,
        "x": x,
    }
    return SaddleScanReport(
        maximin=maximin,
        minimax=minimax,
        arg_pi=arg_pi,
        arg_theta=(theta_mu[k], theta_cov[k]),
        gap=minimax - maximin,
        grid=grid,
        analytic_pi=cs.strategy,
        worst_case_certified=certified,
    )


# --- HJB residual ------------------------------------------------------------


@dataclass
class ResidualReport:
    points: NDArray[np.float64]
    residuals: NDArray[np.float64]
    relative: NDArray[np.float64]

    @property
    def max_abs_relative_residual(self) -> float:
        return float(np.max(np.abs(self.relative))) if self.relative.size else 0.0


def sample_interior_points(
    solution: RobustSolution, per_cell: int = 100, seed: int = 0, x_range: tuple[float, float] | None = None
) -> NDArray[np.float64]:
    """Random ``(t, x)`` pairs strictly inside each cell, away from the time stencil reach."""
    rng = np.random.default_rng(seed)
    T = solution.horizon
    margin = 2e-5 * T
    if x_range is None:
        x0 = solution.scenario.x0
        x_range = (0.5 * x0, 2.0 * x0)
    pts = []
    for c in solution.cells:
        lo, hi = c.t_start + margin, c.t_end - margin
        if hi <= lo:
            continue
        t = rng.uniform(lo, hi, per_cell)
        x = np.exp(rng.uniform(math.log(x_range[0]), math.log(x_range[1]), per_cell))
        pts.append(np.column_stack([t, x]))
    return np.vstack(pts)


def hjb_residual(solution: RobustSolution, points, x_rel_step: float = 2e-4, t_rel_step: float = 1e-5) -> ResidualReport:
    """Plug the cell's worst case and strategy into the HJB equation with numerical derivatives.

    For wealth fractions the residual is
    ``V_t + x pi.(mu - r) V_x + x^2/2 pi' Sigma pi V_xx``; for cash amounts the
    ``x`` factors drop out.  Each residual is divided by the sum of the three
    terms' magnitudes.

    Derivatives are central differences.  The wealth step is ``x_rel_step``
    times ``x`` (times ``max(x, 1/beta)`` for exponential utility); at 1e-5
    rounding in the second difference alone reaches ~1e-6 relative.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    T = solution.horizon
    kt = t_rel_step * T
    r = solution.scenario.r
    res, rel = [], []
    for t, x in points:
        cell = solution.cell_at(t)
        if not (cell.t_start < t - kt and t + kt < cell.t_end):
            raise InvalidInputError(f"t={t} is on or too close to a cell boundary")
        if not x > 0:
            raise InvalidInputError("x must be positive")
        hx = x_rel_step * (max(x, 1.0 / solution.utility.beta) if solution.cash_strategy else x)
        xp, xm = x + hx, x - hx
        hp, hm = xp - x, x - xm
        v0 = value_at(solution, t, x)
        vp, vm = value_at(solution, t, xp), value_at(solution, t, xm)
        v_x = (vp - vm) / (hp + hm)
        v_xx = 2.0 * (hm * vp - (hp + hm) * v0 + hp * vm) / (hp * hm * (hp + hm))
        tp, tm = t + kt, t - kt
        v_t = (value_at(solution, tp, x) - value_at(solution, tm, x)) / (tp - tm)
        p = cell.strategy
        excess = float(p @ (cell.mu_star - r))
        quad = float(p @ cell.sigma_star @ p)
        if solution.cash_strategy:
            drift, diffusion = excess * v_x, 0.5 * quad * v_xx
        else:
            drift, diffusion = x * excess * v_x, 0.5 * x * x * quad * v_xx
        total = v_t + drift + diffusion
        scale = abs(v_t) + abs(drift) + abs(diffusion)
        res.append(total)
        rel.append(total / scale if scale > 0 else total)
    return ResidualReport(points, np.array(res), np.array(rel))


# --- martingale optimality ---------------------------------------------------


@dataclass
class MartingaleReport:
    lhs: SimEstimate
    rhs: float
    optimal: bool
    verdict: bool
    strictly_below: bool
    n_paths_used: int
    history: list[tuple[int, float, float]] = field(default_factory=list)

    @property
    def deficit(self) -> float:
        return self.rhs - self.lhs.mean


def _same_strategy(a: StepFunction, b: StepFunction) -> bool:
    return a.knots.shape == b.knots.shape and np.array_equal(a.knots, b.knots) and np.array_equal(a.values, b.values)


def martingale_check(
    solution: RobustSolution,
    strategy: StepFunction,
    s: float,
    t: float,
    config: PathConfig,
    x: float | None = None,
    scale_paths: bool = True,
    max_paths: int = 3_200_000,
    n_se: float = 3.0,
) -> MartingaleReport:
    """Estimate ``E[v(t, X_t) | X_s = x]`` under the worst-case parameters.

    For the solution's own strategy the estimate must match ``v(s, x)``
    within ``n_se`` standard errors; for any other strategy it must not
    exceed ``v(s, x) + n_se * SE``.  With ``scale_paths`` the path count for a
    non-optimal strategy is doubled until ``SE < deficit / 5`` (or
    ``max_paths`` is reached), so ``strictly_below`` has power.
    """
    T = solution.horizon
    x = solution.scenario.x0 if x is None else float(x)
    if not 0.0 <= s <= t <= T:
        raise InvalidInputError(f"need 0 <= s <= t <= T, got s={s}, t={t}")
    if not np.all(np.isfinite(strategy.values)):
        raise InadmissibleStrategyError("strategy has non-finite entries")
    if strategy.values.shape[1] != solution.scenario.d:
        raise InadmissibleStrategyError("strategy dimension does not match the market")
    if strategy.knots[0] > s or strategy.knots[-1] < t:
        raise InadmissibleStrategyError("strategy is not defined on the whole interval [s, t]")
    rhs = float(value_at(solution, s, x))
    optimal = _same_strategy(strategy, optimal_strategy(solution))
    if t == s:
        est = SimEstimate(rhs, 0.0, 0, config.seed)
        return MartingaleReport(est, rhs, optimal, True, False, 0)

    path = worst_case_path(solution).restrict(s, t)
    n = config.n_paths
    history = []
    while True:
        cfg = PathConfig(n, config.steps_per_year, config.seed, config.scheme, config.workers)
        wealth = simulate_terminal_wealth(solution, strategy, path, x, cfg)
        if not solution.cash_strategy and np.any(wealth <= 0):
            raise InadmissibleStrategyError("wealth reached zero")
        est = summarize(value_at(solution, t, wealth), config.seed)
        history.append((n, est.mean, est.std_error))
        deficit = rhs - est.mean
        if optimal or not scale_paths or est.std_error < deficit / 5.0 or 2 * n > max_paths:
            break
        n *= 2
    if optimal:
        verdict = abs(est.mean - rhs) <= n_se * est.std_error
    else:
        verdict = est.mean <= rhs + n_se * est.std_error
    strictly_below = rhs - est.mean >= n_se * est.std_error and est.std_error > 0
    return MartingaleReport(est, rhs, optimal, bool(verdict), bool(strictly_below), n, history)


# --- shape -------------------------------------------------------------------


@dataclass
class ShapeReport:
    t: float
    increasing: bool
    concave: bool

    @property
    def passed(self) -> bool:
        return self.increasing and self.concave


def shape_check(solution: RobustSolution, t: float, x_grid) -> ShapeReport:
    """Strict monotonicity, decreasing slopes and midpoint concavity of ``V(t, .)``."""
    xs = np.asarray(x_grid, dtype=float)
    if xs.ndim != 1 or len(xs) < 3 or np.any(np.diff(xs) <= 0) or xs[0] <= 0:
        raise InvalidInputError("x_grid must be positive, strictly increasing, with >= 3 points")
    v = np.asarray(value_at(solution, t, xs), dtype=float)
    increasing = bool(np.all(np.diff(v) > 0))
    tol = 1e-13 * max(1.0, float(np.max(np.abs(v))))
    slopes = np.diff(v) / np.diff(xs)
    slopes_ok = bool(np.all(np.diff(slopes) <= 2.0 * tol / float(np.min(np.diff(xs)))))
    mids = 0.5 * (xs[1:] + xs[:-1])
    vm = np.asarray(value_at(solution, t, mids), dtype=float)
    midpoint_ok = bool(np.all(vm - 0.5 * (v[1:] + v[:-1]) >= -tol))
    return ShapeReport(t, increasing, slopes_ok and midpoint_ok)
