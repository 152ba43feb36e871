"""Closed-form robust strategies and value functions.

On each cell the adversary plays ``mu* = proj(r * 1)`` and ``Sigma* = C * I``
(``C = eig_max``) and the investor answers with the Merton strategy for those
parameters.  With excess return ``e = mu* - r * 1`` the per-cell rates are

==============  ==========================  =================================
utility         strategy                    rate ``kappa``
==============  ==========================  =================================
log             ``e / C`` (fraction)        ``|e|^2 / (2 C)``
power(gamma)    ``e / (C (1 - gamma))``     ``gamma |e|^2 / (2 (1-gamma) C)``
exponential     ``e / (C beta)`` (cash)     ``|e|^2 / (2 C)``
==============  ==========================  =================================

and, writing ``R(t)`` for the rates integrated over the remaining horizon,
``V = log x + R``, ``V = x**gamma * exp(R)`` and
``V = -beta * exp(-beta x) * exp(-R)`` respectively.  All quantities are in
discounted wealth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.typing import NDArray

from .errors import DomainError, InvalidInputError, ValidationError
from .uncertainty import (
    DriftBox,
    TimeGrid,
    UncertaintyCell,
    UncertaintySchedule,
    Violation,
    VolSet,
    validate_schedule,
    worst_case_covariance,
    worst_case_drift,
)
from .utility import ExponentialUtility, LogUtility, PowerUtility, UtilitySpec


@dataclass(frozen=True)
class Scenario:
    d: int
    r: float
    x0: float
    utility: UtilitySpec
    schedule: UncertaintySchedule

    @property
    def horizon(self) -> float:
        return self.schedule.horizon

    def violations(self) -> list[Violation]:
        found = validate_schedule(self.schedule, dim=self.d)
        if not (math.isfinite(self.x0) and self.x0 > 0):
            found.append(Violation(None, "x0", f"initial wealth must be positive, got {self.x0}"))
        if not math.isfinite(self.r):
            found.append(Violation(None, "r", "risk-free rate must be finite"))
        return found


@dataclass
class CellSolution:
    cell_index: int
    t_start: float
    t_end: float
    mu_star: NDArray[np.float64]
    sigma_star: NDArray[np.float64]
    strategy: NDArray[np.float64]
    rate: float

    @property
    def eig_max(self) -> float:
        return float(self.sigma_star[0, 0])

    @property
    def length(self) -> float:
        return self.t_end - self.t_start


@dataclass
class RobustSolution:
    scenario: Scenario
    cells: list[CellSolution]
    utility: UtilitySpec = field(init=False)

    def __post_init__(self):
        self.utility = self.scenario.utility

    @property
    def horizon(self) -> float:
        return self.scenario.horizon

    @property
    def cash_strategy(self) -> bool:
        """True when ``strategy`` holds cash amounts (exponential utility)."""
        return isinstance(self.utility, ExponentialUtility)

    def cell_at(self, t: float) -> CellSolution:
        return self.cells[self.scenario.schedule.cell_index(t)]

    def remaining_rate(self, t: float) -> float:
        """``sum_i kappa_i * |cell_i intersect [t, T]|``."""
        return math.fsum(c.rate * max(0.0, c.t_end - max(c.t_start, t)) for c in self.cells)

    def with_rate_scale(self, factor: float) -> "RobustSolution":
        """Copy with every rate multiplied by ``factor``; used to test checker power."""
        cells = [
            CellSolution(c.cell_index, c.t_start, c.t_end, c.mu_star, c.sigma_star, c.strategy, c.rate * factor)
            for c in self.cells
        ]
        return RobustSolution(self.scenario, cells)


def strategy_and_rate(utility: UtilitySpec, excess: NDArray[np.float64], eig_max: float) -> tuple[NDArray[np.float64], float]:
    sq = float(excess @ excess)
    if isinstance(utility, LogUtility):
        return excess / eig_max, sq / (2.0 * eig_max)
    if isinstance(utility, PowerUtility):
        g = utility.gamma
        return excess / (eig_max * (1.0 - g)), g * sq / (2.0 * (1.0 - g) * eig_max)
    if isinstance(utility, ExponentialUtility):
        return excess / (eig_max * utility.beta), sq / (2.0 * eig_max)
    raise InvalidInputError(f"unsupported utility {utility!r}")


def rate_multiplier(utility: UtilitySpec) -> float:
    """Factor applied to ``|e|^2 / (2C)`` to get the per-cell rate."""
    if isinstance(utility, PowerUtility):
        return utility.gamma / (1.0 - utility.gamma)
    return 1.0


def solve(scenario: Scenario) -> RobustSolution:
    """Worst-case parameters, optimal strategy and rate for every cell."""
    found = scenario.violations()
    if found:
        raise ValidationError(found)
    ones = np.ones(scenario.d)
    cells = []
    for i, cell in enumerate(scenario.schedule):
        mu_star = worst_case_drift(cell, scenario.r)
        sigma_star = worst_case_covariance(cell)
        strategy, rate = strategy_and_rate(scenario.utility, mu_star - scenario.r * ones, cell.vol.eig_max)
        cells.append(CellSolution(i, cell.t_start, cell.t_end, mu_star, sigma_star, strategy, rate))
    return RobustSolution(scenario, cells)


def value_from_rate(utility: UtilitySpec, x, remaining: float):
    """Value function given the integrated remaining rate ``R``."""
    if isinstance(utility, LogUtility):
        return np.log(x) + remaining
    if isinstance(utility, PowerUtility):
        return np.power(x, utility.gamma) * math.exp(remaining)
    return utility(x) * math.exp(-remaining)


def _check_point(solution: RobustSolution, t: float, x, *, closed_right: bool) -> None:
    T = solution.horizon
    ok = 0.0 <= t <= T if closed_right else 0.0 <= t < T
    if not (math.isfinite(t) and ok):
        raise DomainError(f"t={t} outside the horizon [0, {T}{']' if closed_right else ')'}")
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise DomainError("wealth must be finite and positive")


def value_at(solution: RobustSolution, t: float, x):
    """Robust value ``V(t, x)``; ``x`` may be an array."""
    _check_point(solution, t, x, closed_right=True)
    if t == solution.horizon:
        return solution.utility(x)
    return value_from_rate(solution.utility, x, solution.remaining_rate(t))


def strategy_at(solution: RobustSolution, t: float, x: float) -> NDArray[np.float64]:
    """Cash amounts held in the risky assets at ``(t, x)``."""
    _check_point(solution, t, x, closed_right=False)
    cell = solution.cell_at(t)
    if solution.cash_strategy:
        return cell.strategy.copy()
    return float(x) * cell.strategy


# --- continuous limit -------------------------------------------------------


@dataclass
class ContinuousProfile:
    """Worst-case drift ``mu_star(t)`` and variance bound ``eig_max(t)`` on ``[0, T]``.

    ``breakpoints`` lists interior times where either function may jump; the
    quadrature never straddles them.
    """

    horizon: float
    r: float
    utility: UtilitySpec
    mu_star: Callable[[float], Sequence[float] | float]
    eig_max: Callable[[float], float]
    breakpoints: Sequence[float] = ()

    def integrand(self, t: float) -> float:
        mu = np.atleast_1d(np.asarray(self.mu_star(t), dtype=float))
        c = float(self.eig_max(t))
        if not c > 0:
            raise DomainError(f"eig_max({t}) = {c} is not positive")
        e = mu - self.r
        return rate_multiplier(self.utility) * float(e @ e) / (2.0 * c)


@dataclass(frozen=True)
class LimitValue:
    value: float
    rate_integral: float
    quadrature_error: float
    value_error: float


def _simpson(f: Callable[[float], float], a: float, b: float, panels: int) -> tuple[float, float]:
    """Composite Simpson on ``[a, b]`` with a Richardson error estimate.

    The right endpoint is evaluated one ulp inside so that left-continuous
    piecewise inputs use the value of the current piece.
    """
    panels += panels % 2
    nodes = np.linspace(a, b, panels + 1)
    nodes[-1] = np.nextafter(b, a)
    vals = np.array([f(float(s)) for s in nodes])
    if not np.all(np.isfinite(vals)):
        raise DomainError("integrand is not finite on the horizon")
    h = (b - a) / panels
    fine = h / 3.0 * (vals[0] + vals[-1] + 4.0 * vals[1:-1:2].sum() + 2.0 * vals[2:-1:2].sum())
    if panels >= 4 and panels % 4 == 0:
        coarse_vals = vals[::2]
        H = 2.0 * h
        coarse = H / 3.0 * (
            coarse_vals[0] + coarse_vals[-1] + 4.0 * coarse_vals[1:-1:2].sum() + 2.0 * coarse_vals[2:-1:2].sum()
        )
        err = abs(fine - coarse) / 15.0
    else:
        err = 0.0
    return fine, err


def continuous_limit_value(profile: ContinuousProfile, t: float, x: float, panels: int = 1000) -> LimitValue:
    """Value when the uncertainty set is re-evaluated continuously.

    The rate integral ``R(t)`` is computed by composite Simpson quadrature with
    at least ``panels`` panels in total, split at ``profile.breakpoints``.
    """
    T = float(profile.horizon)
    if not 0.0 <= t <= T:
        raise DomainError(f"t={t} outside [0, {T}]")
    if not (math.isfinite(x) and (x > 0 or not profile.utility.needs_positive_wealth)):
        raise DomainError(f"wealth {x} outside the utility domain")
    if t == T:
        return LimitValue(float(profile.utility(x)), 0.0, 0.0, 0.0)
    edges = [t] + sorted(b for b in profile.breakpoints if t < b < T) + [T]
    total, err = [], 0.0
    for a, b in zip(edges, edges[1:]):
        n = max(4, 4 * math.ceil(panels * (b - a) / (T - t) / 4))
        piece, piece_err = _simpson(profile.integrand, a, b, n)
        total.append(piece)
        err += piece_err
    integral = math.fsum(total)
    value = float(value_from_rate(profile.utility, x, integral))
    sensitivity = 1.0 if isinstance(profile.utility, LogUtility) else abs(value)
    return LimitValue(value, integral, err, sensitivity * err)


def scenario_from_profile(profile: ContinuousProfile, n_cells: int, x0: float) -> Scenario:
    """Uniform ``n_cells`` schedule sampling the profile at left endpoints.

    Each cell carries singleton sets so its worst case is the sampled value.
    """
    grid = TimeGrid.uniform(profile.horizon, n_cells).instants
    cells = []
    for a, b in zip(grid, grid[1:]):
        mu = np.atleast_1d(np.asarray(profile.mu_star(a), dtype=float))
        c = float(profile.eig_max(a))
        cells.append(UncertaintyCell(a, b, DriftBox(mu, mu), VolSet(c, c)))
    d = len(cells[0].drift.lower)
    return Scenario(d, profile.r, x0, profile.utility, UncertaintySchedule(tuple(cells)))


def mesh_refinement_series(
    profile: ContinuousProfile, refinements: int, x0: float, base_cells: int = 1
) -> list[tuple[float, float]]:
    """``(mesh, V(0, x0))`` for uniform grids of ``base_cells * 2**j`` cells, ``j = 0..refinements``."""
    if refinements < 0 or base_cells < 1:
        raise InvalidInputError("refinements must be >= 0 and base_cells >= 1")
    out = []
    for j in range(refinements + 1):
        n = base_cells * 2**j
        sol = solve(scenario_from_profile(profile, n, x0))
        out.append((profile.horizon / n, float(value_at(sol, 0.0, x0))))
    return out
