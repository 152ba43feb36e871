"""Seeded Monte Carlo for prices and wealth under piecewise-constant parameters.

Random numbers come from counter-based Philox streams.  Paths are grouped in
fixed blocks of ``BLOCK_PATHS``; block ``b`` uses key ``seed`` with ``b`` in
the top counter word, so every block owns a disjoint stream and the output
does not depend on how blocks are spread over worker threads.  Within a
block, draws are laid out path-major, which also makes the first ``k`` paths
of a run identical for any ``n_paths >= k``.
"""

from __future__ import annotations

import enum
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.typing import NDArray

from .errors import DomainError, InvalidInputError
from .utility import UtilitySpec, check_wealth_domain

BLOCK_PATHS = 4096
_TIME_ATOL = 1e-12


class Scheme(str, enum.Enum):
    EXACT = "exact"
    EULER = "euler"


@dataclass(frozen=True)
class PathConfig:
    n_paths: int = 100_000
    steps_per_year: int = 252
    seed: int = 0
    scheme: Scheme = Scheme.EXACT
    workers: int = 1  # never affects results

    def __post_init__(self):
        if int(self.n_paths) < 1:
            raise InvalidInputError(f"n_paths must be >= 1, got {self.n_paths}")
        if int(self.steps_per_year) < 1:
            raise InvalidInputError(f"steps_per_year must be >= 1, got {self.steps_per_year}")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidInputError("seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "scheme", Scheme(self.scheme))


@dataclass(frozen=True)
class SimEstimate:
    mean: float
    std_error: float
    n_paths: int
    seed: int | None = None


@dataclass
class Segment:
    t_start: float
    t_end: float
    mu: NDArray[np.float64]
    sigma: NDArray[np.float64]

    def __post_init__(self):
        self.mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        self.sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))

    @property
    def cov(self) -> NDArray[np.float64]:
        return self.sigma @ self.sigma.T


@dataclass
class ParameterPath:
    """Piecewise-constant ``(mu_t, sigma_t)`` on ``[t0, T]``."""

    segments: list[Segment]

    def __post_init__(self):
        if not self.segments:
            raise InvalidInputError("parameter path has no segments")
        d = self.dim
        for i, seg in enumerate(self.segments):
            if not seg.t_start < seg.t_end:
                raise InvalidInputError(f"segment {i} has empty interval")
            if i and abs(seg.t_start - self.segments[i - 1].t_end) > _TIME_ATOL:
                raise InvalidInputError(f"segment {i} does not start where segment {i - 1} ends")
            if seg.mu.shape != (d,) or seg.sigma.shape != (d, d):
                raise InvalidInputError(f"segment {i} has inconsistent dimension")
            if not (np.all(np.isfinite(seg.mu)) and np.all(np.isfinite(seg.sigma))):
                raise InvalidInputError(f"segment {i} has non-finite parameters")

    @property
    def full_rank(self) -> bool:
        return all(np.linalg.matrix_rank(s.sigma) == self.dim for s in self.segments)

    @property
    def dim(self) -> int:
        return self.segments[0].mu.shape[0]

    @property
    def t0(self) -> float:
        return self.segments[0].t_start

    @property
    def horizon(self) -> float:
        return self.segments[-1].t_end

    def at(self, t: float) -> Segment:
        for seg in self.segments:
            if seg.t_start <= t < seg.t_end:
                return seg
        return self.segments[-1]

    def restrict(self, start: float, end: float) -> "ParameterPath":
        if not self.t0 <= start < end <= self.horizon:
            raise InvalidInputError(f"[{start}, {end}] is not inside [{self.t0}, {self.horizon}]")
        segs = [
            Segment(max(s.t_start, start), min(s.t_end, end), s.mu, s.sigma)
            for s in self.segments
            if s.t_end > start and s.t_start < end
        ]
        return ParameterPath(segs)

    @classmethod
    def constant(cls, mu, sigma, horizon: float, start: float = 0.0) -> "ParameterPath":
        return cls([Segment(start, horizon, mu, sigma)])


@dataclass
class StepFunction:
    """Right-continuous piecewise-constant vector function on ``[knots[0], knots[-1]]``."""

    knots: NDArray[np.float64]
    values: NDArray[np.float64]

    def __post_init__(self):
        self.knots = np.asarray(self.knots, dtype=float)
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.knots.ndim != 1 or len(self.knots) != len(self.values) + 1:
            raise InvalidInputError("step function needs len(knots) == len(values) + 1")
        if np.any(np.diff(self.knots) <= 0):
            raise InvalidInputError("step function knots must be strictly increasing")

    @classmethod
    def constant(cls, value, start: float, end: float) -> "StepFunction":
        return cls(np.array([start, end]), np.atleast_2d(np.asarray(value, dtype=float)))

    def at(self, t: float) -> NDArray[np.float64]:
        idx = int(np.searchsorted(self.knots, t, side="right")) - 1
        return self.values[min(max(idx, 0), len(self.values) - 1)]

    def shifted(self, delta) -> "StepFunction":
        return StepFunction(self.knots.copy(), self.values + np.asarray(delta, dtype=float))


def time_steps(
    path: ParameterPath, steps_per_year: int, extra_breaks: Sequence[float] = ()
) -> list[tuple[float, float, int]]:
    """Intervals ``(a, b, n_steps)`` whose ends include every breakpoint."""
    breaks = {path.t0, path.horizon}
    breaks.update(s.t_end for s in path.segments)
    breaks.update(b for b in extra_breaks if path.t0 < b < path.horizon)
    pts = sorted(breaks)
    out = []
    for a, b in zip(pts, pts[1:]):
        if b - a <= _TIME_ATOL:
            continue
        out.append((a, b, max(1, math.ceil((b - a) * steps_per_year - 1e-9))))
    return out


def _check_strategy(path: ParameterPath, strategy: StepFunction) -> None:
    if strategy.values.shape[1] != path.dim:
        raise InvalidInputError(f"strategy has dimension {strategy.values.shape[1]}, path has {path.dim}")
    if strategy.knots[0] > path.t0 + _TIME_ATOL or strategy.knots[-1] < path.horizon - _TIME_ATOL:
        raise InvalidInputError(
            f"strategy covers [{strategy.knots[0]}, {strategy.knots[-1]}] "
            f"but the path spans [{path.t0}, {path.horizon}]"
        )
    if not np.all(np.isfinite(strategy.values)):
        raise InvalidInputError("strategy values must be finite")


def block_generator(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=int(seed), counter=[0, 0, 0, int(block)]))


def _run_blocks(config: PathConfig, n_draws: int, dim: int, kernel: Callable[[NDArray], NDArray]) -> NDArray:
    """Apply ``kernel`` to standard normals of shape ``(paths, n_draws, dim)`` block by block."""
    n_blocks = -(-config.n_paths // BLOCK_PATHS)

    def one(b: int):
        size = min(BLOCK_PATHS, config.n_paths - b * BLOCK_PATHS)
        z = block_generator(config.seed, b).standard_normal((size, n_draws, dim))
        return kernel(z)

    if config.workers > 1 and n_blocks > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            parts = list(pool.map(one, range(n_blocks)))
    else:
        parts = [one(b) for b in range(n_blocks)]
    if isinstance(parts[0], tuple):
        return tuple(np.concatenate(p) for p in zip(*parts))
    return np.concatenate(parts)


def simulate_assets(path: ParameterPath, s0, config: PathConfig) -> NDArray[np.float64]:
    """Terminal prices, shape ``(n_paths, d)``, of ``dS = Diag(S)(mu dt + sigma dW)``.

    Euler paths that reach zero or below are kept; a ``RuntimeWarning`` reports
    how many there were.
    """
    s0 = np.atleast_1d(np.asarray(s0, dtype=float))
    if s0.shape != (path.dim,):
        raise InvalidInputError("s0 dimension does not match the path")
    if np.any(s0 <= 0) or not np.all(np.isfinite(s0)):
        raise DomainError("initial prices must be positive")
    steps = time_steps(path, config.steps_per_year)
    n_draws = sum(n for _, _, n in steps)
    exact = config.scheme is Scheme.EXACT

    def kernel(z):
        if exact:
            log_growth = np.zeros((z.shape[0], len(s0)))
        else:
            s = np.tile(s0, (z.shape[0], 1))
            alive = np.ones(z.shape[0], dtype=bool)
        k = 0
        for a, b, n in steps:
            seg = path.at(a)
            dt = (b - a) / n
            shocks = math.sqrt(dt) * (z[:, k : k + n, :] @ seg.sigma.T)
            if exact:
                drift = (seg.mu - 0.5 * np.diag(seg.cov)) * dt
                log_growth += n * drift + shocks.sum(axis=1)
            else:
                for j in range(n):
                    s = s * (1.0 + seg.mu * dt + shocks[:, j, :])
                    alive &= np.all(s > 0, axis=1)
            k += n
        if exact:
            return s0 * np.exp(log_growth)
        return s, ~alive

    out = _run_blocks(config, n_draws, path.dim, kernel)
    if exact:
        return out
    terminal, crossed = out
    _warn_crossings(crossed)
    return terminal


def _warn_crossings(crossed: NDArray[np.bool_]) -> None:
    if crossed.any():
        warnings.warn(
            f"{int(crossed.sum())} Euler path(s) crossed zero; first at index {int(np.flatnonzero(crossed)[0])}",
            RuntimeWarning,
            stacklevel=3,
        )


def simulate_wealth_fraction(
    path: ParameterPath, pi: StepFunction, x0: float, config: PathConfig, r: float = 0.0
) -> NDArray[np.float64]:
    """Terminal discounted wealth when holding fractions ``pi`` of wealth in the risky assets.

    The exact scheme applies the exponential solution interval by interval,
    so wealth stays strictly positive whatever ``pi`` is.
    """
    if not (math.isfinite(x0) and x0 > 0):
        raise DomainError("x0 must be positive")
    _check_strategy(path, pi)
    steps = time_steps(path, config.steps_per_year, pi.knots)
    n_draws = sum(n for _, _, n in steps)
    exact = config.scheme is Scheme.EXACT
    ones = np.ones(path.dim)

    def kernel(z):
        m = z.shape[0]
        log_growth = np.zeros(m)
        x = np.full(m, float(x0))
        alive = np.ones(m, dtype=bool)
        k = 0
        for a, b, n in steps:
            seg, p = path.at(a), pi.at(a)
            dt = (b - a) / n
            excess = float(p @ (seg.mu - r * ones))
            loading = seg.sigma.T @ p
            shocks = math.sqrt(dt) * (z[:, k : k + n, :] @ loading)
            if exact:
                log_growth += n * (excess - 0.5 * float(p @ seg.cov @ p)) * dt + shocks.sum(axis=1)
            else:
                for j in range(n):
                    x = x * (1.0 + excess * dt + shocks[:, j])
                    alive &= x > 0
            k += n
        return x0 * np.exp(log_growth) if exact else (x, ~alive)

    out = _run_blocks(config, n_draws, path.dim, kernel)
    if exact:
        return out
    terminal, crossed = out
    _warn_crossings(crossed)
    return terminal


def simulate_wealth_cash(
    path: ParameterPath, pi_hat: StepFunction, x0: float, config: PathConfig, r: float = 0.0
) -> NDArray[np.float64]:
    """Terminal discounted wealth when holding cash amounts ``pi_hat`` in the risky assets.

    Wealth is arithmetic Brownian motion here, so both schemes are exact.
    """
    if not math.isfinite(x0):
        raise DomainError("x0 must be finite")
    _check_strategy(path, pi_hat)
    steps = time_steps(path, config.steps_per_year, pi_hat.knots)
    n_draws = sum(n for _, _, n in steps)
    ones = np.ones(path.dim)

    def kernel(z):
        x = np.full(z.shape[0], float(x0))
        k = 0
        for a, b, n in steps:
            seg, p = path.at(a), pi_hat.at(a)
            dt = (b - a) / n
            x += n * float(p @ (seg.mu - r * ones)) * dt
            x += math.sqrt(dt) * (z[:, k : k + n, :] @ (seg.sigma.T @ p)).sum(axis=1)
            k += n
        return x

    return _run_blocks(config, n_draws, path.dim, kernel)


def estimate_expected_utility(wealth, utility: UtilitySpec, seed: int | None = None) -> SimEstimate:
    wealth = np.asarray(wealth, dtype=float).ravel()
    if wealth.size == 0:
        raise InvalidInputError("no wealth samples")
    check_wealth_domain(utility, wealth)
    values = np.asarray(utility(wealth), dtype=float)
    return summarize(values, seed)


def summarize(values, seed: int | None = None) -> SimEstimate:
    """Sample mean and standard error (``std(ddof=1) / sqrt(n)``)."""
    values = np.asarray(values, dtype=float).ravel()
    n = values.size
    if np.all(values == values[0]):
        return SimEstimate(float(values[0]), 0.0, n, seed)
    se = float(values.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return SimEstimate(float(values.mean()), se, n, seed)
