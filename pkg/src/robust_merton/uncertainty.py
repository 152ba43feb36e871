"""Time-dependent compact uncertainty sets for drift and covariance.

The horizon ``[0, T]`` is cut into cells ``[t_i, t_{i+1})`` (the last one
closed).  On each cell the drift lies in a box or a Euclidean ball and the
covariance matrix is any symmetric positive-definite matrix whose
eigenvalues lie in ``[eig_min, eig_max]``.

For investors with increasing concave utility the adversary's best reply on
a cell is available in closed form: the drift closest to ``r * 1`` and the
covariance ``eig_max * I``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product
from typing import Sequence, Union

import numpy as np
from numpy.typing import NDArray

from .errors import InvalidInputError

Vector = NDArray[np.float64]


def _as_tuple(values) -> tuple[float, ...]:
    return tuple(float(v) for v in np.atleast_1d(np.asarray(values, dtype=float)))


@dataclass(frozen=True)
class TimeGrid:
    """Re-evaluation instants ``0 = t_0 < t_1 < ... < t_{n+1} = T``."""

    instants: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "instants", _as_tuple(self.instants))
        ts = self.instants
        if len(ts) < 2:
            raise InvalidInputError("a time grid needs at least two instants")
        if not all(math.isfinite(t) and t >= 0 for t in ts):
            raise InvalidInputError("time grid instants must be finite and non-negative")
        if ts[0] != 0.0:
            raise InvalidInputError("time grid must start at 0")
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise InvalidInputError("time grid must be strictly increasing")

    @property
    def horizon(self) -> float:
        return self.instants[-1]

    @classmethod
    def uniform(cls, horizon: float, n_cells: int) -> "TimeGrid":
        ts = [horizon * i / n_cells for i in range(n_cells)] + [float(horizon)]
        return cls(tuple(ts))


@dataclass(frozen=True)
class DriftBox:
    """Componentwise interval ``lower <= mu <= upper``."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "lower", _as_tuple(self.lower))
        object.__setattr__(self, "upper", _as_tuple(self.upper))

    @property
    def dim(self) -> int:
        return len(self.lower)

    def project(self, point: Vector) -> Vector:
        return np.clip(point, np.asarray(self.lower), np.asarray(self.upper))

    def contains(self, mu: Vector, atol: float = 0.0) -> bool:
        mu = np.asarray(mu, dtype=float)
        return bool(np.all(mu >= np.asarray(self.lower) - atol) and np.all(mu <= np.asarray(self.upper) + atol))

    def extreme_points(self, toward: Vector) -> list[Vector]:
        """All ``2**d`` vertices."""
        lo, hi = np.asarray(self.lower), np.asarray(self.upper)
        return [np.where(np.array(mask, dtype=bool), hi, lo) for mask in product((0, 1), repeat=self.dim)]

    def sample(self, rng: np.random.Generator, size: int) -> NDArray[np.float64]:
        return rng.uniform(np.asarray(self.lower), np.asarray(self.upper), size=(size, self.dim))

    def problems(self) -> list[str]:
        out = []
        if len(self.lower) != len(self.upper):
            out.append("box lower/upper dimension mismatch")
        elif any(not (math.isfinite(lo) and math.isfinite(hi)) for lo, hi in zip(self.lower, self.upper)):
            out.append("box bounds must be finite")
        elif any(lo > hi for lo, hi in zip(self.lower, self.upper)):
            out.append("box lower must not exceed upper")
        return out


@dataclass(frozen=True)
class DriftBall:
    """Closed Euclidean ball ``||mu - center|| <= radius``."""

    center: tuple[float, ...]
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", _as_tuple(self.center))
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dim(self) -> int:
        return len(self.center)

    def project(self, point: Vector) -> Vector:
        center = np.asarray(self.center)
        offset = point - center
        dist = float(np.linalg.norm(offset))
        if dist <= self.radius:
            return np.array(point, dtype=float)
        return center + (self.radius / dist) * offset

    def contains(self, mu: Vector, atol: float = 0.0) -> bool:
        return float(np.linalg.norm(np.asarray(mu) - np.asarray(self.center))) <= self.radius + atol

    def extreme_points(self, toward: Vector) -> list[Vector]:
        """Boundary points toward and away from ``toward`` plus the axis poles."""
        center = np.asarray(self.center)
        direction = np.asarray(toward, dtype=float) - center
        norm = float(np.linalg.norm(direction))
        if norm == 0.0:
            direction = np.zeros(self.dim)
            direction[0] = 1.0
        else:
            direction = direction / norm
        points = [center + self.radius * direction, center - self.radius * direction]
        for k in range(self.dim):
            e = np.zeros(self.dim)
            e[k] = self.radius
            points.extend([center + e, center - e])
        return points

    def sample(self, rng: np.random.Generator, size: int) -> NDArray[np.float64]:
        z = rng.standard_normal((size, self.dim))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        radii = self.radius * rng.uniform(size=(size, 1)) ** (1.0 / self.dim)
        return np.asarray(self.center) + radii * z

    def problems(self) -> list[str]:
        out = []
        if not all(math.isfinite(c) for c in self.center):
            out.append("ball center must be finite")
        if not math.isfinite(self.radius) or self.radius < 0:
            out.append("ball radius must be finite and non-negative")
        return out


DriftSet = Union[DriftBox, DriftBall]


@dataclass(frozen=True)
class VolSet:
    """Covariances with all eigenvalues in ``[eig_min, eig_max]``."""

    eig_min: float
    eig_max: float

    def __post_init__(self):
        object.__setattr__(self, "eig_min", float(self.eig_min))
        object.__setattr__(self, "eig_max", float(self.eig_max))

    def sample(self, rng: np.random.Generator, dim: int, size: int) -> NDArray[np.float64]:
        """Random members: Haar-like rotation of uniformly drawn eigenvalues."""
        out = np.empty((size, dim, dim))
        for k in range(size):
            q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
            q = q * np.sign(np.diag(r))
            eig = rng.uniform(self.eig_min, self.eig_max, size=dim)
            out[k] = (q * eig) @ q.T
        return out

    def contains(self, cov, rtol: float = 1e-12) -> bool:
        eig = np.linalg.eigvalsh(np.asarray(cov, dtype=float))
        slack = rtol * self.eig_max
        return bool(eig.min() >= self.eig_min - slack and eig.max() <= self.eig_max + slack)

    def problems(self) -> list[str]:
        out = []
        if not (math.isfinite(self.eig_min) and math.isfinite(self.eig_max)):
            out.append("eigenvalue bounds must be finite")
        elif self.eig_min <= 0:
            out.append("positivity: eig_min must be > 0")
        if math.isfinite(self.eig_min) and math.isfinite(self.eig_max) and self.eig_min > self.eig_max:
            out.append("eig_min must not exceed eig_max")
        return out


@dataclass(frozen=True)
class UncertaintyCell:
    t_start: float
    t_end: float
    drift: DriftSet
    vol: VolSet

    def __post_init__(self):
        object.__setattr__(self, "t_start", float(self.t_start))
        object.__setattr__(self, "t_end", float(self.t_end))

    @property
    def dim(self) -> int:
        return self.drift.dim

    @property
    def length(self) -> float:
        return self.t_end - self.t_start


@dataclass(frozen=True)
class Violation:
    index: int | None
    invariant: str
    message: str

    def __str__(self):
        where = "schedule" if self.index is None else f"cell {self.index}"
        return f"{where}: [{self.invariant}] {self.message}"


@dataclass(frozen=True)
class UncertaintySchedule:
    """Ordered cells tiling ``[0, T]``."""

    cells: tuple[UncertaintyCell, ...]

    def __post_init__(self):
        object.__setattr__(self, "cells", tuple(self.cells))

    @property
    def dim(self) -> int:
        return self.cells[0].dim if self.cells else 0

    @property
    def horizon(self) -> float:
        return self.cells[-1].t_end

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(tuple(c.t_start for c in self.cells) + (self.horizon,))

    def __len__(self):
        return len(self.cells)

    def __iter__(self):
        return iter(self.cells)

    def __getitem__(self, i):
        return self.cells[i]

    def cell_index(self, t: float) -> int:
        """Index of the cell containing ``t``; left-closed, last cell closed."""
        if not 0.0 <= t <= self.horizon:
            raise InvalidInputError(f"t={t} outside [0, {self.horizon}]")
        starts = [c.t_start for c in self.cells]
        idx = int(np.searchsorted(starts, t, side="right")) - 1
        return min(max(idx, 0), len(self.cells) - 1)

    def split(self, index: int, at: float) -> "UncertaintySchedule":
        """Cut cell ``index`` at an interior time, keeping its sets."""
        cell = self.cells[index]
        if not cell.t_start < at < cell.t_end:
            raise InvalidInputError(f"split point {at} not interior to cell {index}")
        left = UncertaintyCell(cell.t_start, at, cell.drift, cell.vol)
        right = UncertaintyCell(at, cell.t_end, cell.drift, cell.vol)
        return UncertaintySchedule(self.cells[:index] + (left, right) + self.cells[index + 1:])


def validate_schedule(schedule: UncertaintySchedule, dim: int | None = None) -> list[Violation]:
    """Return every broken invariant; an empty list means the schedule is valid."""
    found: list[Violation] = []
    cells = schedule.cells
    if not cells:
        return [Violation(None, "nonempty", "schedule has no cells")]
    dim = cells[0].dim if dim is None else dim
    if dim < 1:
        found.append(Violation(None, "dimension", "dimension must be >= 1"))
    if cells[0].t_start != 0.0:
        found.append(Violation(0, "tiling", f"first cell starts at {cells[0].t_start}, expected 0"))
    for i, cell in enumerate(cells):
        if not (math.isfinite(cell.t_start) and math.isfinite(cell.t_end)) or cell.t_start < 0:
            found.append(Violation(i, "time", "cell bounds must be finite and non-negative"))
        elif not cell.t_start < cell.t_end:
            found.append(Violation(i, "time", f"t_start={cell.t_start} must be < t_end={cell.t_end}"))
        if i > 0 and cell.t_start != cells[i - 1].t_end:
            kind = "gap" if cell.t_start > cells[i - 1].t_end else "overlap"
            found.append(
                Violation(i, "tiling", f"{kind}: starts at {cell.t_start} but previous ends at {cells[i - 1].t_end}")
            )
        if cell.dim != dim:
            found.append(Violation(i, "dimension", f"drift set has dimension {cell.dim}, expected {dim}"))
        for msg in cell.drift.problems():
            found.append(Violation(i, "drift", msg))
        for msg in cell.vol.problems():
            invariant = "positivity" if msg.startswith("positivity") else "vol"
            found.append(Violation(i, invariant, msg))
    return found


def _excess_target(cell: UncertaintyCell, r: float) -> Vector:
    if not math.isfinite(r):
        raise InvalidInputError("risk-free rate must be finite")
    return np.full(cell.dim, float(r))


def worst_case_drift(cell: UncertaintyCell, r: float) -> Vector:
    """Drift in the cell's set closest (Euclidean) to ``r * 1``."""
    return cell.drift.project(_excess_target(cell, r))


def worst_case_covariance(cell: UncertaintyCell) -> NDArray[np.float64]:
    return cell.vol.eig_max * np.eye(cell.dim)


def worst_case_vol_factor(cell: UncertaintyCell) -> NDArray[np.float64]:
    """Square-root factor ``sigma`` with ``sigma @ sigma.T == eig_max * I``."""
    return math.sqrt(cell.vol.eig_max) * np.eye(cell.dim)


def drift_candidates(cell: UncertaintyCell, r: float) -> list[Vector]:
    """Extreme drifts plus the projection of ``r * 1``, duplicates removed."""
    target = _excess_target(cell, r)
    points = [worst_case_drift(cell, r)] + cell.drift.extreme_points(target)
    unique: list[Vector] = []
    for p in points:
        if not any(np.array_equal(p, q) for q in unique):
            unique.append(np.asarray(p, dtype=float))
    return unique


def covariance_candidates(cell: UncertaintyCell, n_random: int = 50, seed: int = 0) -> list[NDArray[np.float64]]:
    """``eig_min * I``, ``eig_max * I`` and ``n_random`` random interior members."""
    d = cell.dim
    rng = np.random.default_rng(seed)
    out = [cell.vol.eig_min * np.eye(d), cell.vol.eig_max * np.eye(d)]
    out.extend(cell.vol.sample(rng, d, n_random))
    return out


def make_cell(t_start: float, t_end: float, drift: DriftSet | Sequence, eig_min: float, eig_max: float) -> UncertaintyCell:
    """Shorthand: ``drift`` may be a set or a ``(lower, upper)`` pair."""
    if not isinstance(drift, (DriftBox, DriftBall)):
        lower, upper = drift
        drift = DriftBox(lower, upper)
    return UncertaintyCell(t_start, t_end, drift, VolSet(eig_min, eig_max))
