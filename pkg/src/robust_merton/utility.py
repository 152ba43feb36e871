"""Utility families with closed-form robust solutions."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import DomainError, InvalidInputError


@dataclass(frozen=True)
class LogUtility:
    kind = "log"

    def __call__(self, x):
        return np.log(x)

    @property
    def needs_positive_wealth(self) -> bool:
        return True

    def to_dict(self) -> dict:
        return {"kind": "log"}


@dataclass(frozen=True)
class PowerUtility:
    """``u(x) = x**gamma`` with ``0 < gamma < 1``."""

    gamma: float
    kind = "power"

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise InvalidInputError(f"power utility needs 0 < gamma < 1, got {self.gamma}")

    def __call__(self, x):
        return np.power(x, self.gamma)

    @property
    def needs_positive_wealth(self) -> bool:
        return True

    def to_dict(self) -> dict:
        return {"kind": "power", "gamma": self.gamma}


@dataclass(frozen=True)
class ExponentialUtility:
    """``u(x) = -beta * exp(-beta * x)`` with ``beta > 0``.

    Strategies for this family are cash amounts rather than wealth fractions.
    """

    beta: float
    kind = "exponential"

    def __post_init__(self):
        if not (self.beta > 0.0 and math.isfinite(self.beta)):
            raise InvalidInputError(f"exponential utility needs beta > 0, got {self.beta}")

    def __call__(self, x):
        return -self.beta * np.exp(-self.beta * np.asarray(x, dtype=float))

    @property
    def needs_positive_wealth(self) -> bool:
        return False

    def to_dict(self) -> dict:
        return {"kind": "exponential", "beta": self.beta}


UtilitySpec = Union[LogUtility, PowerUtility, ExponentialUtility]


def utility_from_dict(spec: dict) -> UtilitySpec:
    kind = spec.get("kind")
    if kind == "log":
        return LogUtility()
    if kind == "power":
        return PowerUtility(float(spec["gamma"]))
    if kind == "exponential":
        return ExponentialUtility(float(spec["beta"]))
    raise InvalidInputError(f"unknown utility kind {kind!r}")


def check_wealth_domain(utility: UtilitySpec, x) -> None:
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    bad = np.flatnonzero(~np.isfinite(arr))
    if bad.size:
        raise DomainError(f"non-finite wealth at index {int(bad[0])}")
    if utility.needs_positive_wealth:
        bad = np.flatnonzero(arr <= 0)
        if bad.size:
            raise DomainError(f"{utility.kind} utility needs positive wealth; index {int(bad[0])} has {arr[bad[0]]!r}")
