"""Exception hierarchy shared by the solver, simulator and CLI."""

from __future__ import annotations


class RobustMertonError(Exception):
    """Base class for all package errors."""


class InvalidInputError(RobustMertonError, ValueError):
    """Arguments have the wrong shape, dimension or structure."""


class DomainError(RobustMertonError, ValueError):
    """A value lies outside the mathematical domain of an operation."""


class ValidationError(RobustMertonError, ValueError):
    """A scenario or schedule violates one or more invariants.

    The individual findings are kept on ``violations`` so callers can
    print them one per line.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        lines = "\n".join(f"  - {v}" for v in self.violations)
        super().__init__(f"{len(self.violations)} violation(s):\n{lines}")


class InadmissibleStrategyError(RobustMertonError, ValueError):
    """A candidate strategy does not keep wealth admissible."""
