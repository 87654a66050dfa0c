"""Exception types shared across the package."""

from __future__ import annotations


class DomainError(ValueError):
    """An argument violates an operation's stated precondition."""


class ConfigError(ValueError):
    """A scenario configuration is malformed or incomplete."""


class SingularSystem(RuntimeError):
    """The banded time-step system could not be factorized."""


class DivergedSolution(RuntimeError):
    """A solve produced non-finite values."""


class NoContraction(RuntimeError):
    """A fixed-point iteration failed to converge.

    Carries the recorded residual history so callers can diagnose whether
    the iteration stalled or was merely slow.
    """

    def __init__(self, message: str, residuals: list[float] | None = None):
        super().__init__(message)
        self.residuals = list(residuals) if residuals is not None else []


class PreconditionError(RuntimeError):
    """A hard solvability hypothesis failed; ``hypothesis`` is a stable name."""

    def __init__(self, hypothesis: str, message: str):
        super().__init__(message)
        self.hypothesis = hypothesis


class NondegeneracyError(PreconditionError):
    """The measurement sensitivity (determinant, psi0, or weight slope) is too small."""
