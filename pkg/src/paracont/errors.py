"""Exception hierarchy shared by the kernels, engines and the CLI."""

from __future__ import annotations


class ParacontError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(ParacontError, ValueError):
    """Bad dimensions, non-finite entries or out-of-range arguments."""


class ConfigError(ParacontError, ValueError):
    """A run configuration failed validation."""


class ModelError(ParacontError):
    """A plant model produced a non-finite or inconsistent value."""


class EquilibriumNotFoundError(ParacontError):
    """Newton iteration for the equilibrium input did not converge."""


class UnavailableError(ParacontError):
    """A privileged signal was requested in a mode that does not provide it."""


class SimulationError(ParacontError):
    """Failure during time integration; carries the time and state at failure."""

    def __init__(self, message: str, t: float | None = None, state=None):
        super().__init__(message)
        self.t = t
        self.state = state

    def __str__(self) -> str:
        base = super().__str__()
        if self.t is None:
            return base
        return f"{base} (t={self.t:.6g})"


class RankDeficientError(SimulationError):
    """Continuation matrix lost full row rank (bifurcation or violated rank condition)."""


# the controller-facing name used in reports and by the CLI
ContinuationBreakdownError = RankDeficientError


class DivergenceError(SimulationError):
    """The integrated state became non-finite."""


class StepBudgetError(SimulationError):
    """The requested horizon needs more steps than allowed."""


class StagnationError(SimulationError):
    """The continuation parameter stalled below one."""

    def __init__(self, message: str, t: float | None = None, state=None, lam: float | None = None):
        super().__init__(message, t, state)
        self.lam = lam
