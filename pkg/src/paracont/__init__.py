"""Continuation (homotopy) methods for nonlinear setpoint control and online identification."""

from .errors import (
    ConfigError,
    ContinuationBreakdownError,
    DivergenceError,
    EquilibriumNotFoundError,
    InvalidInputError,
    ModelError,
    ParacontError,
    RankDeficientError,
    SimulationError,
    StagnationError,
    StepBudgetError,
    UnavailableError,
)
from .report import RunReport
from .trajlog import TrajectoryLog

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ContinuationBreakdownError",
    "DivergenceError",
    "EquilibriumNotFoundError",
    "InvalidInputError",
    "ModelError",
    "ParacontError",
    "RankDeficientError",
    "RunReport",
    "SimulationError",
    "StagnationError",
    "StepBudgetError",
    "TrajectoryLog",
    "UnavailableError",
    "__version__",
]
