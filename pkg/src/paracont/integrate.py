"""Fixed-step RK4 integration, observer hooks and zero-order-hold signals.

There is deliberately no adaptive stepping: runs are reproducible bit for
bit, and stiffness from large continuation speeds shows up as a step-size
guideline (``dt <= 1 / (10 * alpha * k)``) instead of silently shrinking
steps.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DivergenceError, InvalidInputError, StepBudgetError

Rhs = Callable[[float, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class OdeProblem:
    rhs: Rhs
    x0: np.ndarray
    t0: float = 0.0

    def __post_init__(self):
        x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        if not np.all(np.isfinite(x0)):
            raise InvalidInputError("initial state must be finite")
        object.__setattr__(self, "x0", x0)

    @property
    def dimension(self) -> int:
        return self.x0.size


@dataclass(frozen=True)
class StepConfig:
    dt: float
    t_end: float
    max_steps: Optional[int] = None

    def n_steps(self, t0: float = 0.0) -> int:
        if not self.dt > 0:
            raise InvalidInputError("dt must be positive")
        if not self.t_end > t0:
            raise InvalidInputError("t_end must exceed t0")
        n = int(round((self.t_end - t0) / self.dt))
        # a horizon that is not a whole number of steps ends with one short step
        if t0 + n * self.dt < self.t_end - 1e-9 * self.dt:
            n += 1
        return max(n, 1)


def _check(t: float, x: np.ndarray, value: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(value)):
        raise DivergenceError("non-finite derivative", t=t, state=np.array(x, copy=True))
    return value


def rk4_step(problem, t: float, x, dt: float, k1: np.ndarray | None = None) -> np.ndarray:
    """One classical Runge-Kutta step.

    ``problem`` is an :class:`OdeProblem` or a bare ``rhs(t, x)`` callable.
    A precomputed first stage ``k1 = rhs(t, x)`` may be passed to avoid
    evaluating it twice when the caller already needed it (e.g. for logging).
    """
    rhs = problem.rhs if isinstance(problem, OdeProblem) else problem
    if not dt > 0:
        raise InvalidInputError("dt must be positive")
    x = np.asarray(x, dtype=float)
    if k1 is None:
        k1 = _check(t, x, np.asarray(rhs(t, x), dtype=float))
    h2 = 0.5 * dt
    # a non-finite stage propagates into x_next, so one check at the end suffices
    k2 = rhs(t + h2, x + h2 * k1)
    k3 = rhs(t + h2, x + h2 * k2)
    k4 = rhs(t + dt, x + dt * k3)
    x_next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(x_next)):
        raise DivergenceError("state became non-finite", t=t + dt, state=np.array(x, copy=True))
    return x_next


def integrate(
    problem: OdeProblem,
    cfg: StepConfig,
    observer: Callable[[float, np.ndarray], object] | None = None,
) -> np.ndarray:
    """Advance ``problem`` from ``t0`` to ``cfg.t_end`` in uniform steps.

    The observer is called after every step with ``t = t0 + k * dt``; a truthy
    return value stops the integration early.
    """
    n = cfg.n_steps(problem.t0)
    if cfg.max_steps is not None and n > cfg.max_steps:
        raise StepBudgetError(
            f"{n} steps needed but the budget is {cfg.max_steps}", t=problem.t0, state=problem.x0
        )
    x = problem.x0.copy()
    t0 = problem.t0
    for k in range(n):
        t = t0 + k * cfg.dt
        dt = min(cfg.dt, cfg.t_end - t) if k == n - 1 else cfg.dt
        x = rk4_step(problem, t, x, dt)
        t_next = cfg.t_end if k == n - 1 else t0 + (k + 1) * cfg.dt
        if observer is not None and observer(t_next, x.copy()):
            break
    return x


class ZeroOrderHold:
    """Piecewise-constant interpolant through time-stamped samples.

    Holds the most recent sample at or before ``t``; queries before the first
    sample return the first sample.
    """

    def __init__(self, samples: Sequence[tuple[float, object]]):
        if not samples:
            raise InvalidInputError("zero-order hold needs at least one sample")
        times = [float(t) for t, _ in samples]
        if any(b < a for a, b in zip(times, times[1:])):
            raise InvalidInputError("samples must be sorted by time")
        self._times = times
        self._values = [np.array(v, dtype=float, copy=True) for _, v in samples]

    def append(self, t: float, value) -> None:
        if t < self._times[-1]:
            raise InvalidInputError("samples must be appended in time order")
        self._times.append(float(t))
        self._values.append(np.array(value, dtype=float, copy=True))

    def __call__(self, t: float) -> np.ndarray:
        i = bisect.bisect_right(self._times, t) - 1
        return self._values[max(i, 0)].copy()


def zoh_signal(samples: Sequence[tuple[float, object]]) -> ZeroOrderHold:
    return ZeroOrderHold(samples)


def suggested_dt(alpha: float, gain: float) -> float:
    """Step-size guideline ``1 / (10 alpha k)`` for continuation speed ``alpha``."""
    return 1.0 / (10.0 * max(alpha, 1e-300) * max(gain, 1.0))


def time_grid(t0: float, dt: float, n: int) -> np.ndarray:
    """Drift-free grid ``t0 + k dt`` for ``k = 0..n``."""
    return t0 + dt * np.arange(n + 1, dtype=float)


__all__ = [
    "OdeProblem",
    "StepConfig",
    "rk4_step",
    "integrate",
    "ZeroOrderHold",
    "zoh_signal",
    "suggested_dt",
    "time_grid",
]
