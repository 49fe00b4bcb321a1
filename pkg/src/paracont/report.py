"""Run summary shared by all engines, and the stagnation watchdog."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import StagnationError


@dataclass
class RunReport:
    engine: str
    t_switch: Optional[float]
    final_t: float
    final_lambda: float
    final_x: np.ndarray
    final_y: Optional[np.ndarray] = None
    final_theta: Optional[np.ndarray] = None
    max_abs_u: float = 0.0
    min_sigma: float = float("inf")
    steps: int = 0
    wall_time: float = 0.0
    extras: dict = field(default_factory=dict)

    @property
    def final_y_norm(self) -> float:
        if self.final_y is None:
            return float("nan")
        return float(np.max(np.abs(self.final_y)))

    def summary(self) -> str:
        parts = [f"engine={self.engine}", f"t_end={self.final_t:.6g}", f"steps={self.steps}"]
        parts.append("t_switch=" + ("none" if self.t_switch is None else f"{self.t_switch:.6g}"))
        parts.append(f"lambda={self.final_lambda:.6g}")
        if self.final_y is not None:
            parts.append(f"|y|_inf={self.final_y_norm:.3e}")
        if self.final_theta is not None:
            parts.append("theta=" + ",".join(f"{v:.6g}" for v in np.atleast_1d(self.final_theta)))
        if np.isfinite(self.min_sigma):
            parts.append(f"min_sigma={self.min_sigma:.3e}")
        if self.final_y is not None:
            parts.append(f"max|u|={self.max_abs_u:.3e}")
        parts.append(f"wall={self.wall_time:.2f}s")
        return " ".join(parts)


class StagnationMonitor:
    """Raise when ``lambda`` moves less than ``eps`` over a ``window`` of time.

    The check runs over consecutive disjoint windows; ``window=None``
    disables it.
    """

    def __init__(self, window: Optional[float], eps: float):
        self.window = window
        self.eps = eps
        self._start: Optional[float] = None
        self._lo = self._hi = 0.0

    def update(self, t: float, lam: float, state=None) -> None:
        if self.window is None:
            return
        if self._start is None:
            self._start, self._lo, self._hi = t, lam, lam
            return
        self._lo = min(self._lo, lam)
        self._hi = max(self._hi, lam)
        if t - self._start >= self.window * (1 - 1e-9):
            if self._hi - self._lo < self.eps:
                raise StagnationError(
                    f"lambda stalled at {lam:.6g} (moved {self._hi - self._lo:.3e} in {t - self._start:.3g}s)",
                    t=t,
                    state=state,
                    lam=lam,
                )
            self._start, self._lo, self._hi = t, lam, lam
