"""Identification of parameters that enter the dynamics nonlinearly.

The mismatch between model and plant is measured either instantaneously
(``continuous`` mode, which needs the plant derivative and so only exists in
simulation) or over restart windows of length ``delta_t`` (``discrete`` mode).
In discrete mode the model is restarted from the measured state at each
window start. Windowed errors and their Jacobians are held between window
boundaries.

The estimate follows the homotopy ``H = lam e + (1 - lam)(theta - theta0)``.
It begins at the trivial root ``theta = theta0`` and is continued to a root
of ``e``. This avoids the local minima a plain Newton flow on ``e`` can get
stuck in.

When the state has more components than the parameter vector, the error is
reduced to ``q`` equations before continuation. The default is the
least-squares form ``De^T e`` with Jacobian ``De^T De``.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, UnavailableError
from .integrate import rk4_step
from .models import NonlinearParamModel, UncertainGeneralPlant
from .report import RunReport
from .smallmat import DEFAULT_TOL, pinv, tangent_vector, weighted_pinv
from .trajlog import TrajectoryLog, standard_columns

MODES = ("continuous", "discrete")
REDUCTIONS = ("normal", "rows", "none")
JACOBIANS = ("sensitivity", "partial")


@dataclass(frozen=True)
class IdentNLGains:
    """Gains and options for :func:`run_ident_nonlinear`.

    ``theta0`` is the homotopy anchor; ``None`` means the initial estimate.
    ``scale_window`` divides windowed quantities by ``delta_t`` so that they
    approximate rates. ``rows`` picks the equations kept by
    ``reduction="rows"`` (default: the last ``q``).
    """

    alpha: float
    gamma: float
    k: float
    delta_t: float = 0.1
    theta0: Optional[tuple] = None
    mode: str = "continuous"
    dt: float = 1e-3
    t_end: float = 30.0
    reduction: str = "normal"
    rows: Optional[tuple] = None
    jacobian: str = "sensitivity"
    scale_window: bool = True
    clamp_lambda: bool = True
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        for name in ("alpha", "gamma", "k", "delta_t", "dt", "t_end"):
            v = getattr(self, name)
            if not v > 0:
                raise ConfigError(f"{name} must be positive, got {v!r}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.reduction not in REDUCTIONS:
            raise ConfigError(f"reduction must be one of {REDUCTIONS}, got {self.reduction!r}")
        if self.jacobian not in JACOBIANS:
            raise ConfigError(f"jacobian must be one of {JACOBIANS}, got {self.jacobian!r}")
        if self.mode == "discrete":
            ratio = self.delta_t / self.dt
            if abs(ratio - round(ratio)) > 1e-9 * ratio or round(ratio) < 1:
                raise ConfigError("delta_t must be a whole multiple of dt")

    @property
    def window_steps(self) -> int:
        return int(round(self.delta_t / self.dt))


@dataclass
class ErrorWindow:
    t_i: float
    t_next: float
    e: np.ndarray
    De: np.ndarray
    xhat_end: np.ndarray = field(repr=False, default=None)


def _integrate_window(model: NonlinearParamModel, x_ti, u_fn, theta, t_i, steps, dt, jacobian):
    """Model restarted at ``x_ti`` over ``steps`` steps; returns ``(xhat_end, D)``.

    ``D`` is the Jacobian of ``xhat_end`` in ``theta``. In ``sensitivity`` mode
    it is integrated together with the state (``S' = f_x S + f_theta``). In
    ``partial`` mode it is the trapezoid integral of ``f_theta`` along the
    model trajectory.
    """
    n, q = model.n, model.q
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    xhat = np.array(x_ti, dtype=float)
    if jacobian == "sensitivity":

        def aug(t, s):
            xx = s[:n]
            S = s[n:].reshape(n, q)
            u = u_fn(t)
            dS = model.jac_x(xx, u, theta) @ S + model.jac_theta(xx, u, theta)
            return np.concatenate([model.rhs(xx, u, theta), dS.ravel()])

        s = np.concatenate([xhat, np.zeros(n * q)])
        for j in range(steps):
            s = rk4_step(aug, t_i + j * dt, s, dt)
        return s[:n], s[n:].reshape(n, q)

    def rhs(t, xx):
        return model.rhs(xx, u_fn(t), theta)

    D = np.zeros((n, q))
    prev = model.jac_theta(xhat, u_fn(t_i), theta)
    for j in range(steps):
        t = t_i + j * dt
        xhat = rk4_step(rhs, t, xhat, dt)
        cur = model.jac_theta(xhat, u_fn(t + dt), theta)
        D += 0.5 * dt * (prev + cur)
        prev = cur
    return xhat, D


def window_error(model: NonlinearParamModel, x_ti, x_tnext, u_fn, theta, t_i: float, delta_t: float, dt: float) -> np.ndarray:
    """``xhat(t_i + delta_t) - x(t_i + delta_t)`` with the model restarted at ``x(t_i)``."""
    steps = int(round(delta_t / dt))

    def rhs(t, xx):
        return model.rhs(xx, u_fn(t), theta)

    xhat = np.array(x_ti, dtype=float)
    for j in range(steps):
        xhat = rk4_step(rhs, t_i + j * dt, xhat, dt)
    return xhat - np.atleast_1d(np.asarray(x_tnext, dtype=float))


def window_jacobian(
    model: NonlinearParamModel,
    x_ti,
    u_fn,
    theta,
    t_i: float,
    delta_t: float,
    dt: float,
    method: str = "sensitivity",
) -> np.ndarray:
    """Jacobian of :func:`window_error` in ``theta``, shape ``(n, q)``."""
    if method not in JACOBIANS:
        raise ConfigError(f"method must be one of {JACOBIANS}")
    steps = int(round(delta_t / dt))
    return _integrate_window(model, x_ti, u_fn, theta, t_i, steps, dt, method)[1]


def continuous_error(model: NonlinearParamModel, x, u, theta_hat, xdot_oracle, mode: str = "continuous") -> np.ndarray:
    """``f(x, u, theta_hat) - x'``; ``xdot_oracle`` is the simulator's true derivative.

    Raises
    ------
    UnavailableError
        Outside ``continuous`` mode, where the plant derivative is not measurable.
    """
    if mode != "continuous":
        raise UnavailableError("the instantaneous error needs the plant derivative, which only continuous mode supplies")
    return model.rhs(x, u, theta_hat) - np.atleast_1d(np.asarray(xdot_oracle, dtype=float))


def newton_adaptation(e_bar, jac, k: float, tol: float = DEFAULT_TOL) -> np.ndarray:
    """``theta' = -k jac^+ e``; warns when ``jac`` is rank deficient."""
    jac = np.atleast_2d(np.asarray(jac, dtype=float))
    s = np.linalg.svd(jac, compute_uv=False)
    r = int(np.sum(s > tol * s[0])) if s[0] > 0 else 0
    if r < jac.shape[0]:
        warnings.warn("parameter Jacobian is rank deficient; using the pseudoinverse", RuntimeWarning, stacklevel=2)
    return -k * (pinv(jac, tol) @ np.atleast_1d(np.asarray(e_bar, dtype=float)))


def reduce_error(e, De, gains: IdentNLGains) -> tuple[np.ndarray, np.ndarray]:
    """Map ``(e, De)`` from ``n`` equations to ``q``."""
    e = np.atleast_1d(np.asarray(e, dtype=float))
    De = np.atleast_2d(np.asarray(De, dtype=float))
    q = De.shape[1]
    if gains.reduction == "normal":
        return De.T @ e, De.T @ De
    if gains.reduction == "rows":
        rows = list(gains.rows) if gains.rows is not None else list(range(e.size - q, e.size))
        if len(rows) != q:
            raise ConfigError(f"need exactly {q} rows, got {len(rows)}")
        return e[rows], De[rows]
    if e.size != q:
        raise ConfigError("reduction='none' needs dim(x) == dim(theta)")
    return e, De


def homotopy_ident_step(e, De, theta_hat, lam: float, gains: IdentNLGains, theta0) -> tuple[np.ndarray, float]:
    """``(theta', lam') = alpha gamma tau(A) - k Q (A Q)^+ H``.

    ``A = [lam De + (1 - lam) I | e - theta + theta0]``,
    ``H = lam e + (1 - lam)(theta - theta0)`` and ``Q = diag(1, .., 1, gamma)``.
    ``e`` and ``De`` must already be reduced to ``q`` equations.
    """
    e = np.atleast_1d(np.asarray(e, dtype=float))
    De = np.atleast_2d(np.asarray(De, dtype=float))
    dtheta = np.atleast_1d(theta_hat) - np.atleast_1d(theta0)
    q = e.size
    A = np.column_stack([lam * De + (1.0 - lam) * np.eye(q), e - dtheta])
    H = lam * e + (1.0 - lam) * dtheta
    tau = tangent_vector(A, gains.tol)
    if gains.gamma == 1.0:
        corr = pinv(A, gains.tol) @ H
    else:
        w = np.ones(q + 1)
        w[-1] = gains.gamma
        corr = weighted_pinv(A, w, gains.tol) @ H
    out = gains.alpha * gains.gamma * tau - gains.k * corr
    return out[:-1], float(out[-1])


def ident_nl_log(plant: UncertainGeneralPlant) -> TrajectoryLog:
    return TrajectoryLog(standard_columns(plant.n, plant.m, h=plant.q, q=plant.q, y=0, aux=["e_norm", "window_boundary"]))


def run_ident_nonlinear(
    plant: UncertainGeneralPlant,
    gains: IdentNLGains,
    input_fn: Callable[[float], np.ndarray],
    log: Optional[TrajectoryLog] = None,
    theta_init=None,
) -> RunReport:
    """Estimate ``theta`` along a simulated plant trajectory.

    ``theta`` and ``lam`` are integrated with RK4 next to the plant. In
    discrete mode the reduced ``(e, De)`` pair is recomputed at every window
    boundary from a replay of the model over the window just completed, using
    the current estimate, and held until the next boundary.
    """
    wall0 = time.perf_counter()
    model = plant.model_view()
    n, q = plant.n, plant.q
    dt = gains.dt
    n_steps = max(1, int(round(gains.t_end / dt)))
    theta = np.zeros(q) if theta_init is None else np.atleast_1d(np.asarray(theta_init, dtype=float)).copy()
    theta0 = theta.copy() if gains.theta0 is None else np.atleast_1d(np.asarray(gains.theta0, dtype=float))
    if log is not None and log.columns != ident_nl_log(plant).columns:
        raise ConfigError("log columns do not match this engine")

    def u_fn(t):
        return np.atleast_1d(np.asarray(input_fn(t), dtype=float))

    def flow(e_red, D_red, th, lam, clamped):
        if clamped:
            return newton_adaptation(e_red, D_red, gains.k, gains.tol), 0.0
        return homotopy_ident_step(e_red, D_red, th, lam, gains, theta0)

    def instantaneous(t, x, th):
        u = u_fn(t)
        e = continuous_error(model, x, u, th, plant.true_rhs(x, u), gains.mode)
        return reduce_error(e, model.jac_theta(x, u, th), gains)

    x = plant.x0.copy()
    lam = 0.0
    clamped = False
    t_switch = None
    e_red = np.zeros(q)
    D_red = np.zeros((q, q))
    e_norm = 0.0
    windows: list[ErrorWindow] = []
    m_win = gains.window_steps
    x_ti, t_i = x.copy(), 0.0

    if gains.mode == "continuous":

        def rhs(t, s):
            xx, th, lm = s[:n], s[n : n + q], s[n + q]
            er, Dr = instantaneous(t, xx, th)
            dth, dlam = flow(er, Dr, th, lm, clamped)
            return np.concatenate([plant.true_rhs(xx, u_fn(t)), dth, [dlam]])

    else:

        def rhs(t, s):
            th, lm = s[:q], s[q]
            dth, dlam = flow(e_red, D_red, th, lm, clamped)
            return np.append(dth, dlam)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for k in range(n_steps + 1):
            t = k * dt
            boundary = 0.0
            if gains.mode == "continuous":
                er, _ = instantaneous(t, x, theta)
                e_norm = float(np.linalg.norm(er))
            elif k > 0 and k % m_win == 0:
                xhat_end, D = _integrate_window(model, x_ti, u_fn, theta, t_i, m_win, dt, gains.jacobian)
                e = xhat_end - x
                if gains.scale_window:
                    e, D = e / gains.delta_t, D / gains.delta_t
                e_red, D_red = reduce_error(e, D, gains)
                e_norm = float(np.linalg.norm(e))
                windows.append(ErrorWindow(t_i, t, e, D, xhat_end))
                x_ti, t_i = x.copy(), t
                boundary = 1.0
            if gains.mode == "discrete":
                er = e_red
            H = lam * er + (1.0 - lam) * (theta - theta0)
            if log is not None:
                log.append([t, *x, *u_fn(t), *H, lam, *theta, e_norm, boundary])
            if k == n_steps:
                break
            if gains.mode == "continuous":
                s = rk4_step(rhs, t, np.concatenate([x, theta, [lam]]), dt)
                x, theta, lam = s[:n], s[n : n + q], float(s[n + q])
            else:
                x = rk4_step(lambda tt, xx: plant.true_rhs(xx, u_fn(tt)), t, x, dt)
                s = rk4_step(rhs, t, np.append(theta, lam), dt)
                theta, lam = s[:q], float(s[q])
            if not clamped and lam >= 1.0:
                t_switch = (k + 1) * dt
                if gains.clamp_lambda:
                    clamped = True
                    lam = 1.0

    return RunReport(
        engine=f"ident-nonlinear/{gains.mode}",
        t_switch=t_switch,
        final_t=n_steps * dt,
        final_lambda=lam,
        final_x=x.copy(),
        final_theta=theta.copy(),
        steps=n_steps,
        wall_time=time.perf_counter() - wall0,
        extras={"windows": windows, "final_e_norm": e_norm, "theta0": theta0.copy()},
    )
