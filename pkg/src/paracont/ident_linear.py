"""Online identification for ``x' = f(x, u) + w(x, u) theta``.

A model copy with the current estimate runs next to the plant. The homotopy
output ``H = x - xhat - (1 - lam)(x0 - xhat0)`` starts at zero. The
continuation flow for ``(theta, lam)`` splits as ``M + N x'``. Integrating
the ``N x'`` part by parts gives ``lam`` without ever differentiating the
noisy measurement. The estimate itself comes from the algebraic law
``theta = w^+ (k_theta H - f)``. That law makes the model track the plant with
``xhat' = k_theta H``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .errors import ConfigError, InvalidInputError
from .integrate import rk4_step
from .models import LinearParamModel, UncertainAffinePlant
from .report import RunReport
from .smallmat import DEFAULT_TOL, pinv, tangent_vector
from .trajlog import TrajectoryLog, indexed, standard_columns


@dataclass(frozen=True)
class IdentGains:
    alpha: float
    k: float
    k_theta: float
    theta_bounds: tuple = (-np.inf, np.inf)
    dt: float = 1e-3
    t_end: float = 20.0
    clamp_lambda: bool = True
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        for name in ("alpha", "k", "k_theta", "dt", "t_end"):
            v = getattr(self, name)
            if not v > 0:
                raise ConfigError(f"{name} must be positive, got {v!r}")
        lo, hi = (np.atleast_1d(np.asarray(b, dtype=float)) for b in self.theta_bounds)
        if np.any(lo > hi):
            raise ConfigError("theta bounds are empty")
        object.__setattr__(self, "theta_bounds", (lo, hi))


@dataclass
class IdentLinearState:
    xhat: np.ndarray
    theta_hat: np.ndarray
    lam: float = 0.0
    I_M2: float = 0.0
    I_N2x: float = 0.0
    N2_prev: Optional[np.ndarray] = None
    M2_prev: float = 0.0
    x_prev: Optional[np.ndarray] = None
    N2_initial: Optional[np.ndarray] = None
    x_initial: Optional[np.ndarray] = None
    steps: int = field(default=0)


def compute_H_ident(x, xhat, x0, xhat0, lam: float) -> np.ndarray:
    x, xhat, x0, xhat0 = (np.atleast_1d(np.asarray(a, dtype=float)) for a in (x, xhat, x0, xhat0))
    if not (x.shape == xhat.shape == x0.shape == xhat0.shape):
        raise InvalidInputError("state vectors must have equal shapes")
    return x - xhat - (1.0 - lam) * (x0 - xhat0)


def assemble_ident(model: LinearParamModel, xhat, u, x0, xhat0):
    """``(A1, A2, B_model) = (-w(xhat, u), x0 - xhat0, -f(xhat, u))``.

    The plant derivative, the remaining part of ``B``, is kept out.
    """
    A1 = -model.W(xhat, u)
    A2 = np.atleast_1d(np.asarray(x0, dtype=float)) - np.atleast_1d(np.asarray(xhat0, dtype=float))
    B_model = -np.atleast_1d(np.asarray(model.f(xhat, u), dtype=float))
    return A1, A2, B_model


def split_MN(A1, A2, B_model, H, gains: IdentGains) -> tuple[np.ndarray, np.ndarray]:
    """``M = alpha tau - k A^+ H - A^+ B_model`` and ``N = -A^+`` with ``A = [A1 | A2]``.

    Rows ``0..q-1`` of ``M``/``N`` belong to ``theta``, the last one to ``lam``.
    """
    A = np.column_stack([np.atleast_2d(A1), np.atleast_1d(A2)])
    Ap = pinv(A, gains.tol)
    tau = tangent_vector(A, gains.tol)
    M = gains.alpha * tau - gains.k * (Ap @ np.atleast_1d(H)) - Ap @ np.atleast_1d(B_model)
    return M, -Ap


def advance_lambda(
    state: IdentLinearState,
    M2: Union[float, tuple],
    N2,
    x,
    dt: float,
) -> float:
    """One step of ``lam = int M2 + N2 x - N2(0) x(0) - int N2' x``.

    ``M2`` is either a number or a pair ``(m0, m1)`` meaning
    ``M2 = m0 + m1 lam``. The pair form resolves the trapezoid's dependence on
    the new ``lam`` exactly. The first call only records the initial data and
    returns 0.
    """
    N2 = np.atleast_1d(np.asarray(N2, dtype=float))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    m0, m1 = (float(M2), 0.0) if np.isscalar(M2) else (float(M2[0]), float(M2[1]))
    if state.N2_prev is None:
        state.N2_initial = N2.copy()
        state.x_initial = x.copy()
        state.lam = 0.0
    else:
        N2_dot = (N2 - state.N2_prev) / dt
        state.I_N2x += 0.5 * dt * (N2_dot @ x + N2_dot @ state.x_prev)
        c = state.I_M2 + 0.5 * dt * state.M2_prev + N2 @ x - state.N2_initial @ state.x_initial - state.I_N2x
        lam = (c + 0.5 * dt * m0) / (1.0 - 0.5 * dt * m1)
        state.I_M2 += 0.5 * dt * (state.M2_prev + m0 + m1 * lam)
        state.lam = float(lam)
    state.M2_prev = m0 + m1 * state.lam
    state.N2_prev = N2.copy()
    state.x_prev = x.copy()
    state.steps += 1
    return state.lam


def theta_estimate(model: LinearParamModel, xhat, u, H, gains: IdentGains) -> np.ndarray:
    """``theta = w(xhat, u)^+ (k_theta H - f(xhat, u))`` saturated to the bounds.

    With this sign the model obeys ``xhat' = k_theta H`` wherever ``w`` has
    full rank, which regulates ``H``.
    """
    W = model.W(xhat, u)
    rhs = gains.k_theta * np.atleast_1d(H) - np.atleast_1d(np.asarray(model.f(xhat, u), dtype=float))
    theta = pinv(W, 1e-12) @ rhs
    lo, hi = gains.theta_bounds
    return np.clip(theta, lo, hi)


def _lambda_coeffs(A1, A2, B_model, xm, xhat, x0, xhat0, gains):
    """``M2 = m0 + m1 lam`` and ``N2`` at the current data."""
    A = np.column_stack([np.atleast_2d(A1), np.atleast_1d(A2)])
    Ap = pinv(A, gains.tol)
    tau = tangent_vector(A, gains.tol)
    row = Ap[-1]
    d = np.atleast_1d(x0) - np.atleast_1d(xhat0)
    H_at_0 = xm - xhat - d
    m0 = gains.alpha * tau[-1] - gains.k * (row @ H_at_0) - row @ B_model
    m1 = -gains.k * (row @ d)
    return m0, m1, -row


def _joint_rhs(plant, model, u, s, theta, n):
    return np.concatenate([plant.true_rhs(s[:n], u), model.rhs(s[n:], u, theta)])


def ident_linear_log(plant: UncertainAffinePlant) -> TrajectoryLog:
    n = plant.n
    aux = indexed("xhat", n) + indexed("xm", n) + ["lambda_raw", "lambda_oracle"]
    return TrajectoryLog(standard_columns(n, plant.m, h=n, q=plant.q, y=0, aux=aux))


def run_ident_linear(
    plant: UncertainAffinePlant,
    xhat0,
    input_fn: Callable[[float], np.ndarray],
    gains: IdentGains,
    noise_amplitude: float = 0.0,
    seed: Optional[int] = None,
    log: Optional[TrajectoryLog] = None,
    theta_init=None,
) -> RunReport:
    """Co-simulate plant and model, estimating ``theta`` online.

    Measurement noise is uniform in ``[-a, a]`` and drawn once per step. The
    privileged ``lambda_oracle`` column integrates ``lam' = M2 + N2 x'`` with
    the simulator's true derivative; the identifier never uses it.
    """
    wall0 = time.perf_counter()
    model = plant.model_view()
    n, q = plant.n, plant.q
    if n != q:
        raise ConfigError("the continuation matrix is square-plus-one only when dim(theta) == dim(x)")
    x0 = plant.x0
    xhat0 = np.atleast_1d(np.asarray(xhat0, dtype=float))
    if xhat0.shape != x0.shape:
        raise ConfigError("xhat0 must match the state dimension")
    if np.all(x0 == xhat0):
        raise ConfigError("x0 and xhat0 must differ, otherwise the lambda column vanishes")
    if log is not None and log.columns != ident_linear_log(plant).columns:
        raise ConfigError("log columns do not match this engine")
    rng = np.random.default_rng(seed)
    dt = gains.dt
    n_steps = max(1, int(round(gains.t_end / gains.dt)))
    lo, hi = gains.theta_bounds
    theta_start = np.zeros(q) if theta_init is None else np.atleast_1d(np.asarray(theta_init, dtype=float))
    st = IdentLinearState(xhat=xhat0.copy(), theta_hat=np.clip(theta_start, lo, hi))
    x = x0.copy()
    xhat = xhat0.copy()
    lam_oracle = 0.0
    oracle_prev = None
    clamped = False
    t_switch = None
    max_dev = 0.0

    def u_at(t):
        return np.atleast_1d(np.asarray(input_fn(t), dtype=float))

    for k in range(n_steps + 1):
        t = k * dt
        u = u_at(t)
        xm = x + (rng.uniform(-noise_amplitude, noise_amplitude, n) if noise_amplitude > 0 else 0.0)
        A1, A2, Bm = assemble_ident(model, xhat, u, x0, xhat0)
        m0, m1, N2 = _lambda_coeffs(A1, A2, Bm, xm, xhat, x0, xhat0, gains)
        lam_raw = advance_lambda(st, (m0, m1), N2, xm, dt)
        # privileged oracle: trapezoid on lam' = M2 + N2 x' with the true derivative
        xdot = plant.true_rhs(x, u)
        if oracle_prev is None:
            lam_oracle = 0.0
        else:
            lam_oracle = (lam_oracle + 0.5 * dt * (oracle_prev + m0 + N2 @ xdot)) / (1.0 - 0.5 * dt * m1)
        oracle_prev = m0 + m1 * lam_oracle + N2 @ xdot
        if not clamped:
            max_dev = max(max_dev, abs(lam_raw - lam_oracle))
        if gains.clamp_lambda and (clamped or lam_raw >= 1.0):
            if not clamped:
                t_switch = t
            clamped = True
            lam = 1.0
        else:
            lam = lam_raw
            if t_switch is None and lam_raw >= 1.0:
                t_switch = t
        H = compute_H_ident(xm, xhat, x0, xhat0, lam)
        theta = theta_estimate(model, xhat, u, H, gains)
        st.theta_hat = theta
        if log is not None:
            log.append([t, *x, *u, *H, lam, *theta, *xhat, *xm, lam_raw, lam_oracle])
        if k == n_steps:
            break
        # plant and model advance together; theta is held over the step
        joint = rk4_step(
            lambda tt, ss: _joint_rhs(plant, model, u_at(tt), ss, theta, n),
            t,
            np.concatenate([x, xhat]),
            dt,
            k1=np.concatenate([xdot, model.rhs(xhat, u, theta)]),
        )
        x, xhat = joint[:n], joint[n:]
        st.xhat = xhat

    return RunReport(
        engine="ident-linear",
        t_switch=t_switch,
        final_t=n_steps * dt,
        final_lambda=lam,
        final_x=x.copy(),
        final_theta=st.theta_hat.copy(),
        steps=n_steps,
        wall_time=time.perf_counter() - wall0,
        extras={
            "final_error": float(np.max(np.abs(x - xhat))),
            "initial_error": float(np.max(np.abs(x0 - xhat0))),
            "lambda_oracle_max_dev": max_dev,
            "xhat": xhat.copy(),
        },
    )
