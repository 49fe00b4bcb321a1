"""Continuation control of plants that are not affine in the input.

The homotopy output is ``H = y + y0 lam - y0``, so ``H(x0, 0) = 0`` without a
companion system. Every step the plant is affinized around the input applied
last (``f(x, u) ~ fhat(x) + ghat(x) u``) and the affine feedback law is
applied to that frame. Only relative degree one outputs are handled.
"""

from __future__ import annotations

import time
from typing import Optional

import numpy as np

from .errors import ConfigError, DivergenceError, InvalidInputError, RankDeficientError, StagnationError
from .homotopy_control import ContinuationAssembly, ControlGains, HomotopyState, _sigma_min, feedback, outer_loop
from .integrate import rk4_step
from .models import AffinizationFrame, GeneralPlant, affinize_at, solve_equilibrium_input
from .report import RunReport, StagnationMonitor
from .trajlog import TrajectoryLog, indexed, standard_columns


def compute_H_nonaffine(y, y0, lam: float) -> np.ndarray:
    y = np.atleast_1d(np.asarray(y, dtype=float))
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))
    if y.shape != y0.shape:
        raise InvalidInputError("y and y0 must have the same shape")
    return y + y0 * lam - y0


def assemble_nonaffine(frame: AffinizationFrame, plant: GeneralPlant, x, hs: HomotopyState, y0) -> ContinuationAssembly:
    """``A = [dh/dx ghat | y0]``, ``B = dh/dx fhat`` for relative degree one outputs."""
    if any(r != 1 for r in plant.rel_deg):
        raise ConfigError("frame assembly supports relative degree one outputs only")
    fh, gh = frame.pair(x)
    C = plant.jac_h(x)
    return ContinuationAssembly(C @ gh, np.atleast_1d(np.asarray(y0, dtype=float)), C @ fh)


def frame_residual(plant: GeneralPlant, frame: AffinizationFrame, x, u) -> float:
    """``||f(x, u) - fhat(x) - ghat(x) u||``; zero at ``u = u_i``, quadratic in ``u - u_i``."""
    fh, gh = frame.pair(x)
    return float(np.linalg.norm(plant.rhs(x, u) - fh - gh @ np.atleast_1d(u)))


def nonaffine_log(plant: GeneralPlant) -> TrajectoryLog:
    m = plant.m
    aux = indexed("v", m) + ["lambda_top", "sigma_min", "phase", "frame_residual"]
    return TrajectoryLog(standard_columns(plant.n, m, h=m, aux=aux))


def run_nonaffine_setpoint(
    plant: GeneralPlant,
    gains: ControlGains,
    log: Optional[TrajectoryLog] = None,
    u0=None,
    x0=None,
) -> RunReport:
    """Continuation run with a moving affinization frame refreshed every step.

    Raises
    ------
    EquilibriumNotFoundError, RankDeficientError, StagnationError, DivergenceError
    """
    if any(r != 1 for r in plant.rel_deg):
        raise ConfigError("the nonaffine engine supports relative degree one outputs only")
    wall0 = time.perf_counter()
    n, m = plant.n, plant.m
    x_init = plant.x0 if x0 is None else np.atleast_1d(np.asarray(x0, dtype=float))
    if u0 is None:
        u_i = solve_equilibrium_input(plant, x_init)
    else:
        u_i = np.atleast_1d(np.asarray(u0, dtype=float))
    y0 = plant.output(x_init)
    if log is not None and log.columns != nonaffine_log(plant).columns:
        raise ConfigError("log columns do not match this engine")

    def control(t, s, frame, phase):
        x = s[:n]
        lam = s[n] if phase == 1 else 1.0
        H = compute_H_nonaffine(plant.output(x), y0, lam)
        v = outer_loop(H, gains)
        asm = assemble_nonaffine(frame, plant, x, HomotopyState(lam), y0)
        if phase == 1:
            u, top = feedback(asm, v, gains)
            return u, top, H, v, _sigma_min(asm.A)
        s_vals = np.linalg.svd(asm.A1, compute_uv=False)
        if s_vals[0] == 0.0 or s_vals[-1] <= gains.tol * s_vals[0]:
            raise RankDeficientError("output map lost rank at lambda = 1", t=t, state=x.copy())
        return np.linalg.solve(asm.A1, v - asm.B), 0.0, H, v, float(s_vals[-1])

    def rhs(t, s, frame, phase):
        u, top, *_ = control(t, s, frame, phase)
        dx = plant.rhs(s[:n], u)
        return np.append(dx, top) if phase == 1 else dx

    monitor = StagnationMonitor(gains.stagnation_window, gains.stagnation_eps)
    n_steps = max(1, int(round(gains.t_end / gains.dt)))
    dt = gains.dt
    s = np.append(x_init, 0.0)
    phase = 1
    t_switch = None
    max_u = 0.0
    min_sig = float("inf")
    max_resid = 0.0
    frame = affinize_at(plant, u_i, 0.0)
    for k in range(n_steps + 1):
        t = k * dt
        u, top, H, v, sig = control(t, s, frame, phase)
        umax = float(np.max(np.abs(u)))
        if not np.isfinite(umax) or umax > gains.u_cap:
            raise DivergenceError(f"control magnitude {umax:.3e} exceeds cap {gains.u_cap:.3e}", t=t, state=s.copy())
        max_u = max(max_u, umax)
        if phase == 1:
            min_sig = min(min_sig, sig)
        x = s[:n]
        resid = frame_residual(plant, frame, x, u)
        max_resid = max(max_resid, resid)
        if log is not None:
            lam = s[n] if phase == 1 else 1.0
            log.append([t, *x, *u, *plant.output(x), *H, lam, *v, top, sig, phase, resid])
        # retarget the frame on the input just applied
        frame = affinize_at(plant, u, t)
        if k == n_steps:
            break
        k1 = np.append(plant.rhs(x, u), top) if phase == 1 else plant.rhs(x, u)
        s_next = rk4_step(lambda tt, ss: rhs(tt, ss, frame, phase), t, s if phase == 1 else x, dt, k1=k1)
        if phase == 1:
            s = s_next
            if s[n] >= 1.0:
                phase = 2
                t_switch = (k + 1) * dt
                s = s.copy()
                s[n] = 1.0
            else:
                monitor.update((k + 1) * dt, s[n], state=s.copy())
        else:
            s = np.append(s_next, 1.0)

    if phase == 1:
        raise StagnationError(
            f"lambda reached only {s[n]:.6g} by t_end={gains.t_end:g}", t=n_steps * dt, state=s.copy(), lam=s[n]
        )
    x = s[:n]
    return RunReport(
        engine="nonaffine",
        t_switch=t_switch,
        final_t=n_steps * dt,
        final_lambda=1.0,
        final_x=x.copy(),
        final_y=plant.output(x),
        max_abs_u=max_u,
        min_sigma=min_sig,
        steps=n_steps,
        wall_time=time.perf_counter() - wall0,
        extras={"u0": u_i.copy(), "max_frame_residual": max_resid},
    )
