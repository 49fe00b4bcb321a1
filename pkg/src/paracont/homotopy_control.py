"""Continuation-based setpoint control of input-affine plants.

The homotopy output mixes a chain-of-integrators companion with the plant
output, ``H = (1 - lam) eta + lam y``. Differentiating ``H`` up to the
relative degree gives ``H^(r) = A (u, lam^(r_max)) + B``; the feedback picks
the minimum-norm solution for a commanded ``v`` plus a step along the null
direction of ``A``, which is what moves ``lam`` from 0 to 1. Once ``lam``
reaches 1 the companion is dropped and the same outer loop is closed through
plain feedback linearization.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from math import comb
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigError, DivergenceError, InvalidInputError, ModelError, RankDeficientError, StagnationError
from .integrate import rk4_step
from .models import AffinePlant, LinearCompanion
from .report import RunReport, StagnationMonitor
from .smallmat import DEFAULT_TOL, pinv, tangent_vector, weighted_pinv
from .trajlog import TrajectoryLog, indexed, standard_columns


@dataclass(frozen=True)
class ControlGains:
    """Gains and run horizon for the continuation controllers.

    ``rate_gains[k-1]`` multiplies ``H^(k)`` in the outer loop; it is only
    needed for relative degrees above one. ``u_cap`` aborts a run whose
    control exceeds it in the infinity norm.
    """

    alpha: float = 1.0
    gamma: float = 1.0
    outer_gain: float = 1.0
    dt: float = 1e-3
    t_end: float = 5.0
    stagnation_window: Optional[float] = 0.25
    stagnation_eps: float = 1e-3
    rate_gains: tuple = ()
    u_cap: float = float("inf")
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        object.__setattr__(self, "rate_gains", tuple(float(g) for g in self.rate_gains))
        for name in ("alpha", "gamma", "outer_gain", "dt", "t_end", "u_cap", "tol"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and v > 0):
                raise ConfigError(f"{name} must be positive, got {v!r}")
        if self.stagnation_window is not None and not self.stagnation_window > 0:
            raise ConfigError("stagnation_window must be positive or None")
        if not self.stagnation_eps > 0:
            raise ConfigError("stagnation_eps must be positive")
        if any(g < 0 for g in self.rate_gains):
            raise ConfigError("rate gains must be non-negative")


@dataclass
class HomotopyState:
    """``lam`` and its time derivatives ``lam', ..., lam^(r_max - 1)``."""

    lam: float = 0.0
    derivs: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.derivs = np.atleast_1d(np.asarray(self.derivs, dtype=float))

    @classmethod
    def initial(cls, r_max: int) -> "HomotopyState":
        return cls(0.0, np.zeros(r_max - 1))

    @property
    def Lambda(self) -> np.ndarray:
        return np.concatenate([[self.lam], self.derivs])


@dataclass(frozen=True)
class ContinuationAssembly:
    A1: np.ndarray
    A2: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A1 = np.atleast_2d(np.asarray(self.A1, dtype=float))
        A2 = np.atleast_1d(np.asarray(self.A2, dtype=float))
        B = np.atleast_1d(np.asarray(self.B, dtype=float))
        m = A1.shape[0]
        if A2.shape != (m,) or B.shape != (m,):
            raise InvalidInputError("assembly blocks have inconsistent sizes")
        if not (np.all(np.isfinite(A1)) and np.all(np.isfinite(A2)) and np.all(np.isfinite(B))):
            raise ModelError("non-finite continuation assembly")
        object.__setattr__(self, "A1", A1)
        object.__setattr__(self, "A2", A2)
        object.__setattr__(self, "B", B)

    @property
    def A(self) -> np.ndarray:
        return np.column_stack([self.A1, self.A2])

    @property
    def m(self) -> int:
        return self.A1.shape[0]


def compute_H(y, eta, lam: float) -> np.ndarray:
    y = np.atleast_1d(np.asarray(y, dtype=float))
    eta = np.atleast_1d(np.asarray(eta, dtype=float))
    if y.shape != eta.shape:
        raise InvalidInputError("y and eta must have the same shape")
    return (1.0 - lam) * eta + lam * y


def homotopy_derivatives(y_derivs, eta_derivs, Lambda, rel_deg) -> list[np.ndarray]:
    """``[H_i, H_i', ..., H_i^(r_i-1)]`` per output by the Leibniz rule."""
    out = []
    for yd, ed, r in zip(y_derivs, eta_derivs, rel_deg):
        Hd = np.empty(r)
        for k in range(r):
            Hd[k] = ed[k] + sum(comb(k, j) * Lambda[j] * (yd[k - j] - ed[k - j]) for j in range(k + 1))
        out.append(Hd)
    return out


def linear_homotopy_derivatives(y_derivs, y0, Lambda, rel_deg) -> list[np.ndarray]:
    """Derivatives of ``H = y + y0 lam - y0`` per output."""
    out = []
    for i, r in enumerate(rel_deg):
        Hd = np.array(y_derivs[i][:r], dtype=float) + y0[i] * Lambda[:r]
        Hd[0] -= y0[i]
        out.append(Hd)
    return out


def _check_finite(*arrays) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise ModelError("non-finite plant data")


def assemble(
    plant: AffinePlant,
    companion: LinearCompanion,
    x,
    z,
    hs: HomotopyState,
    y_meas=None,
) -> ContinuationAssembly:
    """Build ``A = [A1 | A2]`` and ``B`` with ``H^(r) = A (u, lam^(r_max)) + B``.

    ``y_meas`` replaces the plant output (not its derivatives) when given.
    Rows with ``r_i < r_max`` have a zero ``A2`` entry; their
    ``(y_i - eta_i) lam^(r_i)`` term is known and sits in ``B``.
    """
    rel = plant.rel_deg
    r_max = max(rel)
    L = hs.Lambda
    if L.size != r_max:
        raise InvalidInputError(f"homotopy state needs {r_max} entries, got {L.size}")
    lam = L[0]
    yd = plant.output_derivatives(x)
    if y_meas is not None:
        y_meas = np.atleast_1d(np.asarray(y_meas, dtype=float))
        yd = [np.concatenate([[y_meas[i]], d[1:]]) for i, d in enumerate(yd)]
    ed = companion.eta_derivatives(z)
    dec = np.asarray(plant.decoupling(x), dtype=float).reshape(plant.m, plant.m)
    drift = np.atleast_1d(np.asarray(plant.drift_out(x), dtype=float))
    _check_finite(dec, drift, *yd)
    m = plant.m
    A1 = lam * dec + (1.0 - lam) * np.eye(m)
    A2 = np.zeros(m)
    B = lam * drift
    for i, r in enumerate(rel):
        diff = yd[i] - ed[i]
        B[i] += sum(comb(r, k) * diff[r - k] * L[k] for k in range(1, r))
        if r == r_max:
            A2[i] = diff[0]
        else:
            B[i] += diff[0] * L[r]
    return ContinuationAssembly(A1, A2, B)


def assemble_linear(plant: AffinePlant, x, hs: HomotopyState, y0, y_meas=None) -> ContinuationAssembly:
    """Assembly for ``H = y + y0 lam - y0`` on an input-affine plant."""
    rel = plant.rel_deg
    r_max = max(rel)
    L = hs.Lambda
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))
    dec = np.asarray(plant.decoupling(x), dtype=float).reshape(plant.m, plant.m)
    drift = np.atleast_1d(np.asarray(plant.drift_out(x), dtype=float)).copy()
    _check_finite(dec, drift)
    A2 = np.zeros(plant.m)
    for i, r in enumerate(rel):
        if r == r_max:
            A2[i] = y0[i]
        else:
            drift[i] += y0[i] * L[r]
    return ContinuationAssembly(dec, A2, drift)


def feedback(assembly: ContinuationAssembly, v, gains: ControlGains) -> tuple[np.ndarray, float]:
    """``(u, lam^(r_max)) = alpha gamma tau(A) + Q (A Q)^+ (v - B)``, ``Q = diag(1, .., 1, gamma)``.

    Raises
    ------
    RankDeficientError
        When ``A`` has lost full row rank.
    """
    A = assembly.A
    v = np.atleast_1d(np.asarray(v, dtype=float))
    tau = tangent_vector(A, gains.tol)
    rhs = v - assembly.B
    if gains.gamma == 1.0:
        corr = pinv(A, gains.tol) @ rhs
    else:
        q = np.ones(A.shape[1])
        q[-1] = gains.gamma
        corr = weighted_pinv(A, q, gains.tol) @ rhs
    out = gains.alpha * gains.gamma * tau + corr
    return out[:-1], float(out[-1])


def outer_loop(H, gains: ControlGains, H_derivs: Optional[Sequence[np.ndarray]] = None) -> np.ndarray:
    """Proportional law ``v = -K H``, with ``-K_k H^(k)`` terms when derivatives are given.

    ``H_derivs[i]`` holds ``H_i, H_i', ...`` for output ``i``; entries beyond
    ``rate_gains`` are ignored.
    """
    H = np.atleast_1d(np.asarray(H, dtype=float))
    v = -gains.outer_gain * H
    if H_derivs is not None:
        for i, hd in enumerate(H_derivs):
            for k in range(1, min(len(hd), len(gains.rate_gains) + 1)):
                v[i] -= gains.rate_gains[k - 1] * hd[k]
    return v


def _sigma_min(A: np.ndarray) -> float:
    if A.shape[0] == 1:
        return float(np.linalg.norm(A))
    return float(np.linalg.svd(A, compute_uv=False)[-1])


def linearizing_control(plant: AffinePlant, x, y_meas, gains: ControlGains):
    """Classical feedback linearization ``u = D(x)^-1 (v - b(x))`` with the same outer loop."""
    yd = plant.output_derivatives(x)
    yd = [np.concatenate([[y_meas[i]], d[1:]]) for i, d in enumerate(yd)]
    dec = np.asarray(plant.decoupling(x), dtype=float).reshape(plant.m, plant.m)
    drift = np.atleast_1d(np.asarray(plant.drift_out(x), dtype=float))
    _check_finite(dec, drift)
    s = np.linalg.svd(dec, compute_uv=False)
    if s[0] == 0.0 or s[-1] <= gains.tol * s[0]:
        raise RankDeficientError(f"decoupling matrix is singular (sigma_min={s[-1]:.3e})", state=np.array(x))
    v = outer_loop(y_meas, gains, yd)
    return np.linalg.solve(dec, v - drift), v, float(s[-1])


def run_affine_setpoint(
    plant: AffinePlant,
    gains: ControlGains,
    disturbance: Optional[Callable[[float], np.ndarray]] = None,
    log: Optional[TrajectoryLog] = None,
    homotopy: str = "convex",
    x0=None,
) -> RunReport:
    """Two-stage continuation run from ``x0`` over ``[0, gains.t_end]``.

    ``homotopy="convex"`` uses the companion mix; ``"linear"`` uses
    ``H = y + y0 lam - y0`` and needs no companion. The disturbance is added
    to the measured output only.

    Raises
    ------
    RankDeficientError, StagnationError, DivergenceError
    """
    if homotopy not in ("convex", "linear"):
        raise ConfigError(f"unknown homotopy {homotopy!r}")
    wall0 = time.perf_counter()
    n, m = plant.n, plant.m
    rel = plant.rel_deg
    r_max = max(rel)
    comp = LinearCompanion(rel)
    nz = comp.dim if homotopy == "convex" else 0
    x_init = plant.x0 if x0 is None else np.atleast_1d(np.asarray(x0, dtype=float))
    y0 = plant.output(x_init)
    dist = disturbance if disturbance is not None else (lambda t: np.zeros(m))

    def measured(t, x):
        return plant.output(x) + np.atleast_1d(np.asarray(dist(t), dtype=float))

    def phase1(t, s):
        x, z, L = s[:n], s[n : n + nz], s[n + nz :]
        hs = HomotopyState(L[0], L[1:])
        ym = measured(t, x)
        yd = plant.output_derivatives(x)
        yd = [np.concatenate([[ym[i]], d[1:]]) for i, d in enumerate(yd)]
        if homotopy == "convex":
            asm = assemble(plant, comp, x, z, hs, y_meas=ym)
            Hd = homotopy_derivatives(yd, comp.eta_derivatives(z), L, rel)
        else:
            asm = assemble_linear(plant, x, hs, y0, y_meas=ym)
            Hd = linear_homotopy_derivatives(yd, y0, L, rel)
        H = np.array([h[0] for h in Hd])
        v = outer_loop(H, gains, Hd)
        u, top = feedback(asm, v, gains)
        return u, top, H, v, ym, asm

    def rhs1(t, s):
        x, z, L = s[:n], s[n : n + nz], s[n + nz :]
        u, top, *_ = phase1(t, s)
        parts = [plant.rhs(x, u)]
        if nz:
            parts.append(comp.derivative(z, u))
        parts.append(np.append(L[1:], top))
        return np.concatenate(parts)

    def phase2(t, x):
        ym = measured(t, x)
        u, v, smin = linearizing_control(plant, x, ym, gains)
        return u, v, ym, smin

    def rhs2(t, x):
        return plant.rhs(x, phase2(t, x)[0])

    if log is not None:
        aux = indexed("ym", m) + indexed("v", m) + ["lambda_top", "sigma_min", "phase"]
        if log.columns != standard_columns(n, m, h=m, aux=aux):
            raise ConfigError("log columns do not match this engine")
    s = np.concatenate([x_init, np.zeros(nz), np.zeros(r_max)])
    monitor = StagnationMonitor(gains.stagnation_window, gains.stagnation_eps)
    n_steps = max(1, int(round(gains.t_end / gains.dt)))
    dt = gains.dt
    t_switch = None
    x = x_init.copy()
    max_u = 0.0
    min_sig = float("inf")
    phase = 1

    def check_u(t, u, state):
        nonlocal max_u
        umax = float(np.max(np.abs(u)))
        if not np.isfinite(umax) or umax > gains.u_cap:
            raise DivergenceError(f"control magnitude {umax:.3e} exceeds cap {gains.u_cap:.3e}", t=t, state=state)
        max_u = max(max_u, umax)

    for k in range(n_steps + 1):
        t = k * dt
        if phase == 1:
            u, top, H, v, ym, asm = phase1(t, s)
            sig = _sigma_min(asm.A)
            lam = s[n + nz]
            x = s[:n]
        else:
            u, v, ym, sig = phase2(t, x)
            top, H, lam = 0.0, ym, 1.0
        check_u(t, u, x)
        if phase == 1:
            min_sig = min(min_sig, sig)
        if log is not None:
            log.append(
                [t, *x, *u, *plant.output(x), *H, lam, *ym, *v, top, sig, phase]
            )
        if k == n_steps:
            break
        if phase == 1:
            k1 = np.concatenate(
                [plant.rhs(x, u)] + ([comp.derivative(s[n : n + nz], u)] if nz else []) + [np.append(s[n + nz + 1 :], top)]
            )
            s = rk4_step(rhs1, t, s, dt, k1=k1)
            t_next = (k + 1) * dt
            lam = s[n + nz]
            if lam >= 1.0:
                t_switch = t_next
                phase = 2
                x = s[:n].copy()
            else:
                monitor.update(t_next, lam, state=s.copy())
        else:
            x = rk4_step(rhs2, t, x, dt, k1=plant.rhs(x, u))

    if phase == 1:
        lam = s[n + nz]
        raise StagnationError(
            f"lambda reached only {lam:.6g} by t_end={gains.t_end:g}", t=n_steps * dt, state=s.copy(), lam=lam
        )
    return RunReport(
        engine="affine",
        t_switch=t_switch,
        final_t=n_steps * dt,
        final_lambda=1.0,
        final_x=x.copy(),
        final_y=plant.output(x),
        max_abs_u=max_u,
        min_sigma=min_sig,
        steps=n_steps,
        wall_time=time.perf_counter() - wall0,
    )


def affine_log(plant: AffinePlant) -> TrajectoryLog:
    m = plant.m
    aux = indexed("ym", m) + indexed("v", m) + ["lambda_top", "sigma_min", "phase"]
    return TrajectoryLog(standard_columns(plant.n, m, h=m, aux=aux))
