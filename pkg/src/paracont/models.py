"""Plant descriptions and the derivative data the engines consume.

Lie-derivative data for affine plants is supplied analytically per model;
:func:`audit_lie_data` cross-checks it against finite differences so that
transcription mistakes surface at registration instead of mid-run.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from .errors import EquilibriumNotFoundError, InvalidInputError, ModelError
from .smallmat import pinv


def _vec(v) -> np.ndarray:
    return np.atleast_1d(np.asarray(v, dtype=float))


def fd_step(z: np.ndarray, rel: float = 1e-6) -> np.ndarray:
    return rel * (1.0 + np.abs(z))


def central_jacobian(fun: Callable[[np.ndarray], np.ndarray], z, rel: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian with per-component step ``rel * (1 + |z_j|)``."""
    z = _vec(z)
    steps = fd_step(z, rel)
    cols = []
    for j in range(z.size):
        dz = np.zeros_like(z)
        dz[j] = steps[j]
        cols.append((_vec(fun(z + dz)) - _vec(fun(z - dz))) / (2.0 * steps[j]))
    return np.column_stack(cols)


@dataclass(frozen=True)
class AffinePlant:
    """``x' = f(x) + g(x) u``, ``y = h(x)`` with declared relative degrees.

    ``decoupling(x)`` returns the m x m matrix of ``L_gk L_f^(r_i-1) h_i`` and
    ``drift_out(x)`` the vector of ``L_f^(r_i) h_i``. ``out_derivs(x)``
    returns, per output, ``[y_i, y_i', ..., y_i^(r_i-1)]``; it may be omitted
    when every relative degree is one.
    """

    name: str
    n: int
    m: int
    f: Callable
    g: Callable
    h: Callable
    rel_deg: tuple
    decoupling: Callable
    drift_out: Callable
    x0: np.ndarray
    out_derivs: Optional[Callable] = None
    box: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "x0", _vec(self.x0))
        object.__setattr__(self, "rel_deg", tuple(int(r) for r in self.rel_deg))
        if len(self.rel_deg) != self.m or any(r < 1 for r in self.rel_deg):
            raise InvalidInputError("need one relative degree >= 1 per output")
        if self.x0.size != self.n:
            raise InvalidInputError("x0 does not match the state dimension")
        if self.out_derivs is None and max(self.rel_deg) > 1:
            raise InvalidInputError("out_derivs is required when a relative degree exceeds 1")

    @property
    def r_max(self) -> int:
        return max(self.rel_deg)

    def rhs(self, x, u) -> np.ndarray:
        x = _vec(x)
        return _vec(self.f(x)) + np.asarray(self.g(x), dtype=float).reshape(self.n, self.m) @ _vec(u)

    def output(self, x) -> np.ndarray:
        return _vec(self.h(_vec(x)))

    def output_derivatives(self, x) -> list[np.ndarray]:
        if self.out_derivs is None:
            y = self.output(x)
            return [np.array([yi]) for yi in y]
        return [_vec(d) for d in self.out_derivs(_vec(x))]


@dataclass(frozen=True)
class GeneralPlant:
    """``x' = f(x, u)``, ``y = h(x)``; Jacobians fall back to central differences."""

    name: str
    n: int
    m: int
    f: Callable
    h: Callable
    x0: np.ndarray
    equilibrium_guess: Optional[np.ndarray] = None
    df_du: Optional[Callable] = None
    dh_dx: Optional[Callable] = None
    rel_deg: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "x0", _vec(self.x0))
        guess = np.zeros(self.m) if self.equilibrium_guess is None else _vec(self.equilibrium_guess)
        object.__setattr__(self, "equilibrium_guess", guess)
        rel = (1,) * self.m if self.rel_deg is None else tuple(int(r) for r in self.rel_deg)
        object.__setattr__(self, "rel_deg", rel)
        if self.x0.size != self.n:
            raise InvalidInputError("x0 does not match the state dimension")

    def rhs(self, x, u) -> np.ndarray:
        return _vec(self.f(_vec(x), _vec(u)))

    def output(self, x) -> np.ndarray:
        return _vec(self.h(_vec(x)))

    def jac_u(self, x, u) -> np.ndarray:
        if self.df_du is not None:
            return np.asarray(self.df_du(_vec(x), _vec(u)), dtype=float).reshape(self.n, self.m)
        x = _vec(x)
        return central_jacobian(lambda uu: self.f(x, uu), _vec(u))

    def jac_x(self, x, u) -> np.ndarray:
        u = _vec(u)
        return central_jacobian(lambda xx: self.f(xx, u), x)

    def jac_h(self, x) -> np.ndarray:
        if self.dh_dx is not None:
            return np.asarray(self.dh_dx(_vec(x)), dtype=float).reshape(self.m, self.n)
        return central_jacobian(self.h, x)


@dataclass(frozen=True)
class LinearParamModel:
    """Identifier-side view of ``x' = f(x,u) + w(x,u) theta``; no true parameter."""

    n: int
    q: int
    f: Callable
    w: Callable

    def W(self, x, u) -> np.ndarray:
        return np.asarray(self.w(_vec(x), _vec(u)), dtype=float).reshape(self.n, self.q)

    def rhs(self, x, u, theta) -> np.ndarray:
        return _vec(self.f(_vec(x), _vec(u))) + self.W(x, u) @ _vec(theta)


@dataclass(frozen=True)
class UncertainAffinePlant:
    name: str
    n: int
    m: int
    q: int
    f: Callable
    w: Callable
    theta_true: np.ndarray
    x0: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "theta_true", _vec(self.theta_true))
        object.__setattr__(self, "x0", _vec(self.x0))

    def model_view(self) -> LinearParamModel:
        return LinearParamModel(self.n, self.q, self.f, self.w)

    def true_rhs(self, x, u) -> np.ndarray:
        return self.model_view().rhs(x, u, self.theta_true)


@dataclass(frozen=True)
class NonlinearParamModel:
    """Identifier-side view of ``x' = f(x, u, theta)``."""

    n: int
    q: int
    f: Callable
    df_dtheta: Callable
    df_dx: Optional[Callable] = None

    def rhs(self, x, u, theta) -> np.ndarray:
        return _vec(self.f(_vec(x), _vec(u), _vec(theta)))

    def jac_theta(self, x, u, theta) -> np.ndarray:
        return np.asarray(self.df_dtheta(_vec(x), _vec(u), _vec(theta)), dtype=float).reshape(self.n, self.q)

    def jac_x(self, x, u, theta) -> np.ndarray:
        if self.df_dx is not None:
            return np.asarray(self.df_dx(_vec(x), _vec(u), _vec(theta)), dtype=float).reshape(self.n, self.n)
        u, theta = _vec(u), _vec(theta)
        return central_jacobian(lambda xx: self.f(xx, u, theta), x)


@dataclass(frozen=True)
class UncertainGeneralPlant:
    name: str
    n: int
    m: int
    q: int
    f: Callable
    df_dtheta: Callable
    theta_true: np.ndarray
    x0: np.ndarray
    df_dx: Optional[Callable] = None

    def __post_init__(self):
        object.__setattr__(self, "theta_true", _vec(self.theta_true))
        object.__setattr__(self, "x0", _vec(self.x0))

    def model_view(self) -> NonlinearParamModel:
        return NonlinearParamModel(self.n, self.q, self.f, self.df_dtheta, self.df_dx)

    def true_rhs(self, x, u) -> np.ndarray:
        return _vec(self.f(_vec(x), _vec(u), self.theta_true))


@dataclass(frozen=True)
class LinearCompanion:
    """Per-output integrator chains; chain i has length ``rel_deg[i]``.

    The state is laid out chain after chain, each as ``(eta_i, eta_i', ...)``.
    """

    rel_deg: tuple
    offsets: tuple = field(init=False)

    def __post_init__(self):
        rel = tuple(int(r) for r in self.rel_deg)
        if not rel or any(r < 1 for r in rel):
            raise InvalidInputError("relative degrees must be >= 1")
        object.__setattr__(self, "rel_deg", rel)
        object.__setattr__(self, "offsets", tuple(int(o) for o in np.cumsum((0,) + rel[:-1])))

    @property
    def dim(self) -> int:
        return sum(self.rel_deg)

    def zero_state(self) -> np.ndarray:
        return np.zeros(self.dim)

    def derivative(self, z, u) -> np.ndarray:
        z = _vec(z)
        u = _vec(u)
        dz = np.empty_like(z)
        for i, (off, r) in enumerate(zip(self.offsets, self.rel_deg)):
            dz[off : off + r - 1] = z[off + 1 : off + r]
            dz[off + r - 1] = u[i]
        return dz

    def eta(self, z) -> np.ndarray:
        z = _vec(z)
        return z[list(self.offsets)]

    def eta_derivatives(self, z) -> list[np.ndarray]:
        z = _vec(z)
        return [z[off : off + r].copy() for off, r in zip(self.offsets, self.rel_deg)]


def companion_step(companion: LinearCompanion, z, u) -> np.ndarray:
    return companion.derivative(z, u)


class PointLinearization(NamedTuple):
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    dx: np.ndarray
    dy: np.ndarray


def linearize_at_point(plant: GeneralPlant, x0, u0) -> PointLinearization:
    """Affine approximation ``x' ~ A x + B u + dx``, ``y ~ C x + dy`` around ``(x0, u0)``."""
    x0 = _vec(x0)
    u0 = _vec(u0)
    A = central_jacobian(lambda xx: plant.f(xx, u0), x0)
    B = central_jacobian(lambda uu: plant.f(x0, uu), u0)
    C = central_jacobian(plant.h, x0)
    dx = plant.rhs(x0, u0) - A @ x0 - B @ u0
    dy = plant.output(x0) - C @ x0
    for arr in (A, B, C, dx, dy):
        if not np.all(np.isfinite(arr)):
            raise ModelError(f"non-finite linearization of {plant.name}")
    return PointLinearization(A, B, C, dx, dy)


@dataclass(frozen=True)
class AffinizationFrame:
    """Input-affine approximation of a general plant around the input ``u_i``.

    ``fhat(x) + ghat(x) @ u_i == f(x, u_i)`` holds exactly by construction.
    """

    u_i: np.ndarray
    fhat: Callable
    ghat: Callable
    t_i: float = 0.0
    evaluate: Optional[Callable] = None

    def pair(self, x) -> tuple[np.ndarray, np.ndarray]:
        """``(fhat(x), ghat(x))`` sharing one Jacobian evaluation when possible."""
        if self.evaluate is not None:
            return self.evaluate(x)
        return _vec(self.fhat(x)), np.atleast_2d(np.asarray(self.ghat(x), dtype=float))


def affinize_at(plant: GeneralPlant, u_i, t_i: float = 0.0) -> AffinizationFrame:
    u_i = _vec(u_i).copy()

    def evaluate(x):
        G = plant.jac_u(x, u_i)
        return plant.rhs(x, u_i) - G @ u_i, G

    return AffinizationFrame(
        u_i,
        fhat=lambda x: evaluate(x)[0],
        ghat=lambda x: evaluate(x)[1],
        t_i=t_i,
        evaluate=evaluate,
    )


def solve_equilibrium_input(
    plant: GeneralPlant,
    x0=None,
    guess=None,
    tol: float = 1e-9,
    max_iter: int = 50,
) -> np.ndarray:
    """Newton iteration for ``u0`` with ``f(x0, u0) = 0``.

    Uses the pseudoinverse of ``df/du`` so non-square plants take the
    least-squares step.
    """
    x0 = plant.x0 if x0 is None else _vec(x0)
    u = plant.equilibrium_guess.copy() if guess is None else _vec(guess).copy()
    for _ in range(max_iter):
        r = plant.rhs(x0, u)
        if not np.all(np.isfinite(r)):
            break
        if np.linalg.norm(r) <= tol:
            return u
        J = plant.jac_u(x0, u)
        if not np.all(np.isfinite(J)):
            break
        u = u - pinv(J) @ r
    r = plant.rhs(x0, u)
    if np.all(np.isfinite(r)) and np.linalg.norm(r) <= tol:
        return u
    raise EquilibriumNotFoundError(
        f"no equilibrium input for {plant.name} from guess {plant.equilibrium_guess}"
    )


@dataclass
class AuditResult:
    max_rel_error: float
    samples: int
    ok: bool


def audit_lie_data(
    plant: AffinePlant,
    samples: int = 20,
    seed: int = 0,
    rtol: float = 1e-4,
    spread: float = 1.0,
    raise_on_fail: bool = True,
) -> AuditResult:
    """Compare ``drift_out + decoupling @ u`` with a finite-difference derivative.

    For each output the highest available derivative ``y_i^(r_i-1)`` is
    differentiated along ``f + g u`` at random states and inputs.
    """
    rng = np.random.default_rng(seed)
    if plant.box is not None:
        lo, hi = (_vec(b) for b in plant.box)
    else:
        lo, hi = plant.x0 - spread, plant.x0 + spread
    worst = 0.0
    for _ in range(samples):
        x = rng.uniform(lo, hi)
        u = rng.uniform(-1.0, 1.0, plant.m)
        F = plant.rhs(x, u)
        predicted = _vec(plant.drift_out(x)) + np.asarray(plant.decoupling(x), dtype=float) @ u
        eps = 1e-6 * (1.0 + np.linalg.norm(x)) / max(np.linalg.norm(F), 1e-12)
        up = plant.output_derivatives(x + eps * F)
        dn = plant.output_derivatives(x - eps * F)
        for i, r in enumerate(plant.rel_deg):
            fd = (up[i][r - 1] - dn[i][r - 1]) / (2.0 * eps)
            err = abs(fd - predicted[i]) / max(1.0, abs(predicted[i]))
            worst = max(worst, err)
    ok = worst <= rtol
    if not ok and raise_on_fail:
        raise ModelError(f"Lie data of {plant.name} disagrees with finite differences ({worst:.2e})")
    return AuditResult(worst, samples, ok)


def augment_input_integrator(plant: GeneralPlant, name: Optional[str] = None) -> AffinePlant:
    """Wrap a SISO-per-channel general plant as ``x' = f(x, x_u)``, ``x_u' = u``.

    Every relative degree rises by one. The required Lie data is formed from
    central differences of ``h`` and ``f``; only ``r = 1`` base plants are
    supported.
    """
    if any(r != 1 for r in plant.rel_deg):
        raise InvalidInputError("augmentation is implemented for relative degree one plants")
    n, m = plant.n, plant.m

    def split(s):
        s = _vec(s)
        return s[:n], s[n:]

    def f_aug(s):
        x, xu = split(s)
        return np.concatenate([plant.rhs(x, xu), np.zeros(m)])

    def g_aug(s):
        return np.vstack([np.zeros((n, m)), np.eye(m)])

    def first_derivative(s):
        x, xu = split(s)
        return plant.jac_h(x) @ plant.rhs(x, xu)

    def out_derivs(s):
        x, _ = split(s)
        y = plant.output(x)
        yd = first_derivative(s)
        return [np.array([y[i], yd[i]]) for i in range(m)]

    def grad_first(s):
        return central_jacobian(first_derivative, s, rel=1e-5)

    def decoupling(s):
        return grad_first(s)[:, n:]

    def drift_out(s):
        return grad_first(s) @ f_aug(s)

    u0 = solve_equilibrium_input(plant)
    return AffinePlant(
        name=name or f"{plant.name}+integrator",
        n=n + m,
        m=m,
        f=f_aug,
        g=g_aug,
        h=lambda s: plant.output(split(s)[0]),
        rel_deg=(2,) * m,
        decoupling=decoupling,
        drift_out=drift_out,
        x0=np.concatenate([plant.x0, u0]),
        out_derivs=out_derivs,
    )


def finite(values: Sequence[np.ndarray], what: str) -> None:
    for v in values:
        if not np.all(np.isfinite(v)):
            raise ModelError(f"non-finite {what}")
