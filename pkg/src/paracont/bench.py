"""Registry of the bundled example systems.

Each example carries a flat table of tunable parameters. :func:`run`
type-checks overrides against it, builds the plant and gains, and dispatches
to the matching engine.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Optional

import numpy as np

from .errors import ConfigError, ParacontError
from .homotopy_control import ControlGains, affine_log, run_affine_setpoint
from .ident_linear import IdentGains, ident_linear_log, run_ident_linear
from .ident_nonlinear import IdentNLGains, ident_nl_log, run_ident_nonlinear
from .models import AffinePlant, GeneralPlant, UncertainAffinePlant, UncertainGeneralPlant
from .nonaffine import nonaffine_log, run_nonaffine_setpoint
from .report import RunReport
from .trajlog import TrajectoryLog

# y = x^3 - x + 1 as polynomial coefficients, shared by the two SISO examples
CUBIC_OUTPUT = (1.0, 0.0, -1.0, 1.0)


def _cubic(x):
    return np.polyval(CUBIC_OUTPUT, x)


def _cubic_slope(x):
    return np.polyval(np.polyder(CUBIC_OUTPUT), x)


def mimo_plant(x0=(1.0, 1.0)) -> AffinePlant:
    """``x1' = x2^3 + u1``, ``x2' = x1^3 + u2``; ``y = (x1^3 - x1 + 1, x2^4 cos 2x2)``.

    The decoupling matrix is diagonal and singular on ``3 x1^2 = 1`` and
    wherever ``d/dx2 (x2^4 cos 2x2)`` vanishes.
    """

    def f(x):
        return np.array([x[1] ** 3, x[0] ** 3])

    def h(x):
        return np.array([_cubic(x[0]), x[1] ** 4 * np.cos(2 * x[1])])

    def slopes(x):
        c, s = np.cos(2 * x[1]), np.sin(2 * x[1])
        return np.array([_cubic_slope(x[0]), 4 * x[1] ** 3 * c - 2 * x[1] ** 4 * s])

    return AffinePlant(
        name="affine-mimo",
        n=2,
        m=2,
        f=f,
        g=lambda x: np.eye(2),
        h=h,
        rel_deg=(1, 1),
        decoupling=lambda x: np.diag(slopes(x)),
        drift_out=lambda x: slopes(x) * f(x),
        x0=np.asarray(x0, dtype=float),
        box=(np.array([-2.0, -1.0]), np.array([2.0, 3.0])),
    )


def nonaffine_plant(x0=1.0) -> GeneralPlant:
    """``x' = u^3 (x^2 + 1) + exp(-u)``, ``y = x^3 - x + 1``."""
    return GeneralPlant(
        name="nonaffine-siso",
        n=1,
        m=1,
        f=lambda x, u: u**3 * (x**2 + 1) + np.exp(-u),
        h=_cubic,
        x0=np.array([x0], dtype=float),
        equilibrium_guess=np.array([-1.0]),
        df_du=lambda x, u: 3 * u**2 * (x**2 + 1) - np.exp(-u),
        dh_dx=_cubic_slope,
    )


def cubic_plant(x0=1.0) -> GeneralPlant:
    """``x' = u``, ``y = x^3 - x + 1``; two limit points at ``x = +-1/sqrt(3)``."""
    return GeneralPlant(
        name="cubic-siso",
        n=1,
        m=1,
        f=lambda x, u: np.asarray(u, dtype=float),
        h=_cubic,
        x0=np.array([x0], dtype=float),
        df_du=lambda x, u: np.ones((1, 1)),
        dh_dx=_cubic_slope,
    )


def ident_linear_plant(theta=5.0, x0=0.0) -> UncertainAffinePlant:
    """``x' = (1 - x^2) theta + u``."""
    return UncertainAffinePlant(
        name="ident-linear",
        n=1,
        m=1,
        q=1,
        f=lambda x, u: np.asarray(u, dtype=float),
        w=lambda x, u: 1.0 - x**2,
        theta_true=np.array([theta]),
        x0=np.array([x0]),
    )


def pendulum_plant(theta=0.75, omega=2.0) -> UncertainGeneralPlant:
    """``x1' = x2``, ``x2' = -omega^2 sin(theta x1) + u``."""
    w2 = omega**2

    def f(x, u, th):
        return np.array([x[1], -w2 * np.sin(th[0] * x[0]) + u[0]])

    def df_dtheta(x, u, th):
        return np.array([[0.0], [-w2 * np.cos(th[0] * x[0]) * x[0]]])

    def df_dx(x, u, th):
        return np.array([[0.0, 1.0], [-w2 * np.cos(th[0] * x[0]) * th[0], 0.0]])

    return UncertainGeneralPlant(
        name="pendulum",
        n=2,
        m=1,
        q=1,
        f=f,
        df_dtheta=df_dtheta,
        theta_true=np.array([theta]),
        x0=np.zeros(2),
        df_dx=df_dx,
    )


def limit_points() -> tuple[float, float]:
    """States where the cubic output has zero slope."""
    r = np.sort(np.roots(np.polyder(CUBIC_OUTPUT)).real)
    return float(r[0]), float(r[1])


@dataclass(frozen=True)
class ExampleSpec:
    id: str
    engine: str
    description: str
    defaults: Mapping[str, Any]
    expected: Mapping[str, Any] = field(default_factory=dict)

    def __getattr__(self, name):
        defaults = object.__getattribute__(self, "defaults")
        if name in defaults:
            return defaults[name]
        raise AttributeError(name)

    def params(self, overrides: Optional[Mapping[str, Any]] = None) -> dict:
        return _merge(self, overrides or {})

    @property
    def plant(self):
        return _PLANTS[self.id](self.params())

    @property
    def gains(self):
        return _GAINS[self.engine](self.params())


def _coerce(key: str, default, value):
    if isinstance(value, str):
        text = value.strip()
        if isinstance(default, bool):
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ConfigError(f"{key}: expected a boolean, got {value!r}")
        if isinstance(default, int):
            try:
                return int(text)
            except ValueError:
                raise ConfigError(f"{key}: expected an integer, got {value!r}") from None
        if isinstance(default, float) or default is None:
            if default is None and text.lower() in ("", "none", "auto"):
                return None
            try:
                return float(text)
            except ValueError:
                raise ConfigError(f"{key}: expected a number, got {value!r}") from None
        if isinstance(default, str):
            return text
    if isinstance(default, bool):
        if not isinstance(value, (bool, np.bool_)):
            raise ConfigError(f"{key}: expected a boolean, got {value!r}")
        return bool(value)
    if isinstance(default, (int, float)) or default is None:
        if value is None and default is None:
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float, np.integer, np.floating)):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        return type(default)(value) if default is not None else float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{key}: expected a string, got {value!r}")
        return value
    raise ConfigError(f"{key}: unsupported parameter type")


def _merge(spec: ExampleSpec, overrides: Mapping[str, Any]) -> dict:
    unknown = sorted(set(overrides) - set(spec.defaults))
    if unknown:
        raise ConfigError(f"unknown parameter(s) for {spec.id}: {', '.join(unknown)}; known: {', '.join(spec.defaults)}")
    out = dict(spec.defaults)
    for k, v in overrides.items():
        out[k] = _coerce(k, spec.defaults[k], v)
    return out


def _control_gains(p) -> ControlGains:
    window = p["stagnation_window"]
    return ControlGains(
        alpha=p["alpha"],
        gamma=p["gamma"],
        outer_gain=p["outer_gain"],
        dt=p["dt"],
        t_end=p["t_end"],
        stagnation_window=window if window > 0 else None,
        stagnation_eps=p["stagnation_eps"],
        u_cap=p["u_cap"],
    )


def _ident_gains(p) -> IdentGains:
    return IdentGains(
        alpha=p["alpha"],
        k=p["k"],
        k_theta=p["k_theta"],
        theta_bounds=(p["theta_min"], p["theta_max"]),
        dt=p["dt"],
        t_end=p["t_end"],
        clamp_lambda=p["clamp_lambda"],
    )


def _ident_nl_gains(p) -> IdentNLGains:
    return IdentNLGains(
        alpha=p["alpha"],
        gamma=p["gamma"],
        k=p["k"],
        delta_t=p["delta_t"],
        theta0=None if p["theta0"] is None else (p["theta0"],),
        mode=p["mode"],
        dt=p["dt"],
        t_end=p["t_end"],
        reduction=p["reduction"],
        jacobian=p["jacobian"],
        scale_window=p["scale_window"],
    )


_GAINS: dict[str, Callable] = {
    "affine": _control_gains,
    "nonaffine": _control_gains,
    "ident-linear": _ident_gains,
    "ident-nonlinear": _ident_nl_gains,
}

_PLANTS: dict[str, Callable] = {
    "affine-mimo": lambda p: mimo_plant((p["x0_1"], p["x0_2"])),
    "nonaffine-siso": lambda p: nonaffine_plant(p["x0"]),
    "cubic-siso": lambda p: cubic_plant(p["x0"]),
    "ident-linear": lambda p: ident_linear_plant(p["theta_true"], p["x0"]),
    "ident-nl-continuous": lambda p: pendulum_plant(p["theta_true"], p["omega"]),
    "ident-nl-discrete": lambda p: pendulum_plant(p["theta_true"], p["omega"]),
}

_SETPOINT = dict(gamma=1.0, stagnation_window=0.25, stagnation_eps=1e-3, u_cap=1e3)

_PENDULUM = dict(
    omega=2.0,
    theta_true=0.75,
    input_freq=4.0,
    theta_init=0.0,
    theta0=None,
    k=10.0,
    reduction="normal",
    jacobian="sensitivity",
    scale_window=True,
)

EXAMPLES: dict[str, ExampleSpec] = {
    s.id: s
    for s in (
        ExampleSpec(
            "affine-mimo",
            "affine",
            "two-input affine plant whose decoupling matrix turns singular along the path",
            dict(
                x0_1=1.0, x0_2=1.0, alpha=20.0, outer_gain=100.0, dt=1e-3, t_end=3.0,
                disturbance=True, **_SETPOINT,
            ),
            {"lambda_reaches_1": True, "final_y_inf_no_disturbance": 1e-3},
        ),
        ExampleSpec(
            "nonaffine-siso",
            "nonaffine",
            "scalar plant cubic in the input, output with two limit points",
            dict(x0=1.0, alpha=2.0, outer_gain=10.0, dt=1e-3, t_end=5.0, u0=None, **_SETPOINT),
            {"final_abs_y": 1e-2},
        ),
        ExampleSpec(
            "cubic-siso",
            "nonaffine",
            "integrator with cubic output; classical linearization fails at the limit points",
            dict(x0=1.0, alpha=2.0, outer_gain=10.0, dt=1e-3, t_end=5.0, u0=None, **_SETPOINT),
            {"final_abs_y": 1e-2},
        ),
        ExampleSpec(
            "ident-linear",
            "ident-linear",
            "estimate theta in x' = (1 - x^2) theta + u from noisy state samples",
            dict(
                theta_true=5.0, x0=0.0, xhat0=0.5, alpha=2.5, k=5.0, k_theta=10.0, noise=0.01,
                theta_min=0.0, theta_max=10.0, dt=1e-3, t_end=20.0, clamp_lambda=True, theta_init=0.0,
            ),
            {"theta": 5.0, "tol_noisy": 0.2, "tol_clean": 0.05},
        ),
        ExampleSpec(
            "ident-nl-continuous",
            "ident-nonlinear",
            "pendulum-like plant, theta inside a sine; instantaneous derivative error",
            dict(alpha=1.0, gamma=0.1, delta_t=0.1, mode="continuous", dt=2e-3, t_end=20.0, **_PENDULUM),
            {"theta": 0.75, "tol": 0.01},
        ),
        ExampleSpec(
            "ident-nl-discrete",
            "ident-nonlinear",
            "pendulum-like plant, theta inside a sine; windowed restart error",
            dict(alpha=0.5, gamma=0.05, delta_t=0.1, mode="discrete", dt=5e-3, t_end=60.0, **_PENDULUM),
            {"theta": 0.75, "tol": 0.02},
        ),
    )
}


def list_examples() -> list[ExampleSpec]:
    return list(EXAMPLES.values())


def build(example_id: str) -> ExampleSpec:
    try:
        return EXAMPLES[example_id]
    except KeyError:
        raise ConfigError(f"unknown example {example_id!r}; registered: {', '.join(EXAMPLES)}") from None


def new_log(spec: ExampleSpec, params: Optional[Mapping[str, Any]] = None) -> TrajectoryLog:
    plant = _PLANTS[spec.id](params or spec.params())
    return {
        "affine": affine_log,
        "nonaffine": nonaffine_log,
        "ident-linear": ident_linear_log,
        "ident-nonlinear": ident_nl_log,
    }[spec.engine](plant)


def run(
    example_id: str,
    overrides: Optional[Mapping[str, Any]] = None,
    seed: Optional[int] = None,
    log: bool = True,
) -> tuple[RunReport, Optional[TrajectoryLog]]:
    """Run a registered example; the result depends only on the arguments.

    ``seed`` drives measurement noise where an example has any and defaults
    to 0. Engine errors propagate with the example id prefixed to the message.
    """
    spec = build(example_id)
    p = spec.params(overrides)
    plant = _PLANTS[spec.id](p)
    gains = _GAINS[spec.engine](p)
    traj = new_log(spec, p) if log else None
    try:
        if spec.engine == "affine":
            dist = (lambda t: np.array([1.0, math.sin(20.0 * t)])) if p["disturbance"] else None
            report = run_affine_setpoint(plant, gains, dist, traj)
        elif spec.engine == "nonaffine":
            report = run_nonaffine_setpoint(plant, gains, traj, u0=p["u0"])
        elif spec.engine == "ident-linear":
            report = run_ident_linear(
                plant,
                [p["xhat0"]],
                lambda t: np.array([t]),
                gains,
                noise_amplitude=p["noise"],
                seed=0 if seed is None else seed,
                log=traj,
                theta_init=[p["theta_init"]],
            )
        else:
            freq = p["input_freq"]
            report = run_ident_nonlinear(
                plant, gains, lambda t: np.array([math.sin(freq * t)]), traj, theta_init=[p["theta_init"]]
            )
    except ParacontError as exc:
        exc.args = (f"{example_id}: {exc.args[0] if exc.args else exc}",) + exc.args[1:]
        raise
    report.extras["example"] = example_id
    return report, traj
