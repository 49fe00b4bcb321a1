import math
import warnings

import numpy as np
import pytest

from paracont.bench import pendulum_plant
from paracont.errors import ConfigError, UnavailableError
from paracont.ident_nonlinear import (
    IdentNLGains,
    continuous_error,
    homotopy_ident_step,
    ident_nl_log,
    newton_adaptation,
    reduce_error,
    run_ident_nonlinear,
    window_error,
    window_jacobian,
)
from paracont.integrate import rk4_step
from paracont.models import NonlinearParamModel
from paracont.smallmat import tangent_vector

DT = 1e-3


def u_sin(t):
    return np.array([math.sin(4.0 * t)])


def plant_path(plant, x0, t0, steps, dt=DT):
    x = np.array(x0, dtype=float)
    for j in range(steps):
        x = rk4_step(lambda t, xx: plant.true_rhs(xx, u_sin(t)), t0 + j * dt, x, dt)
    return x


class TestWindowError:
    def test_zero_at_true_parameter(self):
        plant = pendulum_plant()
        x_ti = np.array([0.3, -0.2])
        x_end = plant_path(plant, x_ti, 1.0, 100)
        e = window_error(plant.model_view(), x_ti, x_end, u_sin, [0.75], 1.0, 0.1, DT)
        np.testing.assert_array_equal(e, 0.0)

    def test_parameter_free_dynamics(self):
        model = NonlinearParamModel(1, 1, f=lambda x, u, th: -x, df_dtheta=lambda x, u, th: np.zeros((1, 1)))
        e1 = window_error(model, [1.0], [0.0], u_sin, [0.0], 0.0, 0.5, DT)
        e2 = window_error(model, [1.0], [0.0], u_sin, [9.0], 0.0, 0.5, DT)
        assert e1[0] == pytest.approx(math.exp(-0.5), abs=1e-12)
        assert e1[0] == e2[0]
        np.testing.assert_array_equal(window_jacobian(model, [1.0], u_sin, [0.0], 0.0, 0.5, DT), 0.0)


class TestWindowJacobian:
    def test_linear_parameter(self):
        # x' = theta u with u = 1 gives xhat_end = x + theta dt_window
        model = NonlinearParamModel(
            1, 1, f=lambda x, u, th: th * u, df_dtheta=lambda x, u, th: np.array([[u[0]]]), df_dx=lambda x, u, th: np.zeros((1, 1))
        )
        one = lambda t: np.array([1.0])
        for method in ("sensitivity", "partial"):
            assert window_jacobian(model, [0.0], one, [2.0], 0.0, 0.1, DT, method)[0, 0] == pytest.approx(0.1, abs=1e-14)

    @pytest.mark.parametrize("seed", range(5))
    def test_sensitivity_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        model = pendulum_plant().model_view()
        x_ti = rng.uniform(-1, 1, 2)
        th = rng.uniform(0.2, 1.5, 1)
        t_i = float(rng.uniform(0, 10))
        D = window_jacobian(model, x_ti, u_sin, th, t_i, 0.1, DT)
        h = 1e-6
        fd = (
            window_error(model, x_ti, np.zeros(2), u_sin, th + h, t_i, 0.1, DT)
            - window_error(model, x_ti, np.zeros(2), u_sin, th - h, t_i, 0.1, DT)
        ) / (2 * h)
        np.testing.assert_allclose(D[:, 0], fd, rtol=1e-6, atol=1e-12)

    def test_partial_form_is_first_order_in_window(self):
        model = pendulum_plant().model_view()
        x_ti = np.array([0.8, 0.1])
        errs = []
        for dtw in (0.1, 0.05):
            S = window_jacobian(model, x_ti, u_sin, [0.75], 0.0, dtw, DT, "sensitivity")
            P = window_jacobian(model, x_ti, u_sin, [0.75], 0.0, dtw, DT, "partial")
            errs.append(abs(S[1, 0] - P[1, 0]) / abs(S[1, 0]))
        # relative gap of the partial form shrinks like the window squared
        assert 3.0 < errs[0] / errs[1] < 5.0

    def test_unknown_method(self):
        with pytest.raises(ConfigError):
            window_jacobian(pendulum_plant().model_view(), [0.0, 0.0], u_sin, [0.75], 0.0, 0.1, DT, "exact")


class TestContinuousError:
    def test_example(self):
        model = pendulum_plant().model_view()
        e = continuous_error(model, [0.5, 0.0], [0.0], [0.0], [0.0, -4.0 * math.sin(0.375)])
        np.testing.assert_allclose(e, [0.0, 4.0 * math.sin(0.375)])

    def test_zero_at_true_parameter(self):
        plant = pendulum_plant()
        x, u = np.array([0.2, -0.7]), np.array([0.3])
        np.testing.assert_array_equal(continuous_error(plant.model_view(), x, u, [0.75], plant.true_rhs(x, u)), 0.0)

    def test_unavailable_in_discrete_mode(self):
        with pytest.raises(UnavailableError):
            continuous_error(pendulum_plant().model_view(), [0.0, 0.0], [0.0], [0.75], [0.0, 0.0], mode="discrete")


class TestNewton:
    def test_example(self):
        assert newton_adaptation([0.5], [[2.0]], 10.0)[0] == pytest.approx(-2.5)

    def test_root_is_stationary(self):
        np.testing.assert_array_equal(newton_adaptation([0.0], [[2.0]], 10.0), [0.0])

    def test_warns_on_singular_jacobian(self):
        with pytest.warns(RuntimeWarning):
            out = newton_adaptation([0.5], [[0.0]], 10.0)
        np.testing.assert_array_equal(out, [0.0])


class TestHomotopyStep:
    def test_scalar_example(self):
        g = IdentNLGains(alpha=1.0, gamma=1.0, k=10.0)
        dth, dlam = homotopy_ident_step([0.4], [[2.0]], [0.6], 0.5, g, [0.5])
        A = np.array([[1.5, 0.3]])
        H = 0.5 * 0.4 + 0.5 * 0.1
        out = np.append(dth, dlam)
        np.testing.assert_allclose(A @ out, [-10.0 * H], atol=1e-12)
        assert tangent_vector(A) @ out == pytest.approx(1.0, abs=1e-12)

    def test_weighted_rate(self):
        g = IdentNLGains(alpha=2.0, gamma=0.1, k=10.0)
        dth, dlam = homotopy_ident_step([0.4], [[2.0]], [0.6], 0.5, g, [0.5])
        np.testing.assert_allclose(np.array([[1.5, 0.3]]) @ np.append(dth, dlam), [-2.5], atol=1e-12)

    def test_anchor_moves_along_tangent(self):
        g = IdentNLGains(alpha=1.0, gamma=1.0, k=10.0)
        dth, dlam = homotopy_ident_step([0.4], [[2.0]], [0.5], 0.0, g, [0.5])
        # A = [1 | 0.4], H = 0: pure predictor, lambda increases
        np.testing.assert_allclose(np.append(dth, dlam), np.array([-0.4, 1.0]) / math.hypot(0.4, 1.0), atol=1e-14)


class TestReduce:
    def test_normal(self):
        g = IdentNLGains(alpha=1.0, gamma=1.0, k=1.0)
        e, D = reduce_error([1.0, 2.0], [[0.0], [3.0]], g)
        np.testing.assert_allclose(e, [6.0])
        np.testing.assert_allclose(D, [[9.0]])

    def test_rows(self):
        g = IdentNLGains(alpha=1.0, gamma=1.0, k=1.0, reduction="rows")
        e, D = reduce_error([1.0, 2.0], [[0.0], [3.0]], g)
        np.testing.assert_allclose(e, [2.0])
        np.testing.assert_allclose(D, [[3.0]])

    def test_none_needs_square(self):
        with pytest.raises(ConfigError):
            reduce_error([1.0, 2.0], [[0.0], [3.0]], IdentNLGains(alpha=1.0, gamma=1.0, k=1.0, reduction="none"))


class TestConfig:
    def test_rejects_mode(self):
        with pytest.raises(ConfigError):
            IdentNLGains(alpha=1.0, gamma=1.0, k=1.0, mode="batch")

    def test_window_must_be_whole_steps(self):
        with pytest.raises(ConfigError):
            IdentNLGains(alpha=1.0, gamma=1.0, k=1.0, mode="discrete", delta_t=0.1, dt=0.03)

    def test_rejects_non_positive(self):
        with pytest.raises(ConfigError):
            IdentNLGains(alpha=1.0, gamma=0.0, k=1.0)


class TestRuns:
    def test_discrete_zero_order_hold(self):
        g = IdentNLGains(alpha=0.5, gamma=0.05, k=10.0, mode="discrete", delta_t=0.1, dt=5e-3, t_end=2.0)
        plant = pendulum_plant()
        log = ident_nl_log(plant)
        rep = run_ident_nonlinear(plant, g, u_sin, log)
        boundary = log.column("window_boundary")
        e_norm = log.column("e_norm")
        assert int(boundary.sum()) == 20 == len(rep.extras["windows"])
        # the error signal only changes at window boundaries
        changes = np.nonzero(np.diff(e_norm))[0] + 1
        assert set(changes) <= set(np.nonzero(boundary)[0])
        np.testing.assert_array_equal(e_norm[:20], 0.0)

    def test_true_parameter_is_stationary_after_switch(self):
        g = IdentNLGains(alpha=1.0, gamma=0.1, k=10.0, dt=2e-3, t_end=1.0, theta0=(0.75,))
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            rep = run_ident_nonlinear(pendulum_plant(), g, u_sin, theta_init=[0.75])
        # starting on the root, only lambda moves
        assert rep.final_theta[0] == pytest.approx(0.75, abs=1e-9)
        assert rep.final_lambda > 0.0

    def test_continuous_example(self):
        g = IdentNLGains(alpha=1.0, gamma=0.1, k=10.0, dt=2e-3, t_end=20.0)
        rep = run_ident_nonlinear(pendulum_plant(), g, u_sin)
        assert rep.final_lambda == 1.0
        assert abs(rep.final_theta[0] - 0.75) <= 0.01
