import math

import numpy as np
import pytest

from paracont.errors import DivergenceError, InvalidInputError, StepBudgetError
from paracont.integrate import OdeProblem, StepConfig, ZeroOrderHold, integrate, rk4_step, suggested_dt, time_grid, zoh_signal


def exp_problem():
    return OdeProblem(lambda t, x: x, [1.0])


def test_constant_solution():
    x = rk4_step(OdeProblem(lambda t, x: np.zeros(2), [1.0, 2.0]), 0.0, [1.0, 2.0], 0.1)
    np.testing.assert_array_equal(x, [1.0, 2.0])


def test_linear_update_is_taylor_polynomial():
    h = 0.1
    x = rk4_step(exp_problem(), 0.0, [1.0], h)
    assert x[0] == pytest.approx(1 + h + h**2 / 2 + h**3 / 6 + h**4 / 24, abs=1e-15)


def test_harmonic_oscillator():
    prob = OdeProblem(lambda t, x: np.array([x[1], -x[0]]), [1.0, 0.0])
    errs = []
    for dt in (0.02, 0.01):
        xe = integrate(prob, StepConfig(dt, 1.0))
        errs.append(np.linalg.norm(xe - [math.cos(1.0), -math.sin(1.0)]))
    assert errs[0] < 1e-8
    assert errs[0] / errs[1] > 15


def test_exponential_accuracy():
    x = integrate(exp_problem(), StepConfig(0.01, 1.0))
    assert abs(x[0] - math.e) <= 1e-8


def test_order_under_halving():
    errs = [abs(integrate(exp_problem(), StepConfig(dt, 1.0))[0] - math.e) for dt in (0.1, 0.05, 0.025)]
    assert math.log2(errs[0] / errs[1]) >= 3.9
    assert math.log2(errs[1] / errs[2]) >= 3.9


def test_zero_rhs_keeps_state():
    x = integrate(OdeProblem(lambda t, x: np.zeros(3), [1.0, -2.0, 3.0]), StepConfig(0.1, 2.0))
    np.testing.assert_array_equal(x, [1.0, -2.0, 3.0])


def test_observer_times_do_not_drift():
    seen = []
    integrate(exp_problem(), StepConfig(0.1, 1.0), lambda t, x: seen.append(t))
    assert len(seen) == 10
    assert seen == [0.1 * (k + 1) for k in range(9)] + [1.0]


def test_observer_can_stop():
    seen = []

    def obs(t, x):
        seen.append(t)
        return x[0] > 2.0

    x = integrate(exp_problem(), StepConfig(0.01, 5.0), obs)
    assert 2.0 < x[0] < 2.1
    assert seen[-1] == pytest.approx(math.log(x[0]), abs=1e-6)


def test_short_final_step():
    cfg = StepConfig(0.3, 1.0)
    assert cfg.n_steps() == 4
    x = integrate(exp_problem(), cfg)
    assert x[0] == pytest.approx(math.e, rel=1e-3)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_carries_time():
    prob = OdeProblem(lambda t, x: x**2, [1.0])
    with pytest.raises(DivergenceError) as info:
        integrate(prob, StepConfig(0.1, 5.0))
    assert info.value.t is not None and info.value.t < 5.0
    assert "t=" in str(info.value)


def test_non_finite_rhs():
    with pytest.raises(DivergenceError):
        rk4_step(lambda t, x: np.array([np.nan]), 0.0, [1.0], 0.1)


def test_step_budget():
    with pytest.raises(StepBudgetError):
        integrate(exp_problem(), StepConfig(0.01, 1.0, max_steps=10))


def test_invalid_config():
    with pytest.raises(InvalidInputError):
        StepConfig(0.0, 1.0).n_steps()
    with pytest.raises(InvalidInputError):
        StepConfig(0.1, -1.0).n_steps()
    with pytest.raises(InvalidInputError):
        OdeProblem(lambda t, x: x, [np.inf])


class TestZeroOrderHold:
    def setup_method(self):
        self.z = zoh_signal([(0.0, [1.0]), (1.0, [2.0])])

    def test_hold(self):
        assert self.z(0.5)[0] == 1.0

    def test_boundary_takes_new_sample(self):
        assert self.z(1.0)[0] == 2.0

    def test_hold_last(self):
        assert self.z(2.7)[0] == 2.0

    def test_before_first(self):
        assert self.z(-1.0)[0] == 1.0

    def test_append(self):
        z = ZeroOrderHold([(0.0, 1.0)])
        z.append(0.5, 3.0)
        assert z(0.7) == 3.0
        with pytest.raises(InvalidInputError):
            z.append(0.1, 4.0)

    def test_rejects_unsorted(self):
        with pytest.raises(InvalidInputError):
            ZeroOrderHold([(1.0, 1.0), (0.0, 2.0)])
        with pytest.raises(InvalidInputError):
            ZeroOrderHold([])


def test_helpers():
    assert suggested_dt(20.0, 100.0) == pytest.approx(5e-5)
    np.testing.assert_array_equal(time_grid(1.0, 0.5, 2), [1.0, 1.5, 2.0])
