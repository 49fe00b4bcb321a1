import math

import numpy as np
import pytest

from paracont.bench import _cubic, _cubic_slope, cubic_plant, limit_points, nonaffine_plant
from paracont.errors import ConfigError
from paracont.homotopy_control import ControlGains, HomotopyState, run_affine_setpoint
from paracont.models import AffinePlant, GeneralPlant, affinize_at, augment_input_integrator
from paracont.nonaffine import (
    assemble_nonaffine,
    compute_H_nonaffine,
    frame_residual,
    nonaffine_log,
    run_nonaffine_setpoint,
)

GAINS = ControlGains(alpha=2.0, outer_gain=10.0, t_end=5.0)


class TestComputeH:
    def test_starts_at_zero(self):
        np.testing.assert_array_equal(compute_H_nonaffine([1.0], [1.0], 0.0), [0.0])

    def test_target_end_is_output(self):
        np.testing.assert_allclose(compute_H_nonaffine([0.3], [1.0], 1.0), [0.3])

    def test_midpoint(self):
        np.testing.assert_allclose(compute_H_nonaffine([0.5, 2.0], [1.0, -1.0], 0.5), [0.0, 2.5])


class TestAssembly:
    def test_initial_assembly(self):
        p = nonaffine_plant()
        u0 = -1.1737445786
        frame = affinize_at(p, [u0])
        asm = assemble_nonaffine(frame, p, [1.0], HomotopyState(0.0), [1.0])
        slope = 3 * u0**2 * 2 - math.exp(-u0)
        np.testing.assert_allclose(asm.A, [[2.0 * slope, 1.0]], rtol=1e-9)
        assert asm.B[0] == pytest.approx(2.0 * (2 * u0**3 + math.exp(-u0) - slope * u0), rel=1e-9)

    def test_limit_point_keeps_lambda_column(self):
        p = cubic_plant()
        xl = limit_points()[1]
        asm = assemble_nonaffine(affinize_at(p, [0.0]), p, [xl], HomotopyState(0.5), [1.0])
        assert abs(asm.A1[0, 0]) < 1e-12
        assert asm.A2[0] == 1.0

    def test_degenerate_input_slope(self):
        # ghat = 0 at x = 0 when 3 u_i^2 = exp(-u_i)
        p = nonaffine_plant()
        ui = 0.0
        while True:
            g = 3 * ui**2 - math.exp(-ui)
            ui -= g / (6 * ui + math.exp(-ui))
            if abs(g) < 1e-15:
                break
        asm = assemble_nonaffine(affinize_at(p, [ui]), p, [0.0], HomotopyState(0.2), [1.0])
        assert abs(asm.A1[0, 0]) < 1e-12

    def test_rejects_higher_degree(self):
        p = GeneralPlant("r2", 1, 1, f=lambda x, u: u, h=lambda x: x, x0=[0.0], rel_deg=(2,))
        with pytest.raises(ConfigError):
            assemble_nonaffine(affinize_at(p, [0.0]), p, [0.0], HomotopyState(0.0), [0.0])
        with pytest.raises(ConfigError):
            run_nonaffine_setpoint(p, GAINS)


def test_frame_residual_is_quadratic():
    p = nonaffine_plant()
    ui = np.array([-0.5])
    frame = affinize_at(p, ui)
    assert frame_residual(p, frame, [0.7], ui) <= 1e-14
    ratios = []
    for du in (0.1, 0.05, 0.025, 0.0125):
        ratios.append(frame_residual(p, frame, [0.7], ui + du) / du**2)
    assert max(ratios) / min(ratios) < 1.2


class TestRuns:
    def test_nonaffine_example(self):
        log = nonaffine_log(nonaffine_plant())
        rep = run_nonaffine_setpoint(nonaffine_plant(), GAINS, log=log)
        assert rep.final_lambda == 1.0
        assert abs(rep.final_y[0]) <= 1e-2
        y = log.column("y1")
        # the output climbs before heading to zero
        assert y.max() > y[0] + 0.1
        assert rep.extras["u0"][0] == pytest.approx(-1.1737445786, abs=1e-8)

    def test_cubic_example_crosses_both_limit_points(self):
        log = nonaffine_log(cubic_plant())
        rep = run_nonaffine_setpoint(cubic_plant(), GAINS, log=log)
        x = log.column("x1")
        lo, hi = limit_points()
        assert x.min() < lo and x.max() >= 1.0 > hi
        assert abs(rep.final_y[0]) <= 1e-6
        # the only real root of x^3 - x + 1
        assert rep.final_x[0] == pytest.approx(-1.3247179572, abs=1e-6)

    def test_matches_affine_engine_on_affine_plant(self):
        affine = AffinePlant(
            "cubic-affine",
            1,
            1,
            f=lambda x: np.zeros(1),
            g=lambda x: np.ones((1, 1)),
            h=_cubic,
            rel_deg=(1,),
            decoupling=lambda x: np.array([[_cubic_slope(x[0])]]),
            drift_out=lambda x: np.zeros(1),
            x0=np.array([1.0]),
        )
        a = run_affine_setpoint(affine, GAINS, homotopy="linear")
        b = run_nonaffine_setpoint(cubic_plant(), GAINS)
        assert a.t_switch == pytest.approx(b.t_switch, abs=1e-12)
        np.testing.assert_allclose(a.final_x, b.final_x, atol=1e-12)
        assert b.extras["max_frame_residual"] == 0.0

    def test_step_halving(self):
        coarse = run_nonaffine_setpoint(nonaffine_plant(), ControlGains(alpha=2.0, outer_gain=10.0, dt=2e-3, t_end=2.0))
        fine = run_nonaffine_setpoint(nonaffine_plant(), ControlGains(alpha=2.0, outer_gain=10.0, dt=1e-3, t_end=2.0))
        assert abs(coarse.t_switch - fine.t_switch) <= 4e-3
        assert abs(coarse.final_x[0] - fine.final_x[0]) <= 1e-2


@pytest.mark.slow
def test_input_integrator_alternative():
    aug = augment_input_integrator(nonaffine_plant())
    rep = run_affine_setpoint(
        aug, ControlGains(alpha=2.0, outer_gain=10.0, rate_gains=(5.0,), t_end=5.0), homotopy="linear"
    )
    assert rep.final_lambda == 1.0
    assert abs(rep.final_y[0]) <= 1e-2
