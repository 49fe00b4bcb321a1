import math

import numpy as np
import pytest

from paracont import bench
from paracont.errors import ConfigError, StagnationError

IDS = ["affine-mimo", "nonaffine-siso", "cubic-siso", "ident-linear", "ident-nl-continuous", "ident-nl-discrete"]


def test_registry_order_is_stable():
    assert [s.id for s in bench.list_examples()] == IDS


def test_build_exposes_defaults():
    spec = bench.build("affine-mimo")
    assert spec.alpha == 20.0
    assert spec.outer_gain == 100.0
    assert bench.build("ident-nl-discrete").delta_t == 0.1
    assert bench.build("ident-nl-discrete").gains.window_steps == 20


def test_limit_points():
    lo, hi = bench.limit_points()
    assert lo == pytest.approx(-1 / math.sqrt(3))
    assert hi == pytest.approx(1 / math.sqrt(3))


def test_unknown_example():
    with pytest.raises(ConfigError) as info:
        bench.build("nope")
    assert "affine-mimo" in str(info.value)


class TestOverrides:
    def test_string_values_are_typed(self):
        p = bench.build("affine-mimo").params({"alpha": "5", "disturbance": "false"})
        assert p["alpha"] == 5.0 and isinstance(p["alpha"], float)
        assert p["disturbance"] is False

    def test_optional_number(self):
        spec = bench.build("nonaffine-siso")
        assert spec.params({"u0": "-1.2"})["u0"] == -1.2
        assert spec.params({"u0": "none"})["u0"] is None

    @pytest.mark.parametrize(
        "overrides",
        [{"alpha": "fast"}, {"disturbance": "maybe"}, {"alpha": True}, {"mode": 3}, {"bogus": 1}],
    )
    def test_rejects(self, overrides):
        spec = bench.build("ident-nl-discrete" if "mode" in overrides else "affine-mimo")
        with pytest.raises(ConfigError):
            spec.params(overrides)

    def test_invalid_gain_value(self):
        with pytest.raises(ConfigError):
            bench.run("affine-mimo", {"alpha": -1.0})


def test_plants_match_their_formulas():
    p = bench.mimo_plant()
    x = np.array([0.4, 1.3])
    np.testing.assert_allclose(p.output(x), [0.4**3 - 0.4 + 1, 1.3**4 * math.cos(2.6)])
    np.testing.assert_allclose(p.rhs(x, [1.0, -1.0]), [1.3**3 + 1.0, 0.4**3 - 1.0])
    pend = bench.pendulum_plant()
    np.testing.assert_allclose(pend.true_rhs([0.5, 0.2], [0.1]), [0.2, -4.0 * math.sin(0.375) + 0.1])


def test_run_is_deterministic():
    a_rep, a_log = bench.run("ident-linear", {"t_end": 1.0}, seed=5)
    b_rep, b_log = bench.run("ident-linear", {"t_end": 1.0}, seed=5)
    assert a_log.to_csv_text() == b_log.to_csv_text()
    assert a_rep.extras["example"] == "ident-linear"


def test_engine_errors_carry_example_id():
    with pytest.raises(StagnationError) as info:
        bench.run("affine-mimo", {"alpha": 1e-4}, log=False)
    assert str(info.value).startswith("affine-mimo:")
