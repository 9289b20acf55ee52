import numpy as np
import pytest

from microhil.lti import (LtiModel, ModelError, dc_gain, default_plant_model,
                          load_model, save_model)


def first_order(pole=0.5, gain=1.0, ts=0.1):
    return LtiModel(a=[[pole]], b=[[1.0]], c=[[gain * (1 - pole)]], d=[[0.0]],
                    ts=ts)


class TestModelValidation:
    def test_shape_checks(self):
        with pytest.raises(ModelError):
            LtiModel(a=np.zeros((2, 2)), b=np.zeros((3, 1)),
                     c=np.zeros((1, 2)), d=np.zeros((1, 1)))
        with pytest.raises(ModelError):
            LtiModel(a=np.zeros((2, 2)), b=np.zeros((2, 1)),
                     c=np.zeros((1, 3)), d=np.zeros((1, 1)))

    def test_bad_ts(self):
        with pytest.raises(ModelError):
            LtiModel(a=[[0.5]], b=[[1.0]], c=[[1.0]], d=[[0.0]], ts=0.0)

    def test_stability_flag(self):
        assert first_order(0.9).is_stable()
        assert not first_order(1.1).is_stable()


class TestSimulation:
    def test_step_response_converges_to_dc_gain(self):
        m = first_order(pole=0.5, gain=2.0)
        y = m.step_response(200, 0, 1.0)
        assert abs(y[-1, 0] - 2.0) < 1e-12

    def test_impulse_matches_markov_parameters(self):
        m = first_order(pole=0.5, gain=1.0)
        h = m.impulse_response(5)[:, 0, 0]
        # markov: d, c*b, c*a*b, ...
        expect = [0.0, 0.5, 0.25, 0.125, 0.0625]
        assert np.allclose(h, expect, atol=1e-15)

    def test_input_width_checked(self):
        with pytest.raises(ModelError):
            default_plant_model().simulate(np.zeros((10, 3)))


class TestDcGain:
    def test_pure_gain_model(self):
        # A empty: static map y = D u
        m = LtiModel(a=np.zeros((0, 0)), b=np.zeros((0, 2)),
                     c=np.zeros((2, 0)), d=[[3.0, 0.0], [0.0, 3.0]])
        assert np.allclose(dc_gain(m), 3.0 * np.eye(2))

    def test_default_plant_gain(self):
        g = dc_gain(default_plant_model())
        assert np.allclose(g, [[1.0, 0.1], [0.1, 1.0]], atol=1e-9)

    def test_linearity_in_b(self):
        m = default_plant_model()
        doubled = LtiModel(m.a, 2.0 * m.b, m.c, m.d, ts=m.ts)
        assert np.allclose(dc_gain(doubled), 2.0 * dc_gain(m), atol=1e-12)

    def test_pole_at_one_rejected(self):
        with pytest.raises(ModelError):
            dc_gain(first_order(pole=1.0))


class TestDefaultPlant:
    def test_poles_inside_unit_circle(self):
        m = default_plant_model()
        assert np.max(np.abs(np.linalg.eigvals(m.a))) < 1.0
        assert 0.7 in np.round(np.abs(np.linalg.eigvals(m.a)), 6)

    def test_one_step_input_delay(self):
        h = default_plant_model().impulse_response(4)
        assert np.allclose(h[0], 0.0)
        assert np.allclose(h[1], 0.0)
        assert not np.allclose(h[2], 0.0)


class TestTextFormat:
    def test_save_load_roundtrip(self, tmp_path):
        m = default_plant_model()
        path = str(tmp_path / "model.txt")
        save_model(m, path)
        m2 = load_model(path)
        assert np.array_equal(m.a, m2.a)
        assert np.array_equal(m.b, m2.b)
        assert np.array_equal(m.c, m2.c)
        assert np.array_equal(m.d, m2.d)
        assert m.ts == m2.ts

    def test_load_rejects_garbage(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("1 2\n")
        with pytest.raises(ModelError):
            load_model(str(path))

    def test_load_rejects_empty(self, tmp_path):
        path = tmp_path / "empty.txt"
        path.write_text("# nothing\n")
        with pytest.raises(ModelError):
            load_model(str(path))
