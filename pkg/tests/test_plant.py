import math

import numpy as np
import pytest

from microhil.lti import dc_gain, default_plant_model
from microhil.plant import (BatteryModel, InverterModel, LoadEvent, Microgrid,
                            battery_update, demand_profile, initial_state,
                            sample_pmu, step_plant)


@pytest.fixture
def model():
    return default_plant_model()


@pytest.fixture
def inverter():
    return InverterModel()


class TestBattery:
    def test_zero_net_power_keeps_soc(self):
        b = BatteryModel(soc=60.0)
        assert battery_update(b, 50.0, 50.0, 0.1).soc == 60.0

    def test_full_discharge_step(self):
        # independent arithmetic: 100 * 250 kW * 0.1 s / 3600 / 1000 kWh
        expected_drop = 100.0 * 250.0 * (0.1 / 3600.0) / 1000.0
        assert abs(expected_drop - 6.944e-4) < 1e-6
        b = battery_update(BatteryModel(soc=50.0), 250.0, 0.0, 0.1)
        assert abs((50.0 - b.soc) - expected_drop) < 1e-12
        assert not b.saturated

    def test_floor_clamp_sets_flag(self):
        b = battery_update(BatteryModel(soc=0.0), 100.0, 0.0, 0.1)
        assert b.soc == 0.0
        assert b.saturated

    def test_charging_raises_soc(self):
        b = battery_update(BatteryModel(soc=50.0), -100.0, 0.0, 0.1)
        assert b.soc > 50.0

    def test_invalid_soc_rejected(self):
        with pytest.raises(ValueError):
            BatteryModel(soc=101.0)


class TestDemandProfile:
    def test_base_plus_sinusoid_exactly(self):
        t, base = 37.0, 200.0
        expected = base + 0.05 * base * math.sin(2 * math.pi * t / 600.0)
        assert demand_profile(t, base) == expected

    def test_event_with_spike(self):
        ev = LoadEvent(t_on=10.0, t_off=60.0, magnitude=100.0,
                       transient_spike=40.0, spike_duration=0.3)
        base_part = demand_profile(10.1, 200.0)
        assert demand_profile(10.1, 200.0, (ev,)) == base_part + 140.0
        # after the spike window, only the block remains
        assert demand_profile(11.0, 200.0, (ev,)) == \
            demand_profile(11.0, 200.0) + 100.0

    def test_event_off(self):
        ev = LoadEvent(t_on=10.0, t_off=60.0, magnitude=100.0)
        assert demand_profile(60.0 + 1e-9, 200.0, (ev,)) == \
            demand_profile(60.0 + 1e-9, 200.0)

    def test_reproducible_for_seed(self):
        vals1 = [demand_profile(t, 200.0, (), 42, 5.0) for t in
                 np.linspace(0, 100, 57)]
        vals2 = [demand_profile(t, 200.0, (), 42, 5.0) for t in
                 np.linspace(0, 100, 57)]
        assert vals1 == vals2
        vals3 = [demand_profile(t, 200.0, (), 43, 5.0) for t in
                 np.linspace(0, 100, 57)]
        assert vals1 != vals3

    def test_never_negative(self):
        for t in np.linspace(0, 600, 200):
            assert demand_profile(t, 1.0, (), 7, 50.0) >= 0.0

    def test_rejects_negative_time(self):
        with pytest.raises(ValueError):
            demand_profile(-1.0, 200.0)


class TestStepPlant:
    def test_zero_injection_passthrough(self, model, inverter):
        s = step_plant(initial_state(model), 0.0, 0.0, 200.0, 0.0, 0.0,
                       model, inverter)
        assert s.p_pcc == 200.0
        assert s.q_pcc == 0.0

    def test_amplitude_limit(self, model):
        inv = InverterModel(ramp_limit=1e6)
        s = step_plant(initial_state(model), 300.0, 0.0, 200.0, 0.0, 0.0,
                       model, inv)
        assert s.p_inv_applied == 250.0

    def test_rate_limit(self, model):
        inv = InverterModel(ramp_limit=8.0)
        s = step_plant(initial_state(model), 250.0, 0.0, 200.0, 0.0, 0.0,
                       model, inv)
        assert abs(s.p_inv_applied - 0.8) < 1e-12

    def test_nonfinite_rejected(self, model, inverter):
        s0 = initial_state(model)
        s = step_plant(s0, float("nan"), 0.0, 200.0, 0.0, 0.0, model, inverter)
        assert s.fault
        assert s.t == s0.t
        assert s.p_inv_applied == s0.p_inv_applied

    def test_limits_hold_over_run(self, model):
        inv = InverterModel(ramp_limit=8.0)
        s = initial_state(model)
        rng = np.random.default_rng(5)
        prev_p = s.p_inv_applied
        for _ in range(300):
            s = step_plant(s, rng.uniform(-400, 400), rng.uniform(-400, 400),
                           200.0, 0.0, 0.0, model, inv)
            assert abs(s.p_inv_applied) <= 250.0 + 1e-12
            assert abs(s.p_inv_applied - prev_p) <= 8.0 * model.ts + 1e-12
            prev_p = s.p_inv_applied

    def test_dc_gain_consistency(self, model):
        # constant cmd and demand: p_pcc -> demand - DC(G) @ cmd
        inv = InverterModel(ramp_limit=1e6)
        s = initial_state(model)
        cmd = np.array([50.0, 20.0])
        for _ in range(300):
            s = step_plant(s, cmd[0], cmd[1], 200.0, 30.0, 0.0, model, inv)
        expect = np.array([200.0, 30.0]) - dc_gain(model) @ cmd
        assert abs(s.p_pcc - expect[0]) < 0.1
        assert abs(s.q_pcc - expect[1]) < 0.1

    def test_soc_monotone_while_discharging(self, model):
        inv = InverterModel(ramp_limit=1e6)
        s = initial_state(model)
        socs = []
        for _ in range(100):
            s = step_plant(s, 100.0, 0.0, 200.0, 0.0, 0.0, model, inv)
            socs.append(s.battery.soc)
        assert all(b < a for a, b in zip(socs, socs[1:]))

    def test_input_delay_queue(self, model):
        inv = InverterModel(ramp_limit=1e6, input_delay_steps=2)
        s = initial_state(model)
        s = step_plant(s, 100.0, 0.0, 200.0, 0.0, 0.0, model, inv)
        assert s.p_inv_applied == 0.0
        s = step_plant(s, 100.0, 0.0, 200.0, 0.0, 0.0, model, inv)
        assert s.p_inv_applied == 0.0
        s = step_plant(s, 100.0, 0.0, 200.0, 0.0, 0.0, model, inv)
        assert s.p_inv_applied == 100.0


class TestPmuSampling:
    def make_state(self, model):
        s = initial_state(model)
        return step_plant(s, 0.0, 0.0, 200.0, 40.0, 0.0, model,
                          InverterModel())

    def test_pcc_passthrough(self, model):
        s = self.make_state(model)
        sample = sample_pmu(s, 1)
        assert sample.p_kw == s.p_pcc == 200.0

    def test_load_bus_balance(self, model):
        s = self.make_state(model)
        total_p = sum(sample_pmu(s, i).p_kw for i in (2, 3))
        total_q = sum(sample_pmu(s, i).q_kvar for i in (2, 3))
        assert abs(total_p - s.p_dem) < 1e-9
        assert abs(total_q - s.q_dem) < 1e-9

    def test_all_zero_when_idle(self, model):
        s = initial_state(model)
        s = step_plant(s, 0.0, 0.0, 0.0, 0.0, 0.0, model, InverterModel())
        for i in range(1, 7):
            sample = sample_pmu(s, i)
            assert sample.p_kw == 0.0
            assert sample.q_kvar == 0.0

    def test_unknown_id_rejected(self, model):
        with pytest.raises(ValueError):
            sample_pmu(initial_state(model), 7)

    def test_frequency_near_nominal(self, model):
        s = self.make_state(model)
        assert sample_pmu(s, 1).freq_dev == 0.0
        jittered = sample_pmu(s, 1, freq_jitter=0.02)
        assert abs(jittered.freq_dev) <= 0.02


class TestMicrogrid:
    def test_pv_interpolation(self):
        g = Microgrid(pv_profile=((0.0, 0.0), (100.0, 50.0)))
        assert g.pv_at(50.0) == 25.0
        assert g.pv_at(200.0) == 50.0

    def test_advance_moves_time(self):
        g = Microgrid()
        g.advance(0.0, 0.0)
        g.advance(0.0, 0.0)
        assert abs(g.state.t - 2 * g.ts) < 1e-12
