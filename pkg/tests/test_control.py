import numpy as np
import pytest

from microhil.control import (ControllerState, Measurements, PidGains,
                              PidState, ReferenceState, SocPolicy,
                              compute_power_error, controller_tick, decouple,
                              estimate_demand, make_decouple_matrix, pid_step,
                              rate_limit_reference, saturate_and_antiwindup,
                              set_mode, soc_compensation,
                              soc_recovery_override)
from microhil.lti import default_plant_model
from microhil.plant import InverterModel, Microgrid


class TestPowerError:
    def test_manual_on_target(self):
        ref = ReferenceState(mode="manual", manual_ref_p=150.0)
        assert compute_power_error(150.0, ref, 0.0) == 0.0

    def test_adaptive_with_soc_correction(self):
        ref = ReferenceState(mode="adaptive", p_dem_bar=200.0)
        assert compute_power_error(180.0, ref, -10.0) == 10.0

    def test_adaptive_above_reference(self):
        ref = ReferenceState(mode="adaptive", p_dem_bar=200.0)
        assert compute_power_error(250.0, ref, 0.0) == -50.0

    def test_off_mode_rejected(self):
        ref = ReferenceState(mode="off")
        with pytest.raises(ValueError):
            compute_power_error(100.0, ref, 0.0)


class TestPidStep:
    def test_pure_proportional(self):
        raw, _ = pid_step(PidState(), PidGains(k_p=1.0, k_i=0.0, k_d=0.0),
                          10.0)
        assert raw == 10.0

    def test_pi_arithmetic(self):
        gains = PidGains(k_p=0.5, k_i=0.2, k_d=0.0, ts=0.1)
        raw, state = pid_step(PidState(), gains, 10.0)
        assert abs(state.x_i - 1.0) < 1e-15
        assert abs(raw - 5.2) < 1e-15

    def test_zero_error_zero_output(self):
        raw, _ = pid_step(PidState(), PidGains(), 0.0)
        assert raw == 0.0

    def test_derivative_filter(self):
        gains = PidGains(k_p=0.0, k_i=0.0, k_d=1.0, ts=0.1,
                         derivative_filter_pole=0.0)
        raw, state = pid_step(PidState(), gains, 1.0)
        assert abs(state.x_d - 10.0) < 1e-12  # (1 - 0) / 0.1
        assert abs(raw - 10.0) < 1e-12


class TestSaturateAndAntiwindup:
    def test_within_limits_untouched(self):
        gains = PidGains(k_p=1.0, k_i=0.5)
        state = PidState(x_i=2.0, last_error=1.0)
        cmd, state, sat = saturate_and_antiwindup(
            10.0, state, gains, InverterModel(ramp_limit=1e6), 8.0)
        assert cmd == 10.0 and not sat
        assert state.x_i == 2.0

    def test_back_calculation_example(self):
        # clamp to 250 with err 300: x_i = (250 - 300) / 0.5 = -100
        gains = PidGains(k_p=1.0, k_i=0.5, k_d=0.0)
        state = PidState(last_error=300.0)
        cmd, state, sat = saturate_and_antiwindup(
            400.0, state, gains, InverterModel(ramp_limit=1e6), 249.0)
        assert cmd == 250.0 and sat
        assert abs(state.x_i - (-100.0)) < 1e-12

    def test_rate_clamp(self):
        gains = PidGains(k_p=1.0, k_i=0.5)
        cmd, _, sat = saturate_and_antiwindup(
            100.0, PidState(last_error=100.0), gains,
            InverterModel(ramp_limit=8.0), 0.0)
        assert abs(cmd - 0.8) < 1e-12 and sat

    def test_identity_after_correction(self):
        rng = np.random.default_rng(1)
        gains = PidGains(k_p=0.7, k_i=0.3, k_d=0.1)
        inv = InverterModel(ramp_limit=8.0)
        prev = 0.0
        state = PidState()
        for _ in range(200):
            err = float(rng.uniform(-400, 400))
            raw, state = pid_step(state, gains, err)
            cmd, state, sat = saturate_and_antiwindup(raw, state, gains, inv,
                                                      prev)
            if sat:
                relaw = (gains.k_p * (state.last_error - gains.p_pb)
                         + gains.k_i * state.x_i
                         + gains.k_d * (state.x_d - gains.p_db))
                assert abs(relaw - cmd) <= 1e-12 * max(1.0, abs(cmd))
            prev = cmd

    def test_zero_ki_clamps_without_correction(self):
        gains = PidGains(k_p=1.0, k_i=0.0)
        state = PidState(x_i=5.0, last_error=300.0)
        cmd, state, sat = saturate_and_antiwindup(
            300.0, state, gains, InverterModel(ramp_limit=1e6), 249.0)
        assert cmd == 250.0 and sat
        assert state.x_i == 5.0


class TestSocCompensation:
    def test_dead_zone_zero_and_frozen(self):
        policy = SocPolicy(x_i_soc=3.0)
        out, policy = soc_compensation(50.0, 0.0, policy)
        assert out == 0.0
        assert policy.x_i_soc == 3.0

    def test_high_band_discharge_direction(self):
        policy = SocPolicy(k_p_soc=2.0, k_i_soc=0.0)
        out, _ = soc_compensation(85.0, 0.0, policy)
        assert abs(out - (-10.0)) < 1e-12

    def test_low_band_sign_mirror(self):
        policy = SocPolicy(k_p_soc=2.0, k_i_soc=0.0)
        out, _ = soc_compensation(25.0, 0.0, policy)
        assert abs(out - 10.0) < 1e-12

    def test_output_and_integrator_clamped(self):
        policy = SocPolicy(k_p_soc=100.0, k_i_soc=10.0, windup_limit=50.0)
        for _ in range(1000):
            out, policy = soc_compensation(22.0, 0.0, policy)
        assert abs(policy.x_i_soc) <= 50.0
        assert abs(out) <= 50.0

    def test_band_ordering_enforced(self):
        with pytest.raises(ValueError):
            SocPolicy(lo_abs=40.0, lo_dz=30.0)


class TestRecoveryOverride:
    def test_engages_above_limit(self):
        active, direction = soc_recovery_override(95.0, SocPolicy(), False)
        assert active and direction == 1.0

    def test_hysteresis_holds_until_dead_zone(self):
        active, direction = soc_recovery_override(85.0, SocPolicy(), True)
        assert active and direction == 1.0
        active, _ = soc_recovery_override(80.0, SocPolicy(), True)
        assert not active

    def test_inactive_in_safe_zone(self):
        active, _ = soc_recovery_override(50.0, SocPolicy(), False)
        assert not active

    def test_low_side_charge_direction(self):
        active, direction = soc_recovery_override(15.0, SocPolicy(), False)
        assert active and direction == -1.0


class TestEstimateDemand:
    def test_cold_start_returns_measurement(self):
        p, q = estimate_demand(200.0, 30.0, [], default_plant_model())
        assert (p, q) == (200.0, 30.0)

    def test_dc_arithmetic(self):
        model = default_plant_model()
        history = [(50.0, 0.0)] * 64
        p, q = estimate_demand(200.0, 30.0, history, model)
        assert abs(p - 250.0) < 1e-6
        assert abs(q - 35.0) < 1e-6

    def test_zero_history_values(self):
        model = default_plant_model()
        p, q = estimate_demand(123.0, 45.0, [(0.0, 0.0)] * 64, model)
        assert p == 123.0 and q == 45.0


class TestRateLimitReference:
    def test_within_rate_passes_through(self):
        assert rate_limit_reference(100.5, 100.0, 8.0, 0.1) == 100.5

    def test_up_rate_clamped(self):
        assert abs(rate_limit_reference(110.0, 100.0, 8.0, 0.1) - 100.8) < 1e-12

    def test_down_rate_clamped(self):
        assert abs(rate_limit_reference(90.0, 100.0, 8.0, 0.1) - 99.2) < 1e-12

    def test_random_sequences_respect_rate(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            rate = float(rng.uniform(0.5, 50.0))
            ts = float(rng.uniform(0.01, 0.5))
            prev = 0.0
            for x in rng.uniform(-500, 500, 100):
                out = rate_limit_reference(float(x), prev, rate, ts)
                assert abs(out - prev) <= ts * rate + 1e-12
                prev = out


class TestDecouple:
    def test_identity_passthrough(self):
        assert decouple(5.0, -3.0, np.eye(2)) == (5.0, -3.0)

    def test_inverse_gain_arithmetic(self):
        gain = np.array([[1.0, 0.1], [0.1, 1.0]])
        matrix, ok = make_decouple_matrix(gain)
        assert ok
        p, q = decouple(99.0, 0.0, matrix)
        assert abs(p - 100.0) < 1e-9
        assert abs(q - (-10.0)) < 1e-9

    def test_zero_in_zero_out(self):
        matrix, _ = make_decouple_matrix(np.array([[1.0, 0.1], [0.1, 1.0]]))
        assert decouple(0.0, 0.0, matrix) == (0.0, 0.0)

    def test_near_singular_falls_back_to_identity(self):
        matrix, ok = make_decouple_matrix(np.array([[1.0, 1.0],
                                                    [1.0, 1.0 + 1e-9]]))
        assert not ok
        assert np.array_equal(matrix, np.eye(2))


def make_controller(**kw):
    defaults = dict(inverter=InverterModel(ramp_limit=80.0))
    defaults.update(kw)
    return ControllerState(**defaults)


def meas(p=200.0, q=20.0, soc=50.0, pv=0.0):
    return Measurements(p, q, soc, pv)


class TestControllerTick:
    def test_off_mode_zero_command(self):
        state = make_controller(ref=ReferenceState(mode="off"))
        cmd, state = controller_tick(meas(), state)
        assert cmd.p_kw == 0.0 and cmd.q_kvar == 0.0

    def test_recovery_overrides_power_error(self):
        state = make_controller(ref=ReferenceState(mode="adaptive"))
        cmd = None
        for _ in range(50):  # ramp-in at 80 kW/s
            cmd, state = controller_tick(meas(soc=95.0), state)
        assert state.recovery_active
        assert cmd.p_kw == 250.0
        assert cmd.q_kvar == 0.0

    def test_equilibrium_holds_command(self):
        grid = Microgrid(noise_std=0.0, demand_swing=0.0,
                         inverter=InverterModel(ramp_limit=80.0))
        state = make_controller()
        cmd_p = cmd_q = 0.0
        for _ in range(400):
            s = grid.advance(cmd_p, cmd_q)
            cmd, state = controller_tick(
                Measurements(s.p_pcc, s.q_pcc, s.battery.soc, s.p_pv), state)
            cmd_p, cmd_q = cmd.p_kw, cmd.q_kvar
        before = (cmd_p, cmd_q)
        s = grid.advance(cmd_p, cmd_q)
        cmd, state = controller_tick(
            Measurements(s.p_pcc, s.q_pcc, s.battery.soc, s.p_pv), state)
        assert abs(cmd.p_kw - before[0]) < 1e-9
        assert abs(cmd.q_kvar - before[1]) < 1e-9

    def test_stale_measurements_hold_last_command(self):
        state = make_controller(ref=ReferenceState(mode="manual",
                                                   manual_ref_p=150.0))
        for _ in range(5):
            controller_tick(meas(), state)
        # below the staleness threshold the held measurement still drives
        # the loop; from 3 missing ticks on, the last command repeats
        for _ in range(2):
            held, state = controller_tick(None, state)
        for _ in range(8):
            cmd, state = controller_tick(None, state)
            assert cmd.p_kw == held.p_kw and cmd.q_kvar == held.q_kvar
            assert state.debug.stale
        assert state.staleness == 10

    def test_soc_loop_inert_inside_dead_zone(self):
        state = make_controller()
        for soc in np.linspace(31.0, 79.0, 60):
            _, state = controller_tick(meas(soc=float(soc)), state)
            assert state.debug.p_soc_bar == 0.0
        assert state.soc.x_i_soc == 0.0

    def test_bumpless_mode_switches(self):
        grid = Microgrid(noise_std=0.0, demand_swing=0.0,
                         inverter=InverterModel(ramp_limit=80.0))
        state = make_controller(ref=ReferenceState(mode="manual",
                                                   manual_ref_p=150.0,
                                                   manual_ref_q=10.0))
        cmd_p = cmd_q = 0.0
        max_jump = 0.0
        prev = 0.0
        for k in range(600):
            s = grid.advance(cmd_p, cmd_q)
            if k == 200:
                set_mode(state, "adaptive")
            if k == 400:
                set_mode(state, "manual", 120.0, 0.0)
            cmd, state = controller_tick(
                Measurements(s.p_pcc, s.q_pcc, s.battery.soc, s.p_pv), state)
            cmd_p, cmd_q = cmd.p_kw, cmd.q_kvar
            max_jump = max(max_jump, abs(cmd_p - prev))
            prev = cmd_p
        assert max_jump <= 80.0 * 0.1 + 1e-12

    def test_command_history_feeds_estimator(self):
        state = make_controller(ref=ReferenceState(mode="manual",
                                                   manual_ref_p=100.0))
        for _ in range(5):
            controller_tick(meas(), state)
        assert len(state.ref.history) == 5

    def test_set_mode_validates_reference(self):
        state = make_controller()
        with pytest.raises(ValueError):
            set_mode(state, "manual", 400.0, 0.0)
        with pytest.raises(ValueError):
            set_mode(state, "sideways")
