"""Centralized cascaded controller: fast P/Q power loops, event-triggered
SoC loop, demand estimation with a rate-limited adaptive reference, static
decoupling, and the per-tick supervisor.

Sign conventions. PCC power is import-positive and inverter injection is
discharge-positive, so injection *reduces* the PCC reading. The power
error is reported as ``err = P_ref - P_PCC`` (positive when import sits
below its reference); the PID stage is driven with the negated error so
that positive loop gains push injection in the direction that closes the
loop. Telemetry always carries ``err`` in the reference-minus-measurement
form.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .lti import LtiModel, default_plant_model, dc_gain
from .plant import InverterModel, clamp_amplitude, clamp_rate

log = logging.getLogger(__name__)

MODE_OFF = "off"
MODE_ADAPTIVE = "adaptive"
MODE_MANUAL = "manual"
MODES = (MODE_OFF, MODE_ADAPTIVE, MODE_MANUAL)

STALE_TICK_LIMIT = 3
DECOUPLE_COND_LIMIT = 1e6
DEFAULT_HISTORY_LEN = 64


@dataclass
class PidGains:
    """Gains and bias terms of one power loop."""

    k_p: float = 0.8
    k_i: float = 0.4
    k_d: float = 0.0
    p_pb: float = 0.0  # proportional bias, captured at transfers
    p_db: float = 0.0  # derivative bias, captured at transfers
    ts: float = 0.1
    derivative_filter_pole: float = 0.8

    def __post_init__(self):
        if self.k_i < 0:
            raise ValueError("k_i must be >= 0")
        if self.ts <= 0:
            raise ValueError("ts must be positive")
        if not 0.0 <= self.derivative_filter_pole < 1.0:
            raise ValueError("derivative filter pole must be in [0, 1)")


@dataclass
class PidState:
    """Integrator/derivative memory of one power loop."""

    x_i: float = 0.0
    x_d: float = 0.0
    last_error: float = 0.0
    last_output: float = 0.0


@dataclass
class SocPolicy:
    """SoC band definitions and the slow PI compensation loop.

    No action inside the dead zone [lo_dz, hi_dz]; PI toward the nearest
    dead-zone edge inside the active bands; beyond the absolute limits the
    recovery override (full power) takes over. PV feedforward is available
    but disabled by default (pv_gain = 0).
    """

    lo_abs: float = 20.0
    lo_dz: float = 30.0
    hi_dz: float = 80.0
    hi_abs: float = 90.0
    k_p_soc: float = 2.0
    k_i_soc: float = 0.02
    windup_limit: float = 50.0
    pv_gain: float = 0.0
    ts: float = 0.1
    x_i_soc: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.lo_abs < self.lo_dz < self.hi_dz < self.hi_abs <= 100.0):
            raise ValueError("soc bands must satisfy lo_abs < lo_dz < hi_dz < hi_abs")


@dataclass
class ReferenceState:
    """Reference adjustment module: mode, manual setpoints, the
    rate-limited demand-estimate memory and the command history ring the
    estimator filters."""

    mode: str = MODE_ADAPTIVE
    manual_ref_p: float = 0.0
    manual_ref_q: float = 0.0
    rate_limit: float = 5.0  # kW/s
    p_dem_bar: float = 0.0
    q_dem_bar: float = 0.0
    p_dem_hat: float = 0.0
    q_dem_hat: float = 0.0
    initialized: bool = False
    history: deque = field(default_factory=lambda: deque(maxlen=DEFAULT_HISTORY_LEN))

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.rate_limit <= 0:
            raise ValueError("reference rate limit must be positive")


@dataclass
class Measurements:
    """One controller input snapshot (PMU 1 power flow + Modbus data)."""

    p_pcc: float
    q_pcc: float
    soc: float
    p_pv: float


@dataclass
class InverterCommand:
    p_kw: float = 0.0
    q_kvar: float = 0.0


@dataclass
class TickDebug:
    """Per-tick introspection record, one per controller_tick call."""

    tick: int = 0
    mode: str = MODE_OFF
    recovery: bool = False
    stale: bool = False
    p_ref: float = 0.0
    q_ref: float = 0.0
    p_soc_bar: float = 0.0
    p_dem_hat: float = 0.0
    q_dem_hat: float = 0.0
    p_dem_bar: float = 0.0
    q_dem_bar: float = 0.0
    err_p: float = 0.0
    err_q: float = 0.0
    pid_err_p: float = 0.0
    pid_err_q: float = 0.0
    x_i_p: float = 0.0
    x_i_q: float = 0.0
    x_d_p: float = 0.0
    x_d_q: float = 0.0
    p_pb_p: float = 0.0
    p_pb_q: float = 0.0
    p_db_p: float = 0.0
    p_db_q: float = 0.0
    cmd_p: float = 0.0
    cmd_q: float = 0.0
    saturated_p: bool = False
    saturated_q: bool = False
    antiwindup_skipped: bool = False


@dataclass
class ControllerState:
    """Everything the supervisor sequences each tick."""

    gains_p: PidGains = field(default_factory=PidGains)
    gains_q: PidGains = field(default_factory=PidGains)
    pid_p: PidState = field(default_factory=PidState)
    pid_q: PidState = field(default_factory=PidState)
    soc: SocPolicy = field(default_factory=SocPolicy)
    ref: ReferenceState = field(default_factory=ReferenceState)
    model: LtiModel = field(default_factory=default_plant_model)
    inverter: InverterModel = field(default_factory=InverterModel)
    decouple_matrix: np.ndarray = None
    decouple_ok: bool = True
    recovery_active: bool = False
    last_cmd_p: float = 0.0
    last_cmd_q: float = 0.0
    last_meas: Measurements | None = None
    staleness: int = 0
    tick: int = 0
    prev_branch: str = ""  # last executed branch, for transfer capture
    debug: TickDebug = field(default_factory=TickDebug)

    def __post_init__(self):
        if self.decouple_matrix is None:
            self.decouple_matrix, self.decouple_ok = make_decouple_matrix(
                dc_gain(self.model))


def make_decouple_matrix(gain: np.ndarray) -> tuple[np.ndarray, bool]:
    """Inverse of the model DC gain, or identity when the gain is too
    ill-conditioned to invert usefully (flagged)."""
    gain = np.asarray(gain, dtype=float)
    if not np.all(np.isfinite(gain)) or np.linalg.cond(gain) > DECOUPLE_COND_LIMIT:
        log.warning("DC gain near-singular; decoupling disabled")
        return np.eye(2), False
    return np.linalg.inv(gain), True


def compute_power_error(measured: float, ref: ReferenceState,
                        soc_bar: float, channel: str = "p") -> float:
    """Reference minus measurement for one channel.

    The reference composes the manual setpoint, the rate-limited demand
    estimate, and the SoC correction; adaptive mode zeroes the manual
    term, manual mode zeroes the demand term.
    """
    if ref.mode == MODE_OFF:
        raise ValueError("no power error in mode 'off'")
    if ref.mode == MODE_ADAPTIVE:
        base = ref.p_dem_bar if channel == "p" else ref.q_dem_bar
    else:
        base = ref.manual_ref_p if channel == "p" else ref.manual_ref_q
    return base + soc_bar - measured


def pid_step(state: PidState, gains: PidGains, err: float) -> tuple[float, PidState]:
    """One PID evaluation: integrator update, filtered derivative, raw
    command. The raw value is unlimited; saturation and anti-windup follow
    in :func:`saturate_and_antiwindup`."""
    alpha = gains.derivative_filter_pole
    state.x_d = alpha * state.x_d + (1.0 - alpha) * (err - state.last_error) / gains.ts
    state.x_i = state.x_i + gains.ts * err
    state.last_error = err
    raw = (gains.k_p * (err - gains.p_pb)
           + gains.k_i * state.x_i
           + gains.k_d * (state.x_d - gains.p_db))
    return raw, state


def saturate_and_antiwindup(raw_cmd: float, state: PidState, gains: PidGains,
                            inverter: InverterModel, prev_cmd: float,
                            channel: str = "p") -> tuple[float, PidState, bool]:
    """Clamp a command to amplitude and rate limits, back-calculating the
    integrator so the control law re-evaluates exactly to what was emitted.

    Returns (cmd, state, saturated). With k_i = 0 the clamp still applies
    but the integrator cannot absorb it (flagged by the caller).
    """
    limit = inverter.p_max if channel == "p" else inverter.q_max
    cmd = clamp_amplitude(raw_cmd, limit)
    cmd = clamp_rate(cmd, prev_cmd, inverter.ramp_limit, gains.ts)
    saturated = cmd != raw_cmd
    if saturated:
        if gains.k_i > 0.0:
            state.x_i = (cmd
                         - gains.k_p * (state.last_error - gains.p_pb)
                         - gains.k_d * (state.x_d - gains.p_db)) / gains.k_i
        else:
            log.warning("saturation with k_i = 0: integrator untouched")
    state.last_output = cmd
    return cmd, state, saturated


def soc_compensation(soc: float, p_pv: float,
                     policy: SocPolicy) -> tuple[float, SocPolicy]:
    """Event-triggered SoC correction added to the power reference.

    Zero (integrator frozen) inside the dead zone; PI on the distance to
    the nearest dead-zone edge in the active bands. Low SoC yields a
    positive output, which raises the PCC import reference and steers the
    inverter toward charging; high SoC mirrors that. Integrator state and
    output are both clamped to +/- windup_limit.
    """
    if policy.lo_dz <= soc <= policy.hi_dz:
        return 0.0, policy
    err = (policy.lo_dz - soc) if soc < policy.lo_dz else (policy.hi_dz - soc)
    x = policy.x_i_soc + policy.ts * err
    policy.x_i_soc = clamp_amplitude(x, policy.windup_limit)
    out = (policy.k_p_soc * err + policy.k_i_soc * policy.x_i_soc
           - policy.pv_gain * p_pv)
    return clamp_amplitude(out, policy.windup_limit), policy


def soc_recovery_override(soc: float, policy: SocPolicy,
                          active: bool) -> tuple[bool, float]:
    """Absolute-limit recovery decision.

    Crossing the absolute limits engages full-power recovery (+1:
    discharge, -1: charge as a direction multiplier); once engaged it
    holds, with hysteresis, until SoC re-enters the dead zone.
    """
    if soc > policy.hi_abs:
        return True, 1.0
    if soc < policy.lo_abs:
        return True, -1.0
    if active:
        if policy.lo_dz <= soc <= policy.hi_dz:
            return False, 0.0
        return True, 1.0 if soc > policy.hi_dz else -1.0
    return False, 0.0


def estimate_demand(p_pcc: float, q_pcc: float, history,
                    model: LtiModel) -> tuple[float, float]:
    """Instantaneous demand estimate: measured PCC flow plus the model
    output for the past command sequence (commands through the previous
    tick). Falls back to the raw measurement until the history ring covers
    the model memory."""
    if len(history) < model.n_states + 1:
        return p_pcc, q_pcc
    x = model.zero_state()
    u = np.zeros(2)
    for cmd_p, cmd_q in history:
        u[0], u[1] = cmd_p, cmd_q
        x = model.a @ x + model.b @ u
    y = model.c @ x + model.d @ u
    return p_pcc + float(y[0]), q_pcc + float(y[1])


def rate_limit_reference(dem_hat: float, prev: float, rate_limit: float,
                         ts: float) -> float:
    """Rate-limited tracking of the demand estimate."""
    if rate_limit <= 0:
        raise ValueError("rate limit must be positive")
    rate = (dem_hat - prev) / ts
    if rate > rate_limit:
        return prev + ts * rate_limit
    if rate < -rate_limit:
        return prev - ts * rate_limit
    return dem_hat


def decouple(raw_p: float, raw_q: float,
             matrix: np.ndarray) -> tuple[float, float]:
    """Mix the two loop outputs through the inverse DC gain so each loop's
    authority lands on its own PCC channel at steady state."""
    out = matrix @ np.array([raw_p, raw_q])
    return float(out[0]), float(out[1])


def _capture_transfer(state: ControllerState, pid_err_p: float,
                      pid_err_q: float) -> None:
    """Capture bias terms so the control law re-evaluates to the last
    emitted command: proportional and derivative contributions are zeroed
    via the biases and the integrators carry the command. Keeps mode and
    recovery transitions bump-free."""
    for pid, gains, err, cmd in ((state.pid_p, state.gains_p, pid_err_p, state.last_cmd_p),
                                 (state.pid_q, state.gains_q, pid_err_q, state.last_cmd_q)):
        gains.p_pb = err
        gains.p_db = pid.x_d
        pid.last_error = err
        if gains.k_i > 0.0:
            pid.x_i = cmd / gains.k_i


def _emit(state: ControllerState, target_p: float, target_q: float) -> tuple[float, float]:
    """Clamp a target to the actuation limits against the last emitted
    command (used by the off and recovery branches, which bypass the PIDs)."""
    ts = state.gains_p.ts
    p = clamp_rate(clamp_amplitude(target_p, state.inverter.p_max),
                   state.last_cmd_p, state.inverter.ramp_limit, ts)
    q = clamp_rate(clamp_amplitude(target_q, state.inverter.q_max),
                   state.last_cmd_q, state.inverter.ramp_limit, ts)
    return p, q


def controller_tick(meas: Measurements | None,
                    state: ControllerState) -> tuple[InverterCommand, ControllerState]:
    """Run one supervisor cycle and return the command to write.

    Sequence: staleness policy, recovery override check, then the normal
    chain (demand estimate, rate-limited reference in adaptive mode, SoC
    compensation, power errors, PIDs, decoupling, saturation with
    anti-windup). Every emitted command respects amplitude and rate
    limits, including the off and recovery branches.
    """
    state.tick += 1
    dbg = TickDebug(tick=state.tick, mode=state.ref.mode)

    if meas is not None:
        state.staleness = 0
        state.last_meas = meas
    else:
        state.staleness += 1

    if state.last_meas is None or state.staleness >= STALE_TICK_LIMIT:
        dbg.stale = True
        dbg.cmd_p, dbg.cmd_q = state.last_cmd_p, state.last_cmd_q
        state.debug = dbg
        return InverterCommand(state.last_cmd_p, state.last_cmd_q), state

    m = state.last_meas
    ref = state.ref

    # Reference adjustment: the estimator runs every tick; the rate
    # limiter only advances in adaptive mode and re-seeds from the current
    # estimate when (re)entering it, so the reference never ramps in from
    # a stale value.
    p_hat, q_hat = estimate_demand(m.p_pcc, m.q_pcc, ref.history, state.model)
    ref.p_dem_hat, ref.q_dem_hat = p_hat, q_hat
    if ref.mode == MODE_ADAPTIVE:
        if not ref.initialized or state.prev_branch != MODE_ADAPTIVE:
            ref.p_dem_bar, ref.q_dem_bar = p_hat, q_hat
            ref.initialized = True
        else:
            ref.p_dem_bar = rate_limit_reference(
                p_hat, ref.p_dem_bar, ref.rate_limit, state.gains_p.ts)
            ref.q_dem_bar = rate_limit_reference(
                q_hat, ref.q_dem_bar, ref.rate_limit, state.gains_q.ts)
    dbg.p_dem_hat, dbg.q_dem_hat = p_hat, q_hat
    dbg.p_dem_bar, dbg.q_dem_bar = ref.p_dem_bar, ref.q_dem_bar

    if ref.mode == MODE_OFF:
        # An inactive controller performs no recovery bookkeeping.
        state.recovery_active = False
    else:
        state.recovery_active, direction = soc_recovery_override(
            m.soc, state.soc, state.recovery_active)

    if ref.mode == MODE_OFF or state.recovery_active:
        if state.recovery_active:
            branch = "recovery"
            target_p = direction * state.inverter.p_max
            dbg.recovery = True
        else:
            branch = MODE_OFF
            target_p = 0.0
        cmd_p, cmd_q = _emit(state, target_p, 0.0)
        state.last_cmd_p, state.last_cmd_q = cmd_p, cmd_q
        _capture_transfer(state, 0.0, 0.0)
        ref.history.append((cmd_p, cmd_q))
        state.prev_branch = branch
        dbg.cmd_p, dbg.cmd_q = cmd_p, cmd_q
        state.debug = dbg
        return InverterCommand(cmd_p, cmd_q), state

    p_soc_bar, state.soc = soc_compensation(m.soc, m.p_pv, state.soc)
    err_p = compute_power_error(m.p_pcc, ref, p_soc_bar, "p")
    err_q = compute_power_error(m.q_pcc, ref, 0.0, "q")
    # Injection reduces import, so the PIDs run on the negated errors;
    # decoupling mixes the errors *into* the loops (rather than the loop
    # outputs) so each saturated output back-calculates against its own
    # integrator only. Mixing after saturation can latch both channels at
    # the rails through the cross terms; mixing before cannot, and the
    # anti-windup identity holds exactly per emitted channel.
    pid_err_p, pid_err_q = decouple(-err_p, -err_q, state.decouple_matrix)

    if state.prev_branch != ref.mode:
        _capture_transfer(state, pid_err_p, pid_err_q)

    raw_p, state.pid_p = pid_step(state.pid_p, state.gains_p, pid_err_p)
    raw_q, state.pid_q = pid_step(state.pid_q, state.gains_q, pid_err_q)
    cmd_p, state.pid_p, sat_p = saturate_and_antiwindup(
        raw_p, state.pid_p, state.gains_p, state.inverter, state.last_cmd_p, "p")
    cmd_q, state.pid_q, sat_q = saturate_and_antiwindup(
        raw_q, state.pid_q, state.gains_q, state.inverter, state.last_cmd_q, "q")

    state.last_cmd_p, state.last_cmd_q = cmd_p, cmd_q
    ref.history.append((cmd_p, cmd_q))
    state.prev_branch = ref.mode

    dbg.p_ref = err_p + m.p_pcc
    dbg.q_ref = err_q + m.q_pcc
    dbg.p_soc_bar = p_soc_bar
    dbg.err_p, dbg.err_q = err_p, err_q
    dbg.pid_err_p, dbg.pid_err_q = pid_err_p, pid_err_q
    dbg.x_i_p, dbg.x_i_q = state.pid_p.x_i, state.pid_q.x_i
    dbg.x_d_p, dbg.x_d_q = state.pid_p.x_d, state.pid_q.x_d
    dbg.p_pb_p, dbg.p_pb_q = state.gains_p.p_pb, state.gains_q.p_pb
    dbg.p_db_p, dbg.p_db_q = state.gains_p.p_db, state.gains_q.p_db
    dbg.cmd_p, dbg.cmd_q = cmd_p, cmd_q
    dbg.saturated_p, dbg.saturated_q = sat_p, sat_q
    dbg.antiwindup_skipped = (sat_p and state.gains_p.k_i == 0.0) or \
                             (sat_q and state.gains_q.k_i == 0.0)
    state.debug = dbg
    return InverterCommand(cmd_p, cmd_q), state


def set_mode(state: ControllerState, mode: str,
             ref_p: float | None = None, ref_q: float | None = None) -> None:
    """Operator mode/reference change, validated against the ratings."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    state.ref.mode = mode
    if ref_p is not None:
        if abs(ref_p) > state.inverter.p_max or not math.isfinite(ref_p):
            raise ValueError(f"manual reference {ref_p} outside rating")
        state.ref.manual_ref_p = ref_p
    if ref_q is not None:
        if abs(ref_q) > state.inverter.q_max or not math.isfinite(ref_q):
            raise ValueError(f"manual reference {ref_q} outside rating")
        state.ref.manual_ref_q = ref_q
