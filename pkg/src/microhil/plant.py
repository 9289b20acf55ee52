"""Behavioral discrete-time microgrid plant.

Simulates the quantities the testbed controller acts on: grid import at the
point of common coupling (PCC), battery state of charge, PV output, and the
filtered coupling from inverter injection to PCC flow. Import-positive
convention throughout: positive inverter injection reduces PCC import
(``p_pcc = demand - y`` with y the coupling-model output), which is what
makes ``demand = p_pcc + G*u`` hold at steady state for the demand
estimator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .lti import LtiModel, default_plant_model
from .wire.c37118 import PhasorSample

# Demand profile shape constants: slow diurnal-style swing plus a
# band-limited noise floor built from seeded sinusoids.
SINUSOID_FRACTION = 0.05
SINUSOID_PERIOD_S = 600.0
NOISE_COMPONENTS = 8
NOISE_BAND_HZ = (0.01, 0.2)

NOMINAL_FREQ_HZ = 60.0
NOMINAL_VOLTAGE_V = 480.0
PMU_IDS = (1, 2, 3, 4, 5, 6)
# Fraction of total demand drawn at each load bus (PMU 2 = non-emergency,
# PMU 3 = emergency; emergency loads are the small ones).
LOAD_SPLIT = {2: 0.8, 3: 0.2}


@dataclass
class InverterModel:
    """Inverter ratings and actuation constraints."""

    p_max: float = 250.0
    q_max: float = 250.0
    ramp_limit: float = 8.0  # kW/s, scenario parameter
    input_delay_steps: int = 0

    def __post_init__(self):
        if self.p_max <= 0 or self.q_max <= 0 or self.ramp_limit <= 0:
            raise ValueError("inverter limits must be positive")
        if self.input_delay_steps < 0:
            raise ValueError("input_delay_steps must be >= 0")


@dataclass
class BatteryModel:
    """Battery pack with SoC tracked in percent of capacity."""

    capacity_kwh: float = 1000.0
    soc: float = 50.0
    soc_init: float = 50.0
    saturated: bool = False

    def __post_init__(self):
        if self.capacity_kwh <= 0:
            raise ValueError("battery capacity must be positive")
        if not 0.0 <= self.soc <= 100.0:
            raise ValueError(f"soc {self.soc} outside [0, 100]")


@dataclass
class LoadEvent:
    """Switch-in of a block load, with a rectangular inrush spike."""

    t_on: float
    t_off: float
    magnitude: float
    transient_spike: float = 0.0
    spike_duration: float = 0.0

    def __post_init__(self):
        if self.t_off <= self.t_on:
            raise ValueError("event t_off must exceed t_on")
        if self.magnitude < 0:
            raise ValueError("event magnitude must be >= 0")

    def contribution(self, t: float) -> float:
        if not (self.t_on <= t < self.t_off):
            return 0.0
        out = self.magnitude
        if t < self.t_on + self.spike_duration:
            out += self.transient_spike
        return out


@dataclass
class PlantState:
    """Snapshot of the simulated microgrid at one tick.

    Replaced wholesale each step so protocol servers can hand out the
    previous snapshot atomically while the loop builds the next one.
    """

    t: float
    lti_state: np.ndarray
    p_pcc: float = 0.0
    q_pcc: float = 0.0
    p_dem: float = 0.0
    q_dem: float = 0.0
    p_pv: float = 0.0
    p_inv_applied: float = 0.0
    q_inv_applied: float = 0.0
    battery: BatteryModel = field(default_factory=BatteryModel)
    cmd_queue: tuple = ()  # pending commands when input_delay_steps > 0
    fault: bool = False


def initial_state(model: LtiModel, soc_init: float = 50.0,
                  capacity_kwh: float = 1000.0) -> PlantState:
    battery = BatteryModel(capacity_kwh=capacity_kwh, soc=soc_init,
                           soc_init=soc_init)
    return PlantState(t=0.0, lti_state=model.zero_state(), battery=battery)


def battery_update(battery: BatteryModel, p_inv: float, p_pv: float,
                   ts: float) -> BatteryModel:
    """Integrate net battery power (inverter output minus PV feed) one step.

    Positive p_inv discharges. SoC hard-clamps to [0, 100]; a clamp sets
    the ``saturated`` flag so callers can log the event.
    """
    delta = 100.0 * (p_inv - p_pv) * (ts / 3600.0) / battery.capacity_kwh
    raw = battery.soc - delta
    clamped = min(100.0, max(0.0, raw))
    return replace(battery, soc=clamped, saturated=(clamped != raw))


def clamp_amplitude(value: float, limit: float) -> float:
    return min(limit, max(-limit, value))


def clamp_rate(value: float, previous: float, ramp_limit: float,
               ts: float) -> float:
    step = ramp_limit * ts
    return min(previous + step, max(previous - step, value))


@lru_cache(maxsize=32)
def _noise_components(seed: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    freqs = rng.uniform(NOISE_BAND_HZ[0], NOISE_BAND_HZ[1], NOISE_COMPONENTS)
    phases = rng.uniform(0.0, 2.0 * math.pi, NOISE_COMPONENTS)
    return freqs, phases


def demand_profile(t: float, base: float, events: tuple[LoadEvent, ...] = (),
                   noise_seed: int = 0, noise_std: float = 0.0,
                   swing_fraction: float = SINUSOID_FRACTION) -> float:
    """Active-power demand at time t: base + slow sinusoid + band-limited
    seeded noise + active load events. Pure in all arguments, so any two
    evaluations with the same inputs agree bit-exactly.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    out = base + swing_fraction * base * math.sin(
        2.0 * math.pi * t / SINUSOID_PERIOD_S)
    if noise_std > 0.0:
        freqs, phases = _noise_components(noise_seed)
        amp = noise_std * math.sqrt(2.0 / NOISE_COMPONENTS)
        for f, ph in zip(freqs, phases):
            out += amp * math.sin(2.0 * math.pi * f * t + ph)
    for ev in events:
        out += ev.contribution(t)
    return max(0.0, out)


def step_plant(state: PlantState, cmd_p: float, cmd_q: float,
               demand_p: float, demand_q: float, pv: float,
               model: LtiModel, inverter: InverterModel) -> PlantState:
    """Advance the plant one sample.

    Applies amplitude then rate limiting to the command against the
    previously applied injection, runs the coupling model, then derives
    PCC flow as demand minus the model output. Non-finite inputs reject
    the step: the state is returned unchanged except for the fault flag.
    """
    vals = (cmd_p, cmd_q, demand_p, demand_q, pv)
    if not all(math.isfinite(v) for v in vals):
        return replace(state, fault=True)

    queue = state.cmd_queue
    if inverter.input_delay_steps > 0:
        queue = queue + ((cmd_p, cmd_q),)
        if len(queue) > inverter.input_delay_steps:
            (cmd_p, cmd_q), queue = queue[0], queue[1:]
        else:
            cmd_p, cmd_q = 0.0, 0.0

    p_app = clamp_amplitude(cmd_p, inverter.p_max)
    p_app = clamp_rate(p_app, state.p_inv_applied, inverter.ramp_limit, model.ts)
    q_app = clamp_amplitude(cmd_q, inverter.q_max)
    q_app = clamp_rate(q_app, state.q_inv_applied, inverter.ramp_limit, model.ts)

    u = np.array([p_app, q_app])
    new_x, y = model.step(state.lti_state, u)

    battery = battery_update(state.battery, p_app, pv, model.ts)

    return PlantState(
        t=state.t + model.ts,
        lti_state=new_x,
        p_pcc=demand_p - float(y[0]),
        q_pcc=demand_q - float(y[1]),
        p_dem=demand_p,
        q_dem=demand_q,
        p_pv=pv,
        p_inv_applied=p_app,
        q_inv_applied=q_app,
        battery=battery,
        cmd_queue=queue,
        fault=False,
    )


def sample_pmu(state: PlantState, pmu_id: int,
               freq_jitter: float = 0.0) -> PhasorSample:
    """Measurement snapshot at one of the six metering points.

    PMU 1 reports PCC flow exactly; 2 and 3 split the true demand across
    the non-emergency and emergency load buses; 4 is the inverter bus,
    5 the PV bus, 6 a redundant PCC-side meter. Voltage, current, and
    frequency are decorative (nominal values plus a deterministic jitter
    term); control consumes only P and Q.
    """
    if pmu_id not in PMU_IDS:
        raise ValueError(f"unknown pmu id {pmu_id}")
    if pmu_id in LOAD_SPLIT:
        p = LOAD_SPLIT[pmu_id] * state.p_dem
        q = LOAD_SPLIT[pmu_id] * state.q_dem
    elif pmu_id == 4:
        p, q = state.p_inv_applied, state.q_inv_applied
    elif pmu_id == 5:
        p, q = state.p_pv, 0.0
    else:  # 1 and 6: PCC flow
        p, q = state.p_pcc, state.q_pcc

    freq_dev = freq_jitter * math.sin(2.0 * math.pi * 0.05 * state.t + pmu_id)
    v_mag = NOMINAL_VOLTAGE_V * (1.0 - 2e-5 * abs(p))
    s_va = math.hypot(p, q) * 1000.0
    i_mag = s_va / (math.sqrt(3.0) * v_mag) if v_mag > 0 else 0.0
    i_ang = -math.atan2(q, p) if (p or q) else 0.0
    return PhasorSample(
        v_re=v_mag, v_im=0.0,
        i_re=i_mag * math.cos(i_ang), i_im=i_mag * math.sin(i_ang),
        freq_dev=freq_dev, rocof=0.0,
        p_kw=p, q_kvar=q,
    )


class Microgrid:
    """Plant plus its exogenous drivers, stepped once per tick.

    Owns the demand/PV evaluation so services only hand in the latest
    inverter command. ``state`` is replaced atomically each step; readers
    may keep the reference they grabbed.
    """

    def __init__(self, model: LtiModel | None = None,
                 inverter: InverterModel | None = None,
                 base_demand: float = 200.0, base_demand_q: float = 0.0,
                 events: tuple[LoadEvent, ...] = (),
                 pv_profile: tuple[tuple[float, float], ...] = (),
                 noise_seed: int = 0, noise_std: float = 0.0,
                 demand_swing: float = SINUSOID_FRACTION,
                 soc_init: float = 50.0, capacity_kwh: float = 1000.0,
                 freq_jitter: float = 0.0):
        self.model = model if model is not None else default_plant_model()
        self.inverter = inverter if inverter is not None else InverterModel()
        self.base_demand = base_demand
        self.base_demand_q = base_demand_q
        self.events = tuple(events)
        self.pv_t = np.array([p[0] for p in pv_profile]) if pv_profile else None
        self.pv_kw = np.array([p[1] for p in pv_profile]) if pv_profile else None
        self.noise_seed = noise_seed
        self.noise_std = noise_std
        self.demand_swing = demand_swing
        self.freq_jitter = freq_jitter
        self.state = initial_state(self.model, soc_init, capacity_kwh)

    @property
    def ts(self) -> float:
        return self.model.ts

    def demand_at(self, t: float) -> tuple[float, float]:
        p = demand_profile(t, self.base_demand, self.events,
                           self.noise_seed, self.noise_std, self.demand_swing)
        # Reactive demand: constant base plus a light coupling to the
        # active-power variation (loads at roughly constant power factor).
        q = self.base_demand_q + 0.1 * (p - self.base_demand)
        return p, q

    def pv_at(self, t: float) -> float:
        if self.pv_t is None or self.pv_t.size == 0:
            return 0.0
        return float(np.interp(t, self.pv_t, self.pv_kw))

    def advance(self, cmd_p: float, cmd_q: float) -> PlantState:
        t = self.state.t
        dem_p, dem_q = self.demand_at(t)
        pv = self.pv_at(t)
        self.state = step_plant(self.state, cmd_p, cmd_q, dem_p, dem_q, pv,
                                self.model, self.inverter)
        return self.state

    def pmu_sample(self, pmu_id: int) -> PhasorSample:
        return sample_pmu(self.state, pmu_id, self.freq_jitter)
