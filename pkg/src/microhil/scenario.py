"""Scenario files: the timed scripts the testbed executes.

Human-readable sections of ``key = value`` lines:

    [scenario]    run-wide settings (duration, demand, SoC, delays, ...)
    [gains]       optional power-loop gain overrides
    [pv]          piecewise-linear PV profile, ``<t_s> = <kW>`` per point
    [events]      ``event = t_on t_off magnitude [spike [spike_dur]]``
    [schedule]    ``<t_s> = off|adaptive|manual [P_kw Q_kvar]``

Unknown keys, bad numbers, or ordering violations fail the parse with the
offending file line. Parsing then serializing then parsing again yields
an identical scenario.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field

from .plant import LoadEvent
from .control import MODES, MODE_ADAPTIVE, MODE_MANUAL

BUNDLED_SCENARIOS = ("demand_following", "load_switch_slow",
                     "load_switch_fast", "soc_recovery", "demand_estimate")

_SCENARIO_KEYS = {
    "duration": float,
    "base_demand": float,
    "base_demand_q": float,
    "demand_noise": float,
    "demand_swing": float,
    "seed": int,
    "soc_init": float,
    "ramp_limit": float,
    "delay_in": int,
    "delay_out": int,
    "rate_limit_r": float,
    "initial_mode": str,
    "manual_ref_p": float,
    "manual_ref_q": float,
}

_GAIN_KEYS = {"k_p": float, "k_i": float, "k_d": float}


class ScenarioError(ValueError):
    """Parse or validation failure, carrying the file line."""


@dataclass
class ModeSwitch:
    t: float
    mode: str
    ref_p: float | None = None
    ref_q: float | None = None


@dataclass
class Scenario:
    """One testbed run script."""

    duration: float = 60.0
    base_demand: float = 200.0
    base_demand_q: float = 20.0
    demand_noise: float = 0.0
    demand_swing: float = 0.05
    seed: int = 1
    soc_init: float = 50.0
    ramp_limit: float = 8.0
    delay_in: int = 1
    delay_out: int = 1
    rate_limit_r: float = 5.0
    initial_mode: str = MODE_ADAPTIVE
    manual_ref_p: float = 0.0
    manual_ref_q: float = 0.0
    gains: dict = field(default_factory=dict)
    pv_profile: tuple = ()
    events: tuple = ()
    schedule: tuple = ()

    def validate(self) -> None:
        if self.duration < 0:
            raise ScenarioError("duration must be >= 0")
        if self.ramp_limit <= 0 or self.rate_limit_r <= 0:
            raise ScenarioError("ramp_limit and rate_limit_r must be positive")
        if self.delay_in < 0 or self.delay_out < 0:
            raise ScenarioError("delays must be >= 0")
        if not 0.0 <= self.soc_init <= 100.0:
            raise ScenarioError("soc_init must be in [0, 100]")
        if self.initial_mode not in MODES:
            raise ScenarioError(f"unknown initial_mode {self.initial_mode!r}")
        last = -1.0
        for sw in self.schedule:
            if sw.t <= last:
                raise ScenarioError(
                    f"schedule times must be strictly increasing (t={sw.t})")
            if sw.t > self.duration:
                raise ScenarioError(f"schedule entry at t={sw.t} beyond duration")
            if sw.mode not in MODES:
                raise ScenarioError(f"unknown schedule mode {sw.mode!r}")
            last = sw.t
        last = -1.0
        for t, _ in self.pv_profile:
            if t <= last:
                raise ScenarioError("pv profile times must be strictly increasing")
            last = t


def _convert(key: str, conv, raw: str, where: str):
    try:
        if conv is int:
            return int(raw)
        if conv is float:
            return float(raw)
        return raw
    except ValueError as exc:
        raise ScenarioError(f"{where}: bad value for {key!r}: {raw!r}") from exc


def parse_scenario(path: str) -> Scenario:
    """Read and validate one scenario file."""
    scenario = Scenario()
    pv: list[tuple[float, float]] = []
    events: list[LoadEvent] = []
    schedule: list[ModeSwitch] = []
    section = None
    seen_any = False

    with open(path) as fh:
        lines = fh.readlines()

    for lineno, rawline in enumerate(lines, start=1):
        where = f"{path}:{lineno}"
        line = rawline.split("#", 1)[0].strip()
        if not line:
            continue
        seen_any = True
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            if section not in ("scenario", "gains", "pv", "events", "schedule"):
                raise ScenarioError(f"{where}: unknown section [{section}]")
            continue
        if section is None:
            raise ScenarioError(f"{where}: key outside any section")
        if "=" not in line:
            raise ScenarioError(f"{where}: expected 'key = value'")
        key, _, value = line.partition("=")
        key, value = key.strip().lower(), value.strip()

        if section == "scenario":
            if key not in _SCENARIO_KEYS:
                raise ScenarioError(f"{where}: unknown scenario key {key!r}")
            setattr(scenario, key, _convert(key, _SCENARIO_KEYS[key], value, where))
        elif section == "gains":
            if key not in _GAIN_KEYS:
                raise ScenarioError(f"{where}: unknown gain key {key!r}")
            scenario.gains[key] = _convert(key, float, value, where)
        elif section == "pv":
            t = _convert("time", float, key, where)
            kw = _convert("pv", float, value, where)
            pv.append((t, kw))
        elif section == "events":
            if key != "event":
                raise ScenarioError(f"{where}: events section takes 'event = ...'")
            parts = value.split()
            if not 3 <= len(parts) <= 5:
                raise ScenarioError(
                    f"{where}: event needs 't_on t_off magnitude [spike [dur]]'")
            nums = [_convert("event", float, p, where) for p in parts]
            try:
                events.append(LoadEvent(
                    t_on=nums[0], t_off=nums[1], magnitude=nums[2],
                    transient_spike=nums[3] if len(nums) > 3 else 0.0,
                    spike_duration=nums[4] if len(nums) > 4 else 0.0))
            except ValueError as exc:
                raise ScenarioError(f"{where}: {exc}") from exc
        elif section == "schedule":
            t = _convert("time", float, key, where)
            parts = value.split()
            mode = parts[0].lower()
            if mode not in MODES:
                raise ScenarioError(f"{where}: unknown mode {mode!r}")
            if mode == MODE_MANUAL and len(parts) == 3:
                schedule.append(ModeSwitch(
                    t, mode,
                    _convert("ref_p", float, parts[1], where),
                    _convert("ref_q", float, parts[2], where)))
            elif len(parts) == 1:
                schedule.append(ModeSwitch(t, mode))
            else:
                raise ScenarioError(
                    f"{where}: schedule entry is 'mode' or 'manual P Q'")

    if not seen_any:
        raise ScenarioError(f"{path}: empty scenario file")

    scenario.pv_profile = tuple(pv)
    scenario.events = tuple(events)
    scenario.schedule = tuple(schedule)
    try:
        scenario.validate()
    except ScenarioError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc
    return scenario


def serialize_scenario(scenario: Scenario) -> str:
    """Inverse of parse_scenario: text that parses back to an equal object."""
    out = ["[scenario]"]
    for key, conv in _SCENARIO_KEYS.items():
        value = getattr(scenario, key)
        out.append(f"{key} = {value!r}" if conv is float else f"{key} = {value}")
    if scenario.gains:
        out.append("")
        out.append("[gains]")
        for key in _GAIN_KEYS:
            if key in scenario.gains:
                out.append(f"{key} = {scenario.gains[key]!r}")
    if scenario.pv_profile:
        out.append("")
        out.append("[pv]")
        for t, kw in scenario.pv_profile:
            out.append(f"{t!r} = {kw!r}")
    if scenario.events:
        out.append("")
        out.append("[events]")
        for ev in scenario.events:
            out.append(f"event = {ev.t_on!r} {ev.t_off!r} {ev.magnitude!r} "
                       f"{ev.transient_spike!r} {ev.spike_duration!r}")
    if scenario.schedule:
        out.append("")
        out.append("[schedule]")
        for sw in scenario.schedule:
            if sw.mode == MODE_MANUAL and sw.ref_p is not None:
                out.append(f"{sw.t!r} = manual {sw.ref_p!r} {sw.ref_q!r}")
            else:
                out.append(f"{sw.t!r} = {sw.mode}")
    return "\n".join(out) + "\n"


def save_scenario(scenario: Scenario, path: str) -> None:
    with open(path, "w") as fh:
        fh.write(serialize_scenario(scenario))


def bundled_scenario_path(name: str) -> str:
    """Filesystem path of one of the scripts shipped with the package."""
    if name not in BUNDLED_SCENARIOS:
        raise ScenarioError(
            f"unknown bundled scenario {name!r}; have {BUNDLED_SCENARIOS}")
    ref = importlib.resources.files("microhil") / "scenarios" / f"{name}.scn"
    return str(ref)


def load_bundled_scenario(name: str) -> Scenario:
    return parse_scenario(bundled_scenario_path(name))
