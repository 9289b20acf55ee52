"""Controller-service configuration files.

Same sectioned key/value format as scenario files:

    [controller]  mode, manual references, reference rate limit, actuator
                  limits, optional model_file (plain-text state-space)
    [gains]       k_p / k_i / k_d for both power loops
    [soc]         band edges and the SoC loop's PI settings
"""

from __future__ import annotations

from .control import (MODES, ControllerState, PidGains, ReferenceState,
                      SocPolicy)
from .lti import default_plant_model, load_model
from .plant import InverterModel

_CONTROLLER_KEYS = {
    "mode": str,
    "manual_ref_p": float,
    "manual_ref_q": float,
    "rate_limit_r": float,
    "ramp_limit": float,
    "p_max": float,
    "q_max": float,
    "model_file": str,
}
_GAIN_KEYS = {"k_p": float, "k_i": float, "k_d": float}
_SOC_KEYS = {
    "lo_abs": float, "lo_dz": float, "hi_dz": float, "hi_abs": float,
    "k_p_soc": float, "k_i_soc": float, "windup_limit": float,
    "pv_gain": float,
}


class ConfigError(ValueError):
    pass


def parse_controller_config(path: str) -> dict:
    """Read a config file into {section: {key: value}} with validation."""
    sections = {"controller": {}, "gains": {}, "soc": {}}
    keysets = {"controller": _CONTROLLER_KEYS, "gains": _GAIN_KEYS,
               "soc": _SOC_KEYS}
    section = None
    with open(path) as fh:
        for lineno, rawline in enumerate(fh, start=1):
            where = f"{path}:{lineno}"
            line = rawline.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("[") and line.endswith("]"):
                section = line[1:-1].strip().lower()
                if section not in sections:
                    raise ConfigError(f"{where}: unknown section [{section}]")
                continue
            if section is None:
                raise ConfigError(f"{where}: key outside any section")
            if "=" not in line:
                raise ConfigError(f"{where}: expected 'key = value'")
            key, _, value = line.partition("=")
            key, value = key.strip().lower(), value.strip()
            keys = keysets[section]
            if key not in keys:
                raise ConfigError(f"{where}: unknown key {key!r}")
            conv = keys[key]
            try:
                sections[section][key] = conv(value) if conv is not str else value
            except ValueError as exc:
                raise ConfigError(f"{where}: bad value for {key!r}") from exc
    mode = sections["controller"].get("mode", "adaptive")
    if mode not in MODES:
        raise ConfigError(f"{path}: unknown mode {mode!r}")
    return sections


def build_controller_from_config(path: str) -> ControllerState:
    cfg = parse_controller_config(path)
    ctl = cfg["controller"]
    model = load_model(ctl["model_file"]) if "model_file" in ctl \
        else default_plant_model()
    ts = model.ts
    gains = dict(k_p=0.8, k_i=0.4, k_d=0.0)
    gains.update(cfg["gains"])
    soc_kwargs = dict(cfg["soc"])
    return ControllerState(
        gains_p=PidGains(ts=ts, **gains),
        gains_q=PidGains(ts=ts, **gains),
        soc=SocPolicy(ts=ts, **soc_kwargs),
        ref=ReferenceState(
            mode=ctl.get("mode", "adaptive"),
            manual_ref_p=ctl.get("manual_ref_p", 0.0),
            manual_ref_q=ctl.get("manual_ref_q", 0.0),
            rate_limit=ctl.get("rate_limit_r", 5.0)),
        model=model,
        inverter=InverterModel(
            p_max=ctl.get("p_max", 250.0),
            q_max=ctl.get("q_max", 250.0),
            ramp_limit=ctl.get("ramp_limit", 8.0)),
    )
