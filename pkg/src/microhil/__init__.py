"""Networked microgrid controller-hardware-in-the-loop testbed.

A discrete-time microgrid simulator and a centralized cascaded power/SoC
controller close the loop over TCP at 10 Hz, speaking a simplified
synchrophasor stream and a Modbus register map, with step-delay
injection, scenario scripting, metrics, and an operator bridge.
"""

from .lti import LtiModel, dc_gain, default_plant_model, load_model, save_model
from .plant import (BatteryModel, InverterModel, LoadEvent, Microgrid,
                    PlantState, battery_update, demand_profile, sample_pmu,
                    step_plant)
from .control import (ControllerState, InverterCommand, Measurements,
                      PidGains, PidState, ReferenceState, SocPolicy,
                      controller_tick)
from .scenario import Scenario, parse_scenario, save_scenario

__version__ = "0.1.0"

__all__ = [
    "LtiModel", "dc_gain", "default_plant_model", "load_model", "save_model",
    "BatteryModel", "InverterModel", "LoadEvent", "Microgrid", "PlantState",
    "battery_update", "demand_profile", "sample_pmu", "step_plant",
    "ControllerState", "InverterCommand", "Measurements", "PidGains",
    "PidState", "ReferenceState", "SocPolicy", "controller_tick",
    "Scenario", "parse_scenario", "save_scenario",
]
