"""Deterministic in-process co-simulation.

Runs the simulator and controller against each other without sockets or
wall-clock scheduling, but every measurement and command still passes
through the real wire codecs (synchrophasor frames one way, Modbus
register transactions the other), so the data path matches the networked
services bit for bit.

Per tick k (t = k * ts):
    1. apply due schedule entries through the operator-bridge command
       parser, exactly as a connected console would;
    2. the plant steps with the command currently latched in the inverter
       registers, then publishes PMU frames and the register image;
    3. the controller consumes the measurement aged ``delay_in`` ticks,
       runs its supervisor, and its command travels ``delay_out`` ticks
       (the final hop being the latch the plant reads next tick).

With one step of delay each way, the command computed from the
measurement of tick k-1 reaches the plant at tick k+1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..control import (ControllerState, InverterCommand, Measurements,
                       PidGains, ReferenceState, controller_tick)
from ..lti import LtiModel, default_plant_model
from ..plant import InverterModel, Microgrid
from ..wire import c37118, modbus
from .bridge import apply_command
from .delay import DelayLine
from .records import COMBINED_COLUMNS, RecordWriter

FAILSAFE_STALE_TICKS = 50


def build_grid(scenario) -> Microgrid:
    return Microgrid(
        inverter=InverterModel(ramp_limit=scenario.ramp_limit),
        base_demand=scenario.base_demand,
        base_demand_q=scenario.base_demand_q,
        events=scenario.events,
        pv_profile=scenario.pv_profile,
        noise_seed=scenario.seed,
        noise_std=scenario.demand_noise,
        demand_swing=scenario.demand_swing,
        soc_init=scenario.soc_init,
    )


def build_controller(scenario, model: LtiModel | None = None) -> ControllerState:
    model = model if model is not None else default_plant_model()
    gains = dict(k_p=0.8, k_i=0.4, k_d=0.0)
    gains.update(scenario.gains)
    ts = model.ts
    ref = ReferenceState(mode=scenario.initial_mode,
                         manual_ref_p=scenario.manual_ref_p,
                         manual_ref_q=scenario.manual_ref_q,
                         rate_limit=scenario.rate_limit_r)
    return ControllerState(
        gains_p=PidGains(ts=ts, **gains),
        gains_q=PidGains(ts=ts, **gains),
        ref=ref,
        model=model,
        inverter=InverterModel(ramp_limit=scenario.ramp_limit),
    )


@dataclass
class AcceleratedResult:
    record_path: str
    n_ticks: int
    controller: ControllerState
    grid: Microgrid
    bridge_replies: list = field(default_factory=list)
    debugs: list = field(default_factory=list)


def run_accelerated(scenario, record_path: str,
                    model: LtiModel | None = None,
                    collect_debug: bool = False) -> AcceleratedResult:
    """Execute one scenario to completion; returns paths and end states."""
    grid = build_grid(scenario)
    ctl = build_controller(scenario, model)
    ts = grid.ts
    n_ticks = int(round(scenario.duration / ts))

    ingress = DelayLine(scenario.delay_in)
    egress = DelayLine(max(0, scenario.delay_out - 1))
    registers = [0] * modbus.REGISTER_COUNT
    schedule = list(scenario.schedule)
    replies: list = []
    debugs: list = []
    txn = 0

    result = AcceleratedResult(record_path, n_ticks, ctl, grid,
                               replies, debugs)
    with RecordWriter(record_path, COMBINED_COLUMNS) as writer:
        for k in range(n_ticks):
            t = k * ts

            while schedule and schedule[0].t <= t:
                sw = schedule.pop(0)
                if sw.ref_p is not None:
                    replies.append(apply_command(ctl, f"ref {sw.ref_p} {sw.ref_q}"))
                replies.append(apply_command(ctl, f"mode {sw.mode}"))

            # Plant phase: step with the latched references, publish.
            applied = (modbus.reg_to_ref(registers[modbus.REG_P_REF]),
                       modbus.reg_to_ref(registers[modbus.REG_Q_REF]))
            state = grid.advance(applied[0], applied[1])
            registers[modbus.REG_SOC] = modbus.soc_to_reg(state.battery.soc)
            registers[modbus.REG_PV] = modbus.pv_to_reg(state.p_pv)
            registers[modbus.REG_HEARTBEAT] = k & 0xFFFF
            faults = (modbus.FAULT_PLANT if state.fault else 0) | \
                     (modbus.FAULT_BATTERY_SAT if state.battery.saturated else 0)
            registers[modbus.REG_FAULTS] = faults

            pmu1 = None
            for pmu_id in (1, 2, 3, 4, 5, 6):
                frame = c37118.encode_data_frame(grid.pmu_sample(pmu_id),
                                                 pmu_id, t)
                sample, idcode, _ = c37118.decode_data_frame(frame)
                if idcode == 1:
                    pmu1 = sample

            txn += 1
            req = modbus.build_read_request(txn, 1, modbus.REG_SOC, 2)
            resp, _ = modbus.serve_request(modbus.parse_request(req), registers)
            soc_raw, pv_raw = modbus.parse_response(resp)
            meas = Measurements(p_pcc=pmu1.p_kw, q_pcc=pmu1.q_kvar,
                                soc=modbus.reg_to_soc(soc_raw),
                                p_pv=modbus.reg_to_pv(pv_raw))

            # Controller phase.
            delayed = ingress.step(meas)
            cmd, ctl = controller_tick(delayed, ctl)
            if ctl.staleness >= FAILSAFE_STALE_TICKS:
                cmd = InverterCommand(0.0, 0.0)
            out = egress.step(cmd)
            if out is not None:
                txn += 1
                wreq = modbus.build_write_request(
                    txn, 1, modbus.REG_P_REF,
                    (modbus.ref_to_reg(out.p_kw), modbus.ref_to_reg(out.q_kvar)))
                wresp, writes = modbus.serve_request(
                    modbus.parse_request(wreq), registers,
                    ref_limit_kw=grid.inverter.p_max)
                modbus.parse_response(wresp)
                for addr, raw in writes.items():
                    registers[addr] = raw

            dbg = ctl.debug
            writer.write({
                "tick": k, "t": t, "mode": ctl.ref.mode,
                "recovery": ctl.recovery_active, "stale": dbg.stale,
                "p_dem": state.p_dem, "q_dem": state.q_dem, "p_pv": state.p_pv,
                "p_pcc": state.p_pcc, "q_pcc": state.q_pcc,
                "soc": state.battery.soc,
                "p_inv_applied": state.p_inv_applied,
                "q_inv_applied": state.q_inv_applied,
                "cmd_p": dbg.cmd_p, "cmd_q": dbg.cmd_q,
                "p_ref": dbg.p_ref, "q_ref": dbg.q_ref,
                "p_soc_bar": dbg.p_soc_bar,
                "p_dem_hat": dbg.p_dem_hat, "q_dem_hat": dbg.q_dem_hat,
                "p_dem_bar": dbg.p_dem_bar, "q_dem_bar": dbg.q_dem_bar,
                "err_p": dbg.err_p, "err_q": dbg.err_q,
                "sat_p": dbg.saturated_p, "sat_q": dbg.saturated_q,
                "fault": state.fault,
            })
            if collect_debug:
                debugs.append(dbg)
    return result
