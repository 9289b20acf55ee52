"""Scenario execution: accelerated in-process or realtime over TCP.

Both paths execute the same schedule through the operator-bridge command
path, write run records, and emit a metrics summary. Accelerated runs
produce one combined record (plant truth + controller internals);
realtime runs produce plant.csv from the simulator service and
controller.csv from the controller service.
"""

from __future__ import annotations

import json
import logging
import os
import socket
import threading
import time

from .metrics import compute_metrics
from .net.accelerated import build_controller, build_grid, run_accelerated
from .net.clock import MODE_REALTIME
from .net.services import ControllerService, SimulatorService
from .scenario import Scenario

log = logging.getLogger(__name__)


class ScenarioRunError(RuntimeError):
    pass


def _drive_schedule(scenario: Scenario, bridge_port: int, t0: float,
                    stop: threading.Event) -> None:
    """Issue the scenario's mode switches over the bridge socket at their
    wall-clock times, as an operator would."""
    if not scenario.schedule:
        return
    try:
        sock = socket.create_connection(("127.0.0.1", bridge_port), timeout=2.0)
    except OSError as exc:
        log.error("schedule driver could not reach bridge: %s", exc)
        return
    try:
        for sw in scenario.schedule:
            deadline = t0 + sw.t
            while not stop.is_set():
                delay = deadline - time.monotonic()
                if delay <= 0:
                    break
                time.sleep(min(delay, 0.1))
            if stop.is_set():
                return
            if sw.ref_p is not None:
                sock.sendall(f"ref {sw.ref_p} {sw.ref_q}\n".encode())
            sock.sendall(f"mode {sw.mode}\n".encode())
    except OSError as exc:
        log.error("schedule driver lost the bridge: %s", exc)
    finally:
        try:
            sock.close()
        except OSError:
            pass


def run_scenario(scenario: Scenario, accelerated: bool, out_dir: str,
                 model=None) -> dict:
    """Execute one scenario; returns paths and the metrics report."""
    os.makedirs(out_dir, exist_ok=True)
    if accelerated:
        record_path = os.path.join(out_dir, "run.csv")
        run_accelerated(scenario, record_path, model=model)
        report = compute_metrics(record_path, scenario)
        summary_path = os.path.join(out_dir, "summary.json")
        with open(summary_path, "w") as fh:
            json.dump(report, fh, indent=2)
        return {"record": record_path, "summary": summary_path,
                "metrics": report}

    n_ticks = int(round(scenario.duration / 0.1))
    grid = build_grid(scenario)
    plant_path = os.path.join(out_dir, "plant.csv")
    ctl_path = os.path.join(out_dir, "controller.csv")
    sim = SimulatorService(grid, pmu_port=0, modbus_port=0,
                           record_path=plant_path, n_ticks=n_ticks,
                           clock_mode=MODE_REALTIME)
    ctl_state = build_controller(scenario, model)
    sim.start()
    ctl = ControllerService(ctl_state, "127.0.0.1", sim.pmu_port,
                            sim.modbus_port, delay_in=scenario.delay_in,
                            delay_out=scenario.delay_out,
                            record_path=ctl_path, n_ticks=n_ticks,
                            clock_mode=MODE_REALTIME)
    ctl.start()
    stop = threading.Event()
    driver = threading.Thread(
        target=_drive_schedule, name="schedule-driver",
        args=(scenario, ctl.bridge_port, time.monotonic(), stop), daemon=True)
    driver.start()
    try:
        budget = scenario.duration + 30.0
        if not sim.join(budget) or not ctl.join(budget):
            raise ScenarioRunError("services did not finish within budget")
    finally:
        stop.set()
        sim.stop()
        ctl.stop()
        driver.join(timeout=2.0)

    report = {
        "controller": compute_metrics(ctl_path, scenario),
        "plant": compute_metrics(plant_path, scenario),
        "mean_tick_period_s": sim.clock.mean_period(),
        "overruns": sim.clock.overruns,
    }
    summary_path = os.path.join(out_dir, "summary.json")
    with open(summary_path, "w") as fh:
        json.dump(report, fh, indent=2)
    return {"plant_record": plant_path, "controller_record": ctl_path,
            "summary": summary_path, "metrics": report}
