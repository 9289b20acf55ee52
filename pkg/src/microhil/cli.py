"""Command-line entry points.

    mghil sim run --scenario FILE [--pmu-port N] [--modbus-port N] ...
    mghil ctl run --config FILE --sim HOST [--delay-in N] [--delay-out N] ...
    mghil scenario run FILE [--accelerated] [--out DIR]
    mghil scenario metrics RECORD [--scenario FILE]
    mghil scenario plot RECORD [--out DIR] [--scenario FILE]
"""

from __future__ import annotations

import argparse
import json
import logging
import sys


def _cmd_sim_run(args) -> int:
    from .net.accelerated import build_grid
    from .net.services import SimulatorService
    from .scenario import parse_scenario

    scenario = parse_scenario(args.scenario)
    grid = build_grid(scenario)
    n_ticks = int(round(scenario.duration / grid.ts)) if scenario.duration else None
    sim = SimulatorService(grid, host=args.host, pmu_port=args.pmu_port,
                           modbus_port=args.modbus_port,
                           record_path=args.record, n_ticks=n_ticks)
    sim.start()
    print(f"simulator up: synchrophasor {sim.pmu_port}, modbus {sim.modbus_port}")
    try:
        sim.join()
    except KeyboardInterrupt:
        pass
    finally:
        sim.stop()
    state = sim.grid.state
    print(f"final: t={state.t:.1f}s soc={state.battery.soc:.2f}% "
          f"p_pcc={state.p_pcc:.1f}kW")
    return 0


def _cmd_ctl_run(args) -> int:
    from .config import build_controller_from_config
    from .net.services import ControllerService

    state = build_controller_from_config(args.config)
    ctl = ControllerService(state, args.sim, args.pmu_port, args.modbus_port,
                            bridge_port=args.bridge_port,
                            delay_in=args.delay_in, delay_out=args.delay_out,
                            record_path=args.record)
    ctl.start()
    print(f"controller up: bridge on {ctl.bridge_port}, "
          f"sim at {args.sim}:{args.pmu_port}/{args.modbus_port}")
    try:
        ctl.join()
    except KeyboardInterrupt:
        pass
    finally:
        ctl.stop()
    return 0


def _cmd_scenario_run(args) -> int:
    from .runner import run_scenario
    from .scenario import parse_scenario

    scenario = parse_scenario(args.file)
    result = run_scenario(scenario, accelerated=args.accelerated,
                          out_dir=args.out)
    print(json.dumps(result["metrics"], indent=2, default=str))
    for key in ("record", "plant_record", "controller_record", "summary"):
        if key in result:
            print(f"{key}: {result[key]}")
    return 0


def _cmd_scenario_metrics(args) -> int:
    from .metrics import compute_metrics
    from .scenario import parse_scenario

    scenario = parse_scenario(args.scenario) if args.scenario else None
    report = compute_metrics(args.record, scenario)
    print(json.dumps(report, indent=2, default=str))
    return 0


def _cmd_scenario_plot(args) -> int:
    from .plots import emit_plots
    from .scenario import parse_scenario

    scenario = parse_scenario(args.scenario) if args.scenario else None
    for path in emit_plots(args.record, args.out, scenario):
        print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mghil",
                                     description="microgrid HIL testbed")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="group", required=True)

    sim = sub.add_parser("sim", help="simulator endpoint")
    sim_sub = sim.add_subparsers(dest="cmd", required=True)
    run = sim_sub.add_parser("run", help="host the plant services")
    run.add_argument("--scenario", required=True)
    run.add_argument("--host", default="127.0.0.1")
    run.add_argument("--pmu-port", type=int, default=4712)
    run.add_argument("--modbus-port", type=int, default=1502)
    run.add_argument("--record")
    run.set_defaults(func=_cmd_sim_run)

    ctl = sub.add_parser("ctl", help="controller endpoint")
    ctl_sub = ctl.add_subparsers(dest="cmd", required=True)
    run = ctl_sub.add_parser("run", help="run the controller against a simulator")
    run.add_argument("--config", required=True)
    run.add_argument("--sim", default="127.0.0.1")
    run.add_argument("--pmu-port", type=int, default=4712)
    run.add_argument("--modbus-port", type=int, default=1502)
    run.add_argument("--bridge-port", type=int, default=4777)
    run.add_argument("--delay-in", type=int, default=1)
    run.add_argument("--delay-out", type=int, default=1)
    run.add_argument("--record")
    run.set_defaults(func=_cmd_ctl_run)

    sc = sub.add_parser("scenario", help="script execution and analysis")
    sc_sub = sc.add_subparsers(dest="cmd", required=True)
    run = sc_sub.add_parser("run", help="execute a scenario end to end")
    run.add_argument("file")
    run.add_argument("--accelerated", action="store_true")
    run.add_argument("--out", default="runs/latest")
    run.set_defaults(func=_cmd_scenario_run)
    met = sc_sub.add_parser("metrics", help="metrics report for a run record")
    met.add_argument("record")
    met.add_argument("--scenario")
    met.set_defaults(func=_cmd_scenario_metrics)
    plot = sc_sub.add_parser("plot", help="emit figures for a run record")
    plot.add_argument("record")
    plot.add_argument("--out", default="plots")
    plot.add_argument("--scenario")
    plot.set_defaults(func=_cmd_scenario_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        return args.func(args)
    except Exception as exc:  # surfaced as exit status for scripting
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
