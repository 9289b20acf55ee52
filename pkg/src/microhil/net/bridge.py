"""Operator bridge line protocol.

The controller service streams one JSON telemetry object per tick,
newline-delimited, and accepts plain-text command lines:

    mode off|adaptive|manual
    ref <P_kw> <Q_kvar>
    gains p|q <k_p> <k_i> <k_d>

Each command is answered with ``ok <echo>`` or ``err <reason>``. The
scenario schedule driver and the browser console both speak exactly this
protocol; there is no side channel into the controller.
"""

from __future__ import annotations

import json

from ..control import ControllerState, InverterCommand, Measurements, set_mode

TELEMETRY_FIELDS = [
    "tick", "t", "mode", "recovery", "stale",
    "p_pcc", "q_pcc", "soc", "p_pv",
    "p_ref", "q_ref", "p_soc_bar", "p_dem_bar", "q_dem_bar",
    "err_p", "err_q", "cmd_p", "cmd_q", "sat_p", "sat_q",
]


def telemetry_line(t: float, state: ControllerState,
                   meas: Measurements | None, cmd: InverterCommand) -> str:
    dbg = state.debug
    m = meas if meas is not None else state.last_meas
    rec = {
        "tick": dbg.tick,
        "t": round(t, 6),
        "mode": state.ref.mode,
        "recovery": state.recovery_active,
        "stale": dbg.stale,
        "p_pcc": m.p_pcc if m else 0.0,
        "q_pcc": m.q_pcc if m else 0.0,
        "soc": m.soc if m else 0.0,
        "p_pv": m.p_pv if m else 0.0,
        "p_ref": dbg.p_ref,
        "q_ref": dbg.q_ref,
        "p_soc_bar": dbg.p_soc_bar,
        "p_dem_bar": dbg.p_dem_bar,
        "q_dem_bar": dbg.q_dem_bar,
        "err_p": dbg.err_p,
        "err_q": dbg.err_q,
        "cmd_p": cmd.p_kw,
        "cmd_q": cmd.q_kvar,
        "sat_p": dbg.saturated_p,
        "sat_q": dbg.saturated_q,
    }
    return json.dumps(rec, separators=(",", ":"))


def parse_telemetry(line: str) -> dict:
    rec = json.loads(line)
    if not isinstance(rec, dict) or "tick" not in rec:
        raise ValueError("not a telemetry record")
    return rec


def apply_command(state: ControllerState, line: str) -> str:
    """Apply one operator command line; returns the reply line."""
    parts = line.strip().split()
    if not parts:
        return "err empty command"
    verb = parts[0].lower()
    try:
        if verb == "mode":
            if len(parts) != 2:
                return "err usage: mode off|adaptive|manual"
            set_mode(state, parts[1].lower())
            return f"ok mode {parts[1].lower()}"
        if verb == "ref":
            if len(parts) != 3:
                return "err usage: ref <P_kw> <Q_kvar>"
            p, q = float(parts[1]), float(parts[2])
            set_mode(state, state.ref.mode, p, q)
            return f"ok ref {p} {q}"
        if verb == "gains":
            if len(parts) != 5 or parts[1] not in ("p", "q"):
                return "err usage: gains p|q <k_p> <k_i> <k_d>"
            gains = state.gains_p if parts[1] == "p" else state.gains_q
            k_p, k_i, k_d = (float(v) for v in parts[2:5])
            if k_i < 0:
                return "err k_i must be >= 0"
            gains.k_p, gains.k_i, gains.k_d = k_p, k_i, k_d
            return f"ok gains {parts[1]} {k_p} {k_i} {k_d}"
        return f"err unknown command {verb!r}"
    except ValueError as exc:
        return f"err {exc}"
