"""Run-record metrics: recovery times, tracking quality, limit audits.

All metrics are pure functions of the record (and the scenario, for event
definitions and limits), so the same record always yields the same report.
"""

from __future__ import annotations

import math

import numpy as np

from .net.records import read_record

RECOVERY_THRESHOLD_FRAC = 0.05
RECOVERY_SUSTAIN_S = 2.0
SETTLE_SKIP_S = 30.0
LIMIT_EPS = 1e-9


class MetricsError(ValueError):
    """Record is missing the columns a metric needs."""


def _column(rec: dict, name: str) -> np.ndarray:
    if name not in rec:
        raise MetricsError(f"record lacks column {name!r}")
    return np.asarray(rec[name], dtype=float)


def limit_violations(rec: dict, p_max: float = 250.0, q_max: float = 250.0,
                     ramp_limit: float = 8.0, ts: float = 0.1) -> int:
    """Count ticks where the applied inverter power breaks an amplitude or
    rate limit. Must be zero on any healthy run."""
    count = 0
    for col, limit in (("p_inv_applied", p_max), ("q_inv_applied", q_max)):
        x = _column(rec, col)
        count += int(np.sum(np.abs(x) > limit + LIMIT_EPS))
        if x.size > 1:
            count += int(np.sum(np.abs(np.diff(x)) > ramp_limit * ts + LIMIT_EPS))
    return count


def recovery_time(t: np.ndarray, p_pcc: np.ndarray, t_on: float,
                  magnitude: float, pre_ref: float,
                  ts: float) -> float | None:
    """Time from the event until |P_PCC - pre-event reference| first stays
    below 5% of the event magnitude for 2 s. None when never recovered."""
    gap = np.abs(p_pcc - pre_ref)
    ok = gap < RECOVERY_THRESHOLD_FRAC * magnitude
    n_sustain = max(1, int(round(RECOVERY_SUSTAIN_S / ts)))
    start = int(np.searchsorted(t, t_on))
    for i in range(start, len(t) - n_sustain + 1):
        if ok[i:i + n_sustain].all():
            return float(t[i] - t_on)
    return None


def event_metrics(rec: dict, events, ts: float = 0.1) -> list[dict]:
    """Per-event recovery time and peak excursion, in event order."""
    t = _column(rec, "t")
    p_pcc = _column(rec, "p_pcc")
    p_ref = _column(rec, "p_ref")
    out = []
    for ev in events:
        pre_idx = max(0, int(np.searchsorted(t, ev.t_on)) - 1)
        pre_ref = float(p_ref[pre_idx])
        rt = recovery_time(t, p_pcc, ev.t_on, ev.magnitude, pre_ref, ts)
        window = (t >= ev.t_on) & (t <= (ev.t_on + rt if rt is not None else ev.t_off))
        peak = float(np.max(np.abs(p_pcc[window] - pre_ref))) if window.any() else 0.0
        out.append({
            "t_on": ev.t_on,
            "magnitude": ev.magnitude,
            "pre_event_ref": pre_ref,
            "recovery_time_s": rt,
            "peak_excursion_kw": peak,
        })
    return out


def mode_segments(rec: dict) -> list[tuple[str, int, int]]:
    """Contiguous (mode, start_index, end_index_exclusive) runs."""
    modes = rec.get("mode")
    if not modes:
        return []
    segs = []
    start = 0
    for i in range(1, len(modes) + 1):
        if i == len(modes) or modes[i] != modes[start]:
            segs.append((modes[start], start, i))
            start = i
    return segs


def tracking_rmse(rec: dict, ts: float = 0.1,
                  settle_skip_s: float = SETTLE_SKIP_S) -> list[dict]:
    """Power-error RMSE per active mode segment, skipping the settling
    window at each segment start and any recovery/stale ticks."""
    err = _column(rec, "err_p")
    recovery = np.asarray(rec.get("recovery", [0] * len(err)), dtype=bool)
    stale = np.asarray(rec.get("stale", [0] * len(err)), dtype=bool)
    skip = int(round(settle_skip_s / ts))
    out = []
    for mode, start, end in mode_segments(rec):
        if mode == "off":
            continue
        lo = start + skip
        if lo >= end:
            continue
        sel = ~recovery[lo:end] & ~stale[lo:end]
        if not sel.any():
            continue
        seg_err = err[lo:end][sel]
        out.append({
            "mode": mode,
            "t_start": float(start * ts),
            "t_end": float(end * ts),
            "rmse_kw": float(np.sqrt(np.mean(np.square(seg_err)))),
            "max_abs_err_kw": float(np.max(np.abs(seg_err))),
        })
    return out


def compute_metrics(record, scenario=None) -> dict:
    """Full metrics report for a run record (path or loaded dict)."""
    rec = read_record(record) if isinstance(record, str) else record
    if not rec or not rec.get("t"):
        raise MetricsError("record is empty or malformed")
    ts = 0.1
    t = rec["t"]
    if len(t) > 1:
        ts = float(t[1]) - float(t[0])
        if not math.isfinite(ts) or ts <= 0:
            raise MetricsError("record time column is not increasing")
    p_max, ramp = 250.0, 8.0
    events = ()
    if scenario is not None:
        ramp = scenario.ramp_limit
        events = scenario.events
    soc = _column(rec, "soc") if "soc" in rec else np.array([])
    report = {
        "n_ticks": len(t),
        "duration_s": float(len(t) * ts),
        "soc_min": float(soc.min()) if soc.size else None,
        "soc_max": float(soc.max()) if soc.size else None,
        "tracking": tracking_rmse(rec, ts) if "err_p" in rec else [],
        "events": event_metrics(rec, events, ts)
                  if events and "p_ref" in rec else [],
    }
    if "p_inv_applied" in rec:
        report["limit_violations"] = limit_violations(rec, p_max, p_max, ramp, ts)
    return report
