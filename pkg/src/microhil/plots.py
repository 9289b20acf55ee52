"""Figure emission for run records.

Produces the standard report set: a three-panel active-power figure
(PCC flow against its reference, inverter input with rating guides, SoC
with band shading), a two-panel reactive figure, and per-event zoom
panels for load-switch runs.
"""

from __future__ import annotations

import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .net.records import read_record

SOC_BANDS = (20.0, 30.0, 80.0, 90.0)


def _arr(rec: dict, name: str) -> np.ndarray:
    return np.asarray(rec.get(name, []), dtype=float)


def emit_plots(record, out_dir: str, scenario=None,
               p_max: float = 250.0) -> list[str]:
    """Write the figure set; returns the paths created."""
    rec = read_record(record) if isinstance(record, str) else record
    os.makedirs(out_dir, exist_ok=True)
    t = _arr(rec, "t")
    paths = []

    fig, axes = plt.subplots(3, 1, figsize=(9, 8), sharex=True)
    ax = axes[0]
    if t.size:
        ax.plot(t, _arr(rec, "p_pcc"), "k", lw=0.8, label="P_PCC")
        if "p_ref" in rec:
            ax.plot(t, _arr(rec, "p_ref"), "b", lw=0.8, label="reference")
    ax.set_ylabel("PCC active power (kW)")
    if ax.get_legend_handles_labels()[0]:
        ax.legend(loc="upper right", fontsize=8)
    ax = axes[1]
    if t.size and "p_inv_applied" in rec:
        ax.plot(t, _arr(rec, "p_inv_applied"), "r", lw=0.8)
    elif t.size and "cmd_p" in rec:
        ax.plot(t, _arr(rec, "cmd_p"), "r", lw=0.8)
    ax.axhline(p_max, color="gray", ls="--", lw=0.6)
    ax.axhline(-p_max, color="gray", ls="--", lw=0.6)
    ax.set_ylabel("inverter input (kW)")
    ax = axes[2]
    if t.size and "soc" in rec:
        ax.plot(t, _arr(rec, "soc"), "g", lw=0.9)
    lo_abs, lo_dz, hi_dz, hi_abs = SOC_BANDS
    ax.axhspan(lo_abs, lo_dz, color="orange", alpha=0.15)
    ax.axhspan(hi_dz, hi_abs, color="orange", alpha=0.15)
    ax.axhline(lo_abs, color="red", ls=":", lw=0.6)
    ax.axhline(hi_abs, color="red", ls=":", lw=0.6)
    ax.set_ylabel("SoC (%)")
    ax.set_xlabel("time (s)")
    fig.tight_layout()
    path = os.path.join(out_dir, "active_power.png")
    fig.savefig(path, dpi=110)
    plt.close(fig)
    paths.append(path)

    fig, axes = plt.subplots(2, 1, figsize=(9, 5.5), sharex=True)
    ax = axes[0]
    if t.size:
        ax.plot(t, _arr(rec, "q_pcc"), "k", lw=0.8, label="Q_PCC")
        if "q_ref" in rec:
            ax.plot(t, _arr(rec, "q_ref"), "b", lw=0.8, label="reference")
    ax.set_ylabel("PCC reactive power (kvar)")
    if ax.get_legend_handles_labels()[0]:
        ax.legend(loc="upper right", fontsize=8)
    ax = axes[1]
    if t.size and "q_inv_applied" in rec:
        ax.plot(t, _arr(rec, "q_inv_applied"), "r", lw=0.8)
    ax.set_ylabel("inverter input (kvar)")
    ax.set_xlabel("time (s)")
    fig.tight_layout()
    path = os.path.join(out_dir, "reactive_power.png")
    fig.savefig(path, dpi=110)
    plt.close(fig)
    paths.append(path)

    events = scenario.events if scenario is not None else ()
    for i, ev in enumerate(events, start=1):
        lo, hi = ev.t_on - 10.0, min(ev.t_on + 60.0, ev.t_off + 20.0)
        sel = (t >= lo) & (t <= hi)
        fig, axes = plt.subplots(2, 1, figsize=(7, 5), sharex=True)
        if sel.any():
            axes[0].plot(t[sel], _arr(rec, "p_pcc")[sel], "k", lw=0.9)
            if "p_ref" in rec:
                axes[0].plot(t[sel], _arr(rec, "p_ref")[sel], "b", lw=0.8)
            if "p_inv_applied" in rec:
                axes[1].plot(t[sel], _arr(rec, "p_inv_applied")[sel], "r", lw=0.9)
        axes[0].axvline(ev.t_on, color="gray", ls=":", lw=0.8)
        axes[1].axvline(ev.t_on, color="gray", ls=":", lw=0.8)
        axes[0].set_ylabel("P_PCC (kW)")
        axes[1].set_ylabel("inverter (kW)")
        axes[1].set_xlabel("time (s)")
        axes[0].set_title(f"event {i}: {ev.magnitude:.0f} kW at t={ev.t_on:.0f}s")
        fig.tight_layout()
        path = os.path.join(out_dir, f"event_{i}_zoom.png")
        fig.savefig(path, dpi=110)
        plt.close(fig)
        paths.append(path)
    return paths
