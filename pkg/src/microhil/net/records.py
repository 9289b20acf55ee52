"""Run-record CSV schema shared by accelerated and realtime runs.

One row per tick; the column order below is the stable on-disk contract.
Accelerated runs write the full combined record. Realtime runs write the
plant-side subset from the simulator service and the controller-side
subset from the controller service; every file carries its column names
in the header, and readers index by name.

Float cells are written with repr(), which round-trips doubles exactly,
so identical computations produce byte-identical files.
"""

from __future__ import annotations

import csv

COMBINED_COLUMNS = [
    "tick", "t", "mode", "recovery", "stale",
    "p_dem", "q_dem", "p_pv",
    "p_pcc", "q_pcc", "soc",
    "p_inv_applied", "q_inv_applied",
    "cmd_p", "cmd_q",
    "p_ref", "q_ref", "p_soc_bar",
    "p_dem_hat", "q_dem_hat", "p_dem_bar", "q_dem_bar",
    "err_p", "err_q",
    "sat_p", "sat_q", "fault",
]

PLANT_COLUMNS = [
    "tick", "t",
    "p_dem", "q_dem", "p_pv",
    "p_pcc", "q_pcc", "soc",
    "p_inv_applied", "q_inv_applied", "fault",
]

CONTROLLER_COLUMNS = [
    "tick", "t", "mode", "recovery", "stale",
    "p_pcc", "q_pcc", "soc", "p_pv",
    "cmd_p", "cmd_q",
    "p_ref", "q_ref", "p_soc_bar",
    "p_dem_hat", "q_dem_hat", "p_dem_bar", "q_dem_bar",
    "err_p", "err_q", "sat_p", "sat_q",
]

_STRING_COLUMNS = {"mode"}
_INT_COLUMNS = {"tick", "recovery", "stale", "sat_p", "sat_q", "fault"}


def format_cell(name: str, value) -> str:
    if name in _STRING_COLUMNS:
        return str(value)
    if name in _INT_COLUMNS:
        return str(int(value))
    return repr(float(value))


class RecordWriter:
    """Streams rows to a CSV file, one flush per row so crashes keep the
    partial record."""

    def __init__(self, path: str, columns: list[str]):
        self.path = path
        self.columns = columns
        self._fh = open(path, "w", newline="")
        self._writer = csv.writer(self._fh)
        self._writer.writerow(columns)

    def write(self, row: dict) -> None:
        self._writer.writerow([format_cell(c, row[c]) for c in self.columns])
        self._fh.flush()

    def close(self) -> None:
        if not self._fh.closed:
            self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_record(path: str) -> dict[str, list]:
    """Load a record as {column: list}, with numeric columns parsed."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        columns: dict[str, list] = {name: [] for name in header}
        for row in reader:
            for name, cell in zip(header, row):
                if name in _STRING_COLUMNS:
                    columns[name].append(cell)
                elif name in _INT_COLUMNS:
                    columns[name].append(int(cell))
                else:
                    columns[name].append(float(cell))
    return columns
