"""CSV traces, JSON snapshots and JSON reports.

Floats in CSV use '%.17g', which round-trips every float64.  JSON floats
use Python's shortest repr, which round-trips as well, so a snapshot
reloads bit for bit.
"""

import csv
import json
from pathlib import Path

import numpy as np

from .errors import ConfigError, OutputError
from .flow import TRACE_COLUMNS
from .grid import RadialField, build_grid

TRACE_HEADER = ",".join(TRACE_COLUMNS)


def _open(path, mode):
    path = Path(path)
    try:
        if "w" in mode:
            path.parent.mkdir(parents=True, exist_ok=True)
        return open(path, mode, newline="" if "w" in mode else None, encoding="utf-8")
    except OSError as exc:
        raise OutputError(f"cannot open {path}: {exc.strerror or exc}") from exc


class CsvTraceSink:
    """File-backed trace sink; usable as a context manager."""

    def __init__(self, path):
        self.path = Path(path)
        self._fh = _open(self.path, "w")
        self._write(TRACE_HEADER + "\n")

    def _write(self, text):
        try:
            self._fh.write(text)
        except OSError as exc:
            raise OutputError(f"cannot write {self.path}: {exc.strerror or exc}") from exc

    def write_row(self, row):
        row = np.asarray(row, dtype=float)
        if row.shape != (len(TRACE_COLUMNS),):
            raise ValueError(f"trace row needs {len(TRACE_COLUMNS)} values, got shape {row.shape}")
        self._write(",".join("%.17g" % x for x in row) + "\n")

    emit_trace_row = write_row

    def close(self):
        if not self._fh.closed:
            self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_trace(path):
    """Load a trace CSV into a (rows, 15) array; checks the header."""
    with _open(path, "r") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != list(TRACE_COLUMNS):
            raise OutputError(f"{path}: unexpected trace header {header!r}")
        rows = [[float(x) for x in line] for line in reader if line]
    return np.array(rows, dtype=float).reshape(-1, len(TRACE_COLUMNS))


def _dump(obj, path):
    with _open(path, "w") as fh:
        try:
            json.dump(obj, fh, indent=1)
            fh.write("\n")
        except OSError as exc:
            raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from exc


def snapshot_dict(fld):
    return {
        "t": float(fld.time),
        "n": fld.grid.n,
        "m": fld.grid.m,
        "psi": fld.grid.psi.tolist(),
        "rho": fld.rho.tolist(),
    }


def emit_snapshot(state, path):
    """Write a FlowState or RadialField as JSON {t, n, m, psi, rho}."""
    fld = getattr(state, "field", state)
    _dump(snapshot_dict(fld), path)


def load_snapshot(path):
    """Inverse of emit_snapshot; returns a RadialField."""
    with _open(path, "r") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise OutputError(f"{path}: malformed snapshot JSON: {exc}") from exc
    try:
        grid = build_grid(int(data["n"]), int(data["m"]))
        psi = np.asarray(data["psi"], dtype=float)
        rho = np.asarray(data["rho"], dtype=float)
        t = float(data["t"])
    except KeyError as exc:
        raise OutputError(f"{path}: snapshot lacks key {exc}") from exc
    except ConfigError as exc:
        raise OutputError(f"{path}: {exc}") from exc
    if psi.shape != grid.psi.shape or not np.array_equal(psi, grid.psi):
        raise OutputError(f"{path}: psi does not match the grid for n={grid.n}, m={grid.m}")
    return RadialField(grid, rho, t)


def emit_report(report, path, extra=None):
    """Write a QuermassReport (plus optional extra keys) as JSON."""
    obj = report.to_dict() if hasattr(report, "to_dict") else dict(report)
    if extra:
        obj.update(extra)
    _dump(obj, path)
