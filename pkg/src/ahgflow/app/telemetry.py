"""Trajectory CSV emission and parsing."""

from __future__ import annotations

import math
from pathlib import Path

from ..flow import TrajectoryRecord

CSV_HEADER = (
    "t,E,E_bogo,deg_plaq,deg_vort,gauss_l2sq,dbar_l2sq,"
    "dissipation,energy_identity_defect,gauss_heat_residual"
)
ABORT_PREFIX = "# aborted: "


def _fmt(v) -> str:
    if isinstance(v, (int,)) and not isinstance(v, bool):
        return str(v)
    v = float(v)
    if math.isnan(v):
        return "nan"
    return repr(v)


def format_row(rec: TrajectoryRecord) -> str:
    return ",".join(_fmt(v) for v in rec.row())


class TrajectoryWriter:
    """Streams records to a CSV file, flushing each row so aborted runs keep partial output."""

    def __init__(self, path):
        self.path = Path(path)
        self._fh = self.path.open("w", newline="\n")
        self._fh.write(CSV_HEADER + "\n")

    def write(self, rec: TrajectoryRecord) -> None:
        self._fh.write(format_row(rec) + "\n")
        self._fh.flush()

    def abort(self, reason: str) -> None:
        self._fh.write(ABORT_PREFIX + " ".join(str(reason).split()) + "\n")

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_trajectory_csv(path, records, status: str = "ok") -> None:
    with TrajectoryWriter(path) as w:
        for rec in records:
            w.write(rec)
        if status != "ok":
            w.abort(status.removeprefix("aborted: "))


def read_trajectory_csv(path) -> tuple[list[dict], str]:
    """Rows as dicts of floats, plus ``"ok"`` or the abort reason."""
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != CSV_HEADER:
        raise ValueError(f"{path}: missing or unexpected CSV header")
    cols = CSV_HEADER.split(",")
    rows, status = [], "ok"
    for line in lines[1:]:
        if not line.strip():
            continue
        if line.startswith(ABORT_PREFIX):
            status = "aborted: " + line[len(ABORT_PREFIX) :]
            continue
        if line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) != len(cols):
            raise ValueError(f"{path}: row with {len(parts)} fields, expected {len(cols)}")
        rows.append({c: float(p) for c, p in zip(cols, parts)})
    return rows, status
