"""Result serialization: JSON reports and CSV surfaces.

Field CSVs carry one row per (cell, matrix entry) so the gain and value
surfaces can be plotted against the mode variable t directly; time
series CSVs carry one row per step.  Floats are written with repr
precision (shortest round-trip), commas separate, '.' is the decimal
mark, lines end with a line feed.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .fields import MatrixField
from .sim import J2Comparison, TrajectoryStats

__all__ = ["ResultBundle", "emit_field_csv", "emit_timeseries_csv", "emit_comparison_csv"]


def _fmt(x: float) -> str:
    return repr(float(x))


def _assert_finite(obj, path="report"):
    if isinstance(obj, dict):
        for k, v in obj.items():
            _assert_finite(v, f"{path}.{k}")
    elif isinstance(obj, (list, tuple)):
        for i, v in enumerate(obj):
            _assert_finite(v, f"{path}[{i}]")
    elif isinstance(obj, float) and not math.isfinite(obj):
        raise ValueError(f"non-finite scalar in {path}: {obj}")


def emit_field_csv(fld: MatrixField, path: str | Path) -> Path:
    """Write component_label, t, row, col, value rows in cell-major order."""
    path = Path(path)
    grid = fld.grid
    labels = grid.labels()
    rows, cols = fld.shape
    lines = ["component,t,row,col,value"]
    for i in range(grid.M):
        label = labels[grid.comp_of[i]]
        t = grid.midpoints[i]
        for a in range(rows):
            for b in range(cols):
                lines.append(f"{label},{_fmt(t)},{a},{b},{_fmt(fld.values[i, a, b])}")
    path.write_text("\n".join(lines) + "\n")
    return path


def emit_timeseries_csv(stats: TrajectoryStats, path: str | Path) -> Path:
    """Write k, mean_sq_norm, std_err, r_K, J2 rows (r_K blank when undefined)."""
    path = Path(path)
    lines = ["k,mean_sq_norm,std_err,r_K,J2"]
    for i, k in enumerate(stats.k):
        r = _fmt(stats.ratio[i]) if stats.ratio is not None else ""
        lines.append(
            f"{int(k)},{_fmt(stats.mean_sq_norm[i])},{_fmt(stats.std_err[i])},{r},{_fmt(stats.j2[i])}"
        )
    path.write_text("\n".join(lines) + "\n")
    return path


def emit_comparison_csv(cmp: J2Comparison, path: str | Path) -> Path:
    path = Path(path)
    lines = ["k,J2_a,J2_b,difference,difference_std_err"]
    for i, k in enumerate(cmp.k):
        lines.append(
            f"{int(k)},{_fmt(cmp.j2_a[i])},{_fmt(cmp.j2_b[i])},"
            f"{_fmt(cmp.difference[i])},{_fmt(cmp.difference_std_err[i])}"
        )
    path.write_text("\n".join(lines) + "\n")
    return path


@dataclass
class ResultBundle:
    """A JSON report plus the CSV artifacts of one CLI run."""

    command: str
    report: dict
    files: list[str] = field(default_factory=list)

    def add_field(self, out_dir: Path, name: str, fld: MatrixField) -> None:
        out_dir.mkdir(parents=True, exist_ok=True)
        self.files.append(str(emit_field_csv(fld, out_dir / f"{name}.csv")))

    def add_timeseries(self, out_dir: Path, name: str, stats: TrajectoryStats) -> None:
        out_dir.mkdir(parents=True, exist_ok=True)
        self.files.append(str(emit_timeseries_csv(stats, out_dir / f"{name}.csv")))

    def add_comparison(self, out_dir: Path, name: str, cmp: J2Comparison) -> None:
        out_dir.mkdir(parents=True, exist_ok=True)
        self.files.append(str(emit_comparison_csv(cmp, out_dir / f"{name}.csv")))

    def write(self, out_dir: str | Path) -> Path:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        _assert_finite(self.report)
        payload = {"command": self.command, **self.report, "files": self.files}
        target = out_dir / "report.json"
        target.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        return target
