"""Deterministic output artifacts: CSV tables, JSON summaries, and
generated gnuplot scripts.

Every float is printed with 17 significant digits (round-trip exact for
IEEE doubles), newlines are always "\\n", and key order in JSON is
sorted, so identical inputs produce identical bytes.
"""

from __future__ import annotations

import json
from dataclasses import asdict, is_dataclass
from pathlib import Path

import numpy as np

from .functionals import CSV_COLUMNS
from .spectral import Grid, to_nodal

__all__ = [
    "format_float",
    "csv_text",
    "write_csv",
    "diagnostics_csv_text",
    "write_diagnostics_csv",
    "write_trajectory_csv",
    "write_json",
    "write_plot_script",
]

_FMT = "%.17g"


def format_float(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return _FMT % float(x)


def _format_cell(x) -> str:
    if isinstance(x, str):
        return x
    return format_float(x)


def csv_text(header, rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_format_cell(x) for x in row))
    return "\n".join(lines) + "\n"


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(csv_text(header, rows), newline="\n")
    return path


def diagnostics_csv_text(records) -> str:
    return csv_text(CSV_COLUMNS, (r.row() for r in records))


def write_diagnostics_csv(path, records) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(diagnostics_csv_text(records), newline="\n")
    return path


def write_trajectory_csv(path, grid: Grid, states) -> Path:
    """Long-format nodal snapshots: one row per (time, node).

    Columns: t, the node coordinates (x [, y [, z]]), then nodal theta,
    chi, chi_t.
    """
    axes = "xyz"[: grid.dim]
    header = ["t", *axes, "theta", "chi", "chi_t"]
    coords = np.meshgrid(*([grid.nodes1d] * grid.dim), indexing="ij")
    flat_coords = [c.ravel() for c in coords]

    def rows():
        for s in states:
            th = to_nodal(grid, s.theta).ravel()
            ch = to_nodal(grid, s.chi).ravel()
            ct = to_nodal(grid, s.chi_t).ravel()
            for j in range(th.size):
                yield (s.time, *(fc[j] for fc in flat_coords),
                       th[j], ch[j], ct[j])

    return write_csv(path, header, rows())


def _jsonable(obj):
    if is_dataclass(obj) and not isinstance(obj, type):
        return _jsonable(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, Grid):
        return {"dim": obj.dim, "n": obj.n}
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(_jsonable(obj), indent=2, sort_keys=True)
    path.write_text(text + "\n", newline="\n")
    return path


def write_plot_script(path, csv_name: str, columns, title: str,
                      logscale_y: bool = False, x_column: str = "t") -> Path:
    """Generate a gnuplot script plotting named columns of one CSV."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [
        "# gnuplot script (generated); run: gnuplot -p " + path.name,
        "set datafile separator ','",
        "set key autotitle columnheader outside",
        f"set title '{title}'",
        f"set xlabel '{x_column}'",
    ]
    if logscale_y:
        lines.append("set logscale y")
    plots = ", ".join(
        f"'{csv_name}' using '{x_column}':'{c}' with lines" for c in columns
    )
    lines.append("plot " + plots)
    path.write_text("\n".join(lines) + "\n", newline="\n")
    return path
