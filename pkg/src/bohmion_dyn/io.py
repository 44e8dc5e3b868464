"""Deterministic CSV / JSON writers.

Numbers are written with ``%.17g`` (round-trip exact) and no timestamps, so
identical inputs give byte-identical files.
"""
from __future__ import annotations

import contextlib
import csv
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .numerics import Grid

_recorders: list = []


@contextlib.contextmanager
def track():
    """Collect the paths of every file written inside the block."""
    seen: list = []
    _recorders.append(seen)
    try:
        yield seen
    finally:
        _recorders.remove(seen)


def _written(path: Path) -> None:
    for rec in _recorders:
        if path not in rec:
            rec.append(path)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return "%.17g" % float(v)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            if len(row) != len(header):
                raise ValueError(f"row has {len(row)} fields, header has {len(header)}")
            w.writerow([_fmt(v) for v in row])
    _written(path)
    return path


def read_csv(path) -> tuple:
    """Return ``(header, float array)``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")
    _written(path)
    return path


def write_snapshot(run_dir, field: str, step: int, grid: Grid, values, meta: dict) -> list:
    """Write ``<run_dir>/<field>_<step>.csv`` and its JSON sidecar.

    Columns: ``x`` then ``re_k, im_k`` per component. Returns both paths.
    """
    run_dir = Path(run_dir)
    values = np.asarray(values)
    if values.ndim == 1:
        values = values[:, None]
    x = grid.axis(0)
    header = ["x"]
    for k in range(values.shape[1]):
        header += [f"re_{k}", f"im_{k}"]
    rows = []
    for i in range(len(x)):
        row = [x[i]]
        for k in range(values.shape[1]):
            row += [values[i, k].real, values[i, k].imag]
        rows.append(row)
    stem = f"{field}_{step}"
    csv_path = write_csv(run_dir / f"{stem}.csv", header, rows)
    side = dict(meta)
    side.update({"field": field, "step": int(step), "grid": grid.meta()})
    json_path = write_json(run_dir / f"{stem}.json", side)
    return [csv_path, json_path]
