"""CSV tables and ASCII legacy VTK point snapshots."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np


def _fmt(x):
    return repr(float(x))


def write_csv(path, columns, rows):
    """Write ``rows`` (sequence of mappings or sequences) with a header row."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            vals = [row[c] for c in columns] if isinstance(row, dict) else list(row)
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in vals])
    return path


def read_csv(path):
    """Rows as dicts of strings keyed by the header."""
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_report(path, report: dict):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report, indent=2, sort_keys=True, default=float) + "\n")
    return path


def _as3(a):
    a = np.asarray(a, float)
    if a.ndim == 1:
        a = a[:, None]
    out = np.zeros((a.shape[0], 3))
    out[:, :a.shape[1]] = a
    return out


def write_snapshot(path, positions, point_data: dict):
    """ASCII legacy VTK POLYDATA with one vertex per particle.

    ``point_data`` maps names to (n,) scalars or (n, dim) vectors; values are
    written with 17 significant digits in particle order.
    """
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        pts = _as3(positions)
        n = pts.shape[0]
        lines = ["# vtk DataFile Version 3.0", "tlsph snapshot", "ASCII",
                 "DATASET POLYDATA", f"POINTS {n} double"]
        lines += [" ".join(f"{v:.17g}" for v in p) for p in pts]
        lines.append(f"VERTICES {n} {2 * n}")
        lines += [f"1 {i}" for i in range(n)]
        lines.append(f"POINT_DATA {n}")
        for name, arr in point_data.items():
            arr = np.asarray(arr, float)
            if arr.ndim == 1:
                lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
                lines += [f"{v:.17g}" for v in arr]
            else:
                lines.append(f"VECTORS {name} double")
                lines += [" ".join(f"{v:.17g}" for v in p) for p in _as3(arr)]
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write snapshot {path}: {exc}") from exc
    return path


def read_snapshot(path):
    """Parse a file written by :func:`write_snapshot`.

    Returns ``(points, arrays)`` with vectors as (n, 3) arrays.
    """
    tokens = Path(path).read_text().split("\n")
    it = iter(tokens)
    points, arrays = None, {}
    n = 0
    for line in it:
        parts = line.split()
        if not parts:
            continue
        key = parts[0]
        if key == "POINTS":
            n = int(parts[1])
            points = np.array([[float(v) for v in next(it).split()] for _ in range(n)])
        elif key == "VERTICES":
            for _ in range(int(parts[1])):
                next(it)
        elif key == "SCALARS":
            next(it)  # LOOKUP_TABLE
            arrays[parts[1]] = np.array([float(next(it)) for _ in range(n)])
        elif key == "VECTORS":
            arrays[parts[1]] = np.array([[float(v) for v in next(it).split()] for _ in range(n)])
    return points, arrays
