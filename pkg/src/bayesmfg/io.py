"""Run-directory artifacts: binary field dumps with JSON sidecars, CSV mirrors, summaries.

Every file written here carries ``schema_version``.  Nothing time-dependent is
recorded, so repeating a run reproduces its artifacts byte for byte.
"""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1
CSV_MIRROR_LIMIT = 250_000  # largest field (in entries) that also gets a CSV mirror


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
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        if np.isfinite(value):
            return value
        return None if np.isnan(value) else ("inf" if value > 0 else "-inf")
    return obj


def write_json(path, payload: dict) -> Path:
    path = Path(path)
    body = {"schema_version": SCHEMA_VERSION, **_jsonable(payload)}
    path.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")
    return path


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def write_field(directory, name: str, array, axes, coords: dict | None = None, csv_mirror: bool | None = None):
    """Dump ``array`` as ``name.bin`` (C order, float64) plus ``name.json``.

    ``axes`` names each dimension; ``coords`` optionally maps axis names to
    coordinate vectors stored in the sidecar.  Small fields also get
    ``name.csv`` with one row per entry (index columns, coordinates, value).
    """
    directory = Path(directory)
    arr = np.ascontiguousarray(array, dtype=np.float64)
    axes = list(axes)
    if len(axes) != arr.ndim:
        raise ValueError(f"{name}: {len(axes)} axis names for a {arr.ndim}-d array")
    coords = coords or {}
    for ax, c in coords.items():
        if ax not in axes or len(c) != arr.shape[axes.index(ax)]:
            raise ValueError(f"{name}: coordinate {ax!r} does not match the array")
    arr.tofile(directory / f"{name}.bin")
    header = {
        "name": name,
        "shape": list(arr.shape),
        "axes": axes,
        "dtype": "float64",
        "dtype_width": 8,
        "byte_order": sys.byteorder,
        "order": "C",
        "coords": {k: np.asarray(v, dtype=float) for k, v in coords.items()},
    }
    write_json(directory / f"{name}.json", header)
    if csv_mirror is None:
        csv_mirror = arr.size <= CSV_MIRROR_LIMIT
    if csv_mirror:
        _write_field_csv(directory / f"{name}.csv", arr, axes, coords)
    return directory / f"{name}.bin"


def _write_field_csv(path, arr, axes, coords):
    idx = np.indices(arr.shape).reshape(arr.ndim, -1).T
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["# schema_version", SCHEMA_VERSION])
        w.writerow([f"i_{a}" for a in axes] + [a for a in axes if a in coords] + ["value"])
        coord_cols = [(d, np.asarray(coords[a], dtype=float)) for d, a in enumerate(axes) if a in coords]
        flat = arr.ravel()
        for row, ijk in enumerate(idx):
            w.writerow(list(ijk) + [repr(float(c[ijk[d]])) for d, c in coord_cols] + [repr(float(flat[row]))])


def read_field(directory, name: str):
    """Load a dumped field; returns ``(array, header)``."""
    directory = Path(directory)
    header = read_json(directory / f"{name}.json")
    if header.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"{name}: unsupported schema version {header.get('schema_version')}")
    dtype = np.dtype(header["dtype"]).newbyteorder("<" if header["byte_order"] == "little" else ">")
    arr = np.fromfile(directory / f"{name}.bin", dtype=dtype).reshape(header["shape"])
    return arr.astype(np.float64), header


def write_table(path, columns: dict):
    """CSV with a schema line and one column per key (equal lengths)."""
    keys = list(columns)
    n = {len(v) for v in columns.values()}
    if len(n) > 1:
        raise ValueError("columns have different lengths")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["# schema_version", SCHEMA_VERSION])
        w.writerow(keys)
        for row in zip(*(columns[k] for k in keys)):
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def read_table(path) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    keys = rows[1]
    out = {k: [] for k in keys}
    for row in rows[2:]:
        for k, v in zip(keys, row):
            out[k].append(v)
    return out
