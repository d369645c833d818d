"""Reading and writing sinograms, reconstructions and reports.

Two array formats are used:

* CSV with columns ``k, p, theta, re, im`` (sinograms only);
* a raw little-endian complex128 row-major ``.bin`` file with a ``.json``
  sidecar holding the shape and metadata.

Floats are written with ``repr`` so identical inputs give identical bytes.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .inversion import FieldGrid
from .sphere import SinogramGrid

__all__ = [
    "write_sinogram_csv",
    "read_sinogram_csv",
    "write_array",
    "read_array",
    "write_sinogram_bin",
    "read_sinogram_bin",
    "write_field_bin",
    "read_field_bin",
    "write_rows_csv",
    "write_json",
]

_DTYPE = "<c16"


def _fmt(x: float) -> str:
    return repr(float(x))


def write_sinogram_csv(path, sinos: Sequence[SinogramGrid], ks: Iterable[int] | None = None) -> Path:
    """Write one row per sample of each sinogram: ``k, p, theta, re, im``."""
    path = Path(path)
    ks = range(len(sinos)) if ks is None else list(ks)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "p", "theta", "re", "im"])
        for k, g in zip(ks, sinos):
            for i, th in enumerate(g.theta):
                for j, p in enumerate(g.p):
                    v = g.values[i, j]
                    w.writerow([k, _fmt(p), _fmt(th), _fmt(v.real), _fmt(v.imag)])
    return path


def read_sinogram_csv(path, p_max: float | None = None) -> dict[int, SinogramGrid]:
    """Inverse of :func:`write_sinogram_csv`; the grid is recovered from the samples."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    out = {}
    for k in np.unique(data[:, 0]).astype(int):
        rows = data[data[:, 0] == k]
        p = np.unique(rows[:, 1])
        th = np.unique(rows[:, 2])
        vals = np.zeros((th.size, p.size), dtype=complex)
        ip = np.searchsorted(p, rows[:, 1])
        it = np.searchsorted(th, rows[:, 2])
        vals[it, ip] = rows[:, 3] + 1j * rows[:, 4]
        pm = -p[0] if p_max is None else p_max
        out[int(k)] = SinogramGrid(vals, float(pm))
    return out


def write_array(stem, values: np.ndarray, meta: dict) -> tuple[Path, Path]:
    """Write ``stem.bin`` (row-major complex128) and ``stem.json``."""
    stem = Path(stem)
    arr = np.ascontiguousarray(np.asarray(values, dtype=_DTYPE))
    bin_path = stem.with_suffix(".bin")
    json_path = stem.with_suffix(".json")
    bin_path.write_bytes(arr.tobytes(order="C"))
    side = {"dtype": "complex128", "byte_order": "little", "order": "row-major",
            "shape": list(arr.shape), "meta": meta}
    json_path.write_text(json.dumps(side, indent=2, sort_keys=True) + "\n")
    return bin_path, json_path


def read_array(stem) -> tuple[np.ndarray, dict]:
    stem = Path(stem)
    side = json.loads(stem.with_suffix(".json").read_text())
    raw = np.frombuffer(stem.with_suffix(".bin").read_bytes(), dtype=_DTYPE)
    shape = tuple(side["shape"])
    if raw.size != int(np.prod(shape)):
        raise ValueError(f"{stem}.bin holds {raw.size} values, sidecar declares shape {shape}")
    return raw.reshape(shape).copy(), side.get("meta", {})


def write_sinogram_bin(stem, g: SinogramGrid, k: int, meta: dict | None = None):
    m = {"kind": "sinogram", "k": int(k), "p_max": g.p_max,
         "theta_count": g.theta_count, "p_count": g.p_count}
    m.update(meta or {})
    return write_array(stem, g.values, m)


def read_sinogram_bin(stem) -> tuple[SinogramGrid, dict]:
    values, meta = read_array(stem)
    if meta.get("kind") != "sinogram":
        raise ValueError(f"{stem} is not a sinogram file")
    return SinogramGrid(values, float(meta["p_max"])), meta


def write_field_bin(stem, fg: FieldGrid, component, meta: dict | None = None):
    m = {"kind": "field", "component": list(component), "extent": fg.extent,
         "grid": fg.size, "diagnostics": fg.diagnostics}
    m.update(meta or {})
    return write_array(stem, fg.values, m)


def read_field_bin(stem) -> tuple[FieldGrid, dict]:
    values, meta = read_array(stem)
    if meta.get("kind") != "field":
        raise ValueError(f"{stem} is not a reconstruction file")
    return FieldGrid(values, float(meta["extent"]), meta.get("diagnostics", {})), meta


def write_rows_csv(path, rows: Sequence[dict], columns: Sequence[str]) -> Path:
    """Write dictionaries as CSV rows in a fixed column order."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) if isinstance(r[c], float) else r[c] for c in columns])
    return path


def write_json(path, data) -> Path:
    path = Path(path)
    path.write_text(json.dumps(data, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")
