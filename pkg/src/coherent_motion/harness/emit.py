"""Writers for run records: per-frame CSV, JSON field snapshots, PGM heatmaps."""
from __future__ import annotations

import json
import math
import os

import numpy as np

from ..estimation import sharpness

CSV_HEADER = ("frame", "sharpness", "confidence", "peak_x", "peak_y", "mean_vx", "mean_vy")


class EmitError(OSError):
    pass


def _write(path, data, mode="w"):
    try:
        with open(path, mode) as fh:
            fh.write(data)
    except OSError as exc:
        raise EmitError(f"cannot write {path}: {exc.strerror or exc}") from exc


def metrics_csv(record) -> str:
    """Floats are written with repr so the text round-trips exactly."""
    lines = [",".join(CSV_HEADER)]
    for m in record.frames:
        vals = (m.sharpness, m.confidence, m.peak_x, m.peak_y, m.mean_vx, m.mean_vy)
        lines.append(",".join([str(m.frame)] + [repr(float(v)) for v in vals]))
    return "\n".join(lines) + "\n"


def snapshot_json(alpha: np.ndarray) -> str:
    return json.dumps([[float(v) for v in row] for row in alpha])


def sharpness_pgm(alpha: np.ndarray, width: int, height: int) -> bytes:
    """Binary 8-bit PGM, one pixel per node, 0 for uniform and 255 for one-hot.

    Image row 0 is lattice row 0.
    """
    s = sharpness(alpha) / math.log(alpha.shape[1]) if alpha.shape[1] > 1 else np.zeros(len(alpha))
    pix = np.clip(np.rint(255 * np.asarray(s)), 0, 255).astype(np.uint8)
    return f"P5\n{width} {height}\n255\n".encode() + pix.reshape(height, width).tobytes()


def emit(record, out_dir, width: int, height: int, stem: str = "run") -> list[str]:
    """Write ``<stem>_metrics.csv`` plus one JSON and one PGM per snapshot."""
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise EmitError(f"cannot create output directory {out_dir}: {exc.strerror or exc}") from exc
    paths = []
    p = os.path.join(out_dir, f"{stem}_metrics.csv")
    _write(p, metrics_csv(record))
    paths.append(p)
    for k in sorted(record.snapshots):
        a = record.snapshots[k]
        p = os.path.join(out_dir, f"{stem}_frame{k:03d}.json")
        _write(p, snapshot_json(a))
        paths.append(p)
        p = os.path.join(out_dir, f"{stem}_frame{k:03d}.pgm")
        _write(p, sharpness_pgm(a, width, height), "wb")
        paths.append(p)
    return paths


def read_pgm(data: bytes) -> np.ndarray:
    """Parse the binary PGM written by :func:`sharpness_pgm`."""
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM")
    w, h = (int(t) for t in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w)
