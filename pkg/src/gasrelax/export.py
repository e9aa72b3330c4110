"""CSV writing with a fixed, platform-independent number format."""

from __future__ import annotations

import csv
import hashlib
from pathlib import Path

import numpy as np


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, header, rows) -> Path:
    """Write ``rows`` under ``header``; floats use the shortest round-trip repr."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])
    return path


def read_csv(path):
    with Path(path).open(newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        return header, [row for row in r]


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def chain_rows(paths: np.ndarray):
    """``(trajectory_id, n, velocity)`` rows for an array of shape ``(trajectories, n + 1)``."""
    for i, path in enumerate(paths):
        for n, v in enumerate(path):
            yield i, n, v


def time_rows(trajectories):
    """``(trajectory_id, jump_index, jump_time, velocity)``; index 0 is the start at t = 0."""
    for i, tr in enumerate(trajectories):
        yield i, 0, 0.0, tr.v0
        for k, (u, v) in enumerate(zip(tr.jump_times, tr.velocities), start=1):
            yield i, k, u, v
