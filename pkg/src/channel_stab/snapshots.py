"""Versioned binary snapshot container shared by the linear and nonlinear solvers.

Layout (little-endian)::

    header   magic "CSTB" | version u32 | n u32 | nu f64 | k i32 | steps u32 | modes u32
    record   time f64 | modes * n complex values as (re, im) f64 pairs

For a single linear mode ``k`` is the wavenumber and ``modes`` is 1. Nonlinear
runs store modes 0..K and put K in the ``k`` field.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"CSTB"
VERSION = 1
HEADER = struct.Struct("<4sIIdiII")


class SnapshotFormatError(ValueError):
    pass


@dataclass(frozen=True)
class SnapshotFile:
    n: int
    nu: float
    k: int
    times: np.ndarray
    states: np.ndarray  # (steps, modes, n) complex


def write_snapshots(path: Path | str, n: int, nu: float, k: int, times, states) -> Path:
    path = Path(path)
    times = np.asarray(times, dtype="<f8")
    states = np.asarray(states, dtype=complex)
    if states.ndim == 2:
        states = states[:, None, :]
    if states.shape[0] != times.shape[0] or states.shape[2] != n:
        raise ValueError(f"states of shape {states.shape} do not match {times.shape[0]} times and n={n}")
    steps, modes = states.shape[:2]
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, VERSION, n, float(nu), int(k), steps, modes))
        for t, s in zip(times, states):
            fh.write(np.float64(t).astype("<f8").tobytes())
            fh.write(np.ascontiguousarray(s, dtype="<c16").tobytes())
    return path


def read_snapshots(path: Path | str) -> SnapshotFile:
    data = Path(path).read_bytes()
    if len(data) < HEADER.size:
        raise SnapshotFormatError("file shorter than the snapshot header")
    magic, version, n, nu, k, steps, modes = HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise SnapshotFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise SnapshotFormatError(f"unsupported snapshot version {version}")
    rec = 8 + 16 * modes * n
    if len(data) != HEADER.size + steps * rec:
        raise SnapshotFormatError("truncated or oversized snapshot payload")
    times = np.empty(steps)
    states = np.empty((steps, modes, n), dtype=complex)
    off = HEADER.size
    for i in range(steps):
        times[i] = np.frombuffer(data, "<f8", 1, off)[0]
        states[i] = np.frombuffer(data, "<c16", modes * n, off + 8).reshape(modes, n)
        off += rec
    return SnapshotFile(n=n, nu=nu, k=k, times=times, states=states)
