"""Binary field snapshots.

Layout (little-endian): ``b"GPE2"``, u32 nx, u32 ny, f64 dx, f64 dy, f64 t,
then nx*ny interleaved (re, im) f64 pairs with y varying fastest.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"GPE2"
_HEADER = struct.Struct("<4sIIddd")


class SnapshotFormatError(ValueError):
    pass


def write_snapshot(path: str | Path, psi: np.ndarray, dx: float, dy: float, t: float) -> None:
    nx, ny = psi.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, nx, ny, dx, dy, t))
        fh.write(np.ascontiguousarray(psi, dtype="<c16").tobytes())


def read_snapshot(path: str | Path) -> tuple[np.ndarray, float, float, float]:
    """Return ``(psi, dx, dy, t)`` with ``psi.shape == (nx, ny)``."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise SnapshotFormatError("file shorter than header")
    magic, nx, ny, dx, dy, t = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise SnapshotFormatError(f"bad magic {magic!r}")
    body = raw[_HEADER.size:]
    if len(body) != 16 * nx * ny:
        raise SnapshotFormatError(f"expected {16 * nx * ny} data bytes, got {len(body)}")
    psi = np.frombuffer(body, dtype="<c16").reshape(nx, ny).astype(np.complex128)
    return psi, dx, dy, t
