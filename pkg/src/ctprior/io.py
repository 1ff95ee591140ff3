"""Grid files, image export and trace CSVs.

Grid format: an ASCII header line ``P-GRID <width> <height> <extent>``
followed by ``width * height`` little-endian float64 values in row-major
order.
"""

from __future__ import annotations

import csv
import math
import os
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from PIL import Image as PILImage

__all__ = [
    "GridFormatError",
    "write_grid",
    "read_grid",
    "write_png",
    "write_pgm",
    "write_csv",
    "read_csv",
]

_MAGIC = b"P-GRID"


class GridFormatError(ValueError):
    pass


def write_grid(path: str | os.PathLike, values: np.ndarray, extent: float = 1.0) -> None:
    values = np.asarray(values, dtype="<f8")
    if values.ndim != 2:
        raise ValueError("grid payload must be 2-D")
    if not np.all(np.isfinite(values)):
        raise ValueError("grid payload must be finite")
    h, w = values.shape
    header = b"%s %d %d %s\n" % (_MAGIC, w, h, repr(float(extent)).encode())
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(values).tobytes())


def read_grid(path: str | os.PathLike) -> tuple[np.ndarray, float]:
    """Return ``(values, extent)``."""
    with open(path, "rb") as fh:
        header = fh.readline()
        payload = fh.read()
    parts = header.split()
    if len(parts) != 4 or parts[0] != _MAGIC:
        raise GridFormatError(f"{path}: bad grid header {header[:40]!r}")
    try:
        w, h = int(parts[1]), int(parts[2])
        extent = float(parts[3])
    except ValueError:
        raise GridFormatError(f"{path}: unparsable grid header") from None
    if w < 1 or h < 1:
        raise GridFormatError(f"{path}: non-positive dimensions {w}x{h}")
    if not (math.isfinite(extent) and extent > 0):
        raise GridFormatError(f"{path}: invalid extent {extent}")
    if len(payload) != 8 * w * h:
        raise GridFormatError(f"{path}: payload has {len(payload)} bytes, expected {8 * w * h}")
    values = np.frombuffer(payload, dtype="<f8").reshape(h, w).astype(float)
    return values, extent


def _quantise(values, bits, vmin, vmax):
    values = np.asarray(values, dtype=float)
    lo = values.min() if vmin is None else vmin
    hi = values.max() if vmax is None else vmax
    scale = (1 << bits) - 1
    if hi > lo:
        q = np.clip((values - lo) / (hi - lo), 0, 1) * scale
    else:
        q = np.zeros_like(values)
    return np.round(q).astype(np.uint16 if bits == 16 else np.uint8)


def write_png(path, values, bits: int = 8, vmin: float | None = None, vmax: float | None = None) -> None:
    """Greyscale PNG, linearly mapped from ``[vmin, vmax]`` (default: data range)."""
    if bits not in (8, 16):
        raise ValueError("bits must be 8 or 16")
    q = _quantise(values, bits, vmin, vmax)
    # uint8 maps to mode L and uint16 to I;16
    PILImage.fromarray(q).save(path, format="PNG")


def write_pgm(path, values, vmin: float | None = None, vmax: float | None = None) -> None:
    q = _quantise(values, 8, vmin, vmax)
    h, w = q.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(q.tobytes())


def write_csv(path, rows: Iterable[Mapping], fieldnames: Sequence[str]) -> None:
    """Write dict rows; floats use ``repr`` so values re-parse exactly."""
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(fieldnames), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v)
                             for k, v in row.items()})


def read_csv(path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def ensure_dir(path: str | os.PathLike) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
