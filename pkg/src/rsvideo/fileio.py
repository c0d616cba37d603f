"""Binary and PNG file formats.

``PSF0``: 16-byte header (magic, u32 rows, u32 cols, u32 channels) followed by
little-endian float32 data laid out as ``(channels, rows, cols)``.

``VOL0``: 20-byte header (magic, u32 dims[3], u32 channels) followed by
little-endian float32 data laid out as ``(channels, d0, d1, d2)``. A 2D
measurement is stored with ``d2 = 1``.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np
import png

from .optics import Normalization, Psf

__all__ = [
    "FormatError",
    "write_psf",
    "read_psf",
    "write_volume",
    "read_volume",
    "read_png",
    "write_png",
    "write_csv",
]

_PSF_HEADER = struct.Struct("<4sIII")
_VOL_HEADER = struct.Struct("<4sIIII")
_F32 = np.dtype("<f4")


class FormatError(OSError):
    """A file exists but does not hold the expected format."""


def _read_payload(path, header: struct.Struct, magic: bytes):
    raw = Path(path).read_bytes()
    if len(raw) < header.size or raw[:4] != magic:
        raise FormatError(f"{path}: not a {magic.decode()} file")
    fields = header.unpack_from(raw)
    data = np.frombuffer(raw, dtype=_F32, offset=header.size)
    return fields[1:], data


def write_psf(path, psf: Psf) -> None:
    c, p, q = psf.planes.shape
    with open(path, "wb") as fh:
        fh.write(_PSF_HEADER.pack(b"PSF0", p, q, c))
        fh.write(psf.planes.astype(_F32).tobytes())


def read_psf(path, normalization=Normalization.RAW) -> Psf:
    (p, q, c), data = _read_payload(path, _PSF_HEADER, b"PSF0")
    if data.size != p * q * c:
        raise FormatError(f"{path}: expected {p * q * c} values, found {data.size}")
    return Psf(data.reshape(c, p, q).astype(np.float64), normalization=normalization)


def write_volume(path, values) -> None:
    """Write one array or a list of same-shape per-channel arrays (2D or 3D)."""
    chans = [np.asarray(values)] if not isinstance(values, (list, tuple)) else \
        [np.asarray(v) for v in values]
    chans = [a[:, :, None] if a.ndim == 2 else a for a in chans]
    shape = chans[0].shape
    if any(a.shape != shape for a in chans) or len(shape) != 3:
        raise ValueError("channels must share one 2D or 3D shape")
    with open(path, "wb") as fh:
        fh.write(_VOL_HEADER.pack(b"VOL0", *shape, len(chans)))
        for a in chans:
            fh.write(a.astype(_F32).tobytes())


def read_volume(path) -> list[np.ndarray]:
    """Per-channel float64 arrays of shape ``(d0, d1, d2)``."""
    (d0, d1, d2, c), data = _read_payload(path, _VOL_HEADER, b"VOL0")
    n = d0 * d1 * d2
    if data.size != n * c:
        raise FormatError(f"{path}: expected {n * c} values, found {data.size}")
    arr = data.reshape(c, d0, d1, d2).astype(np.float64)
    return [arr[i] for i in range(c)]


def read_png(path) -> tuple[np.ndarray, int]:
    """Load a grayscale or RGB PNG as ``(rows, cols)`` or ``(rows, cols, 3)`` raw counts.

    Alpha channels are dropped. Returns the array and its bit depth.
    """
    try:
        w, h, rows, info = png.Reader(filename=str(path)).asDirect()
        planes = info["planes"]
        arr = np.vstack([np.asarray(r, dtype=np.uint32) for r in rows])
    except png.Error as exc:
        raise FormatError(f"{path}: {exc}") from exc
    arr = arr.reshape(h, w, planes).astype(np.float64)
    if info.get("alpha"):
        arr = arr[:, :, :-1]
    if arr.shape[2] == 1:
        arr = arr[:, :, 0]
    return arr, int(info["bitdepth"])


def write_png(path, image, bitdepth: int = 16, normalize: bool = True) -> None:
    """Write a 2D (grayscale) or ``(rows, cols, 3)`` image.

    With ``normalize`` the image is scaled so its maximum maps to full scale
    (negative values clip to 0); otherwise values are taken as integer counts.
    """
    a = np.asarray(image, dtype=np.float64)
    if a.ndim not in (2, 3) or (a.ndim == 3 and a.shape[2] != 3):
        raise ValueError("image must be (rows, cols) or (rows, cols, 3)")
    top = (1 << bitdepth) - 1
    if normalize:
        a = np.clip(a, 0.0, None)
        peak = a.max()
        a = a * (top / peak) if peak > 0 else a
    counts = np.clip(np.rint(a), 0, top).astype(np.uint16 if bitdepth > 8 else np.uint8)
    h, w = counts.shape[:2]
    writer = png.Writer(w, h, greyscale=counts.ndim == 2, bitdepth=bitdepth)
    with open(path, "wb") as fh:
        writer.write(fh, counts.reshape(h, -1).tolist())


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x
                        for x in row])
