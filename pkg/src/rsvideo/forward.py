"""The rolling-shutter lensless forward model and its adjoint.

``b[i, j] = sum_k S_k[i] * (h * v[:, :, k])[i, j]``: each frame is convolved with
the PSF and cropped to the sensor, then its rows are gated by the shutter mask.
Volumes are stored as ``(rows, cols, frames)`` arrays.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .optics import Convolver, Psf
from .shutter import ShutterMask, TimingConfig

logger = logging.getLogger(__name__)

__all__ = [
    "VideoVolume",
    "Measurement",
    "ForwardOperator",
    "NormEstimate",
    "forward_apply",
    "adjoint_apply",
    "power_iteration",
    "operator_norm_sq",
]


@dataclass
class VideoVolume:
    values: np.ndarray
    lateral_pitch_um: float = 1.0
    frame_spacing_us: float = 1.0
    channel_id: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3:
            raise ValueError("volume values must be (rows, cols, frames)")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape

    @property
    def num_frames(self) -> int:
        return self.values.shape[2]

    def frame_times_us(self) -> np.ndarray:
        return np.arange(self.num_frames) * self.frame_spacing_us


@dataclass
class Measurement:
    values: np.ndarray
    timing: TimingConfig | None = None
    channel_id: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError("measurement values must be 2D")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("measurement contains non-finite values")
        if self.timing is not None and self.timing.num_rows != self.values.shape[0]:
            raise ValueError(
                f"measurement has {self.values.shape[0]} rows but timing declares "
                f"{self.timing.num_rows}"
            )

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


class ForwardOperator:
    """Matrix-free ``A`` for one color channel.

    Parameters
    ----------
    psf_plane : array_like
        2D PSF for this channel.
    mask : ShutterMask
        Shutter function; its row count is the sensor height.
    scene_shape : tuple of int
        Lateral scene grid ``(rows, cols)``.
    sensor_cols : int, optional
        Sensor width; defaults to the scene width.
    """

    def __init__(self, psf_plane, mask: ShutterMask, scene_shape,
                 sensor_cols: int | None = None, workers: int | None = None):
        scene_shape = tuple(int(s) for s in scene_shape[:2])
        sensor_shape = (mask.num_rows, scene_shape[1] if sensor_cols is None else int(sensor_cols))
        self.mask = mask
        self.conv = Convolver(psf_plane, scene_shape, sensor_shape, workers)
        # (M, 1, K) row gates, broadcast over columns
        self._gates = mask.as_float().T[:, None, :]

    @property
    def in_shape(self) -> tuple[int, int, int]:
        return self.conv.scene_shape + (self.mask.num_frames,)

    @property
    def out_shape(self) -> tuple[int, int]:
        return self.conv.sensor_shape

    def forward(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        if v.shape != self.in_shape:
            raise ValueError(f"volume shape {v.shape} != operator input {self.in_shape}")
        return (self.conv.forward(v) * self._gates).sum(axis=2)

    def adjoint(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=np.float64)
        if b.shape != self.out_shape:
            raise ValueError(f"measurement shape {b.shape} != operator output {self.out_shape}")
        return self.conv.adjoint(b[:, :, None] * self._gates)

    def normal(self, v: np.ndarray) -> np.ndarray:
        return self.adjoint(self.forward(v))


def _operator_for(psf: Psf, mask: ShutterMask, scene_shape, channel: int,
                  sensor_cols=None, workers=None) -> ForwardOperator:
    return ForwardOperator(psf.plane(channel), mask, scene_shape, sensor_cols, workers)


def forward_apply(v: VideoVolume, psf: Psf, mask: ShutterMask, *,
                  sensor_cols: int | None = None, timing: TimingConfig | None = None,
                  workers: int | None = None) -> Measurement:
    """Simulate the single-exposure measurement of ``v``."""
    if v.num_frames != mask.num_frames:
        raise ValueError(f"volume has {v.num_frames} frames, mask has {mask.num_frames}")
    op = _operator_for(psf, mask, v.shape, v.channel_id, sensor_cols, workers)
    return Measurement(op.forward(v.values), timing, v.channel_id)


def adjoint_apply(b: Measurement, psf: Psf, mask: ShutterMask, scene_shape=None, *,
                  lateral_pitch_um: float = 1.0, frame_spacing_us: float | None = None,
                  workers: int | None = None) -> VideoVolume:
    """Back-project a measurement into a volume with the exact adjoint of ``A``."""
    if b.shape[0] != mask.num_rows:
        raise ValueError(f"measurement has {b.shape[0]} rows, mask has {mask.num_rows}")
    scene_shape = b.shape if scene_shape is None else scene_shape
    op = _operator_for(psf, mask, scene_shape, b.channel_id, b.shape[1], workers)
    if frame_spacing_us is None:
        frame_spacing_us = b.timing.line_time_us if b.timing is not None else 1.0
    return VideoVolume(op.adjoint(b.values), lateral_pitch_um, frame_spacing_us, b.channel_id)


class NormEstimate(NamedTuple):
    value: float
    iterations: int
    converged: bool


def power_iteration(op, tol: float = 1e-6, max_iter: int = 200, seed: int = 0) -> NormEstimate:
    """Largest eigenvalue of ``A^H A`` (that is ``||A||^2``) by power iteration."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(op.in_shape)
    x /= np.linalg.norm(x)
    lam = 0.0
    for it in range(1, max_iter + 1):
        y = op.normal(x)
        lam_new = float(np.vdot(x, y))
        ny = np.linalg.norm(y)
        if ny == 0:
            return NormEstimate(0.0, it, True)
        x = y / ny
        if lam_new > 0 and abs(lam_new - lam) < tol * lam_new:
            return NormEstimate(lam_new, it, True)
        lam = lam_new
    logger.warning("power iteration did not reach tol=%g in %d iterations", tol, max_iter)
    return NormEstimate(lam, max_iter, False)


def operator_norm_sq(psf: Psf, mask: ShutterMask, dims, tol: float = 1e-6,
                     max_iter: int = 200, *, channel: int = 0, seed: int = 0,
                     sensor_cols: int | None = None, workers: int | None = None) -> NormEstimate:
    """Estimate ``||A||^2`` for the operator defined by ``psf``, ``mask`` and scene ``dims``."""
    op = _operator_for(psf, mask, dims, channel, sensor_cols, workers)
    return power_iteration(op, tol, max_iter, seed)
