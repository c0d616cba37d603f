"""Diagnostics for reconstructed videos: x-t projections, temporal spectra,
LED contrast, row-modulation period and reconstruction quality."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .forward import VideoVolume

logger = logging.getLogger(__name__)

__all__ = [
    "SpectrumResult",
    "ReconMetrics",
    "xt_projection",
    "temporal_spectrum",
    "temporal_contrast",
    "led_traces",
    "recon_metrics",
    "temporal_bin",
    "row_modulation_period",
]


@dataclass
class SpectrumResult:
    """One-sided temporal power spectrum; ``power.sum()`` equals the trace variance."""

    frequencies_hz: np.ndarray
    power: np.ndarray
    peak_hz: float | None

    @property
    def bin_width_hz(self) -> float:
        return float(self.frequencies_hz[1] - self.frequencies_hz[0])


class ReconMetrics(NamedTuple):
    psnr_db: float
    support_precision: float
    support_recall: float


def _vals(v) -> np.ndarray:
    return v.values if isinstance(v, VideoVolume) else np.asarray(v, dtype=np.float64)


def xt_projection(v, reducer: str = "max") -> np.ndarray:
    """Collapse the rows (y) of a volume, giving an ``(cols, frames)`` image."""
    a = _vals(v)
    if reducer == "max":
        return a.max(axis=0)
    if reducer == "sum":
        return a.sum(axis=0)
    raise ValueError(f"unknown reducer {reducer!r}")


def temporal_spectrum(v: VideoVolume, voxel_mask=None, window: str | None = None) -> SpectrumResult:
    """Mean-subtracted DFT power along t, averaged over the selected voxels.

    Parameters
    ----------
    v : VideoVolume
        Its ``frame_spacing_us`` sets the frequency axis.
    voxel_mask : array_like of bool, optional
        ``(rows, cols)`` selection of spatial positions; all by default.
    window : {None, "hann"}
        Taper applied before the transform. Rectangular by default, which keeps
        the harmonic comb of square waves sharp.
    """
    a = v.values
    k = a.shape[2]
    if k < 4:
        raise ValueError("temporal_spectrum needs at least 4 frames")
    traces = a.reshape(-1, k) if voxel_mask is None else a[np.asarray(voxel_mask, dtype=bool)]
    if traces.shape[0] == 0:
        raise ValueError("voxel_mask selects no voxels")
    x = traces - traces.mean(axis=1, keepdims=True)
    if window == "hann":
        w = np.hanning(k)
        x = x * (w / np.sqrt(np.mean(w ** 2)))
    elif window is not None:
        raise ValueError(f"unknown window {window!r}")
    spec = np.fft.rfft(x, axis=1)
    power = (np.abs(spec) ** 2) / k ** 2
    # fold negative frequencies; DC and (even k) Nyquist appear once
    power[:, 1:(k + 1) // 2] *= 2.0
    power = power.mean(axis=0)
    freqs = np.fft.rfftfreq(k, d=v.frame_spacing_us * 1e-6)
    scale = np.abs(traces).max()
    peak = None
    if power.size > 1 and power[1:].max() > (1e-12 * scale) ** 2:
        peak = float(freqs[1 + int(np.argmax(power[1:]))])
    return SpectrumResult(freqs, power, peak)


def led_traces(v, positions, radius: int = 0) -> np.ndarray:
    """Time traces at the given ``(row, col)`` positions, summed over a ``(2r+1)^2`` box."""
    a = _vals(v)
    out = []
    for r, c in positions:
        r, c = int(round(r)), int(round(c))
        box = a[max(r - radius, 0):r + radius + 1, max(c - radius, 0):c + radius + 1]
        out.append(box.sum(axis=(0, 1)))
    return np.array(out)


def temporal_contrast(recon: VideoVolume, led_positions, period_us: float,
                      frames: slice | None = None, radius: int = 0) -> float:
    """Michelson contrast ``(max - min) / (max + min)`` of LED time traces.

    Each trace is cut into whole pulse periods (within ``frames`` when given);
    the contrast is averaged over periods, then over LEDs.
    """
    traces = led_traces(recon, led_positions, radius)
    if frames is not None:
        traces = traces[:, frames]
    if np.any(np.abs(traces).sum(axis=1) == 0):
        raise ValueError("an LED trace carries no signal")
    n = traces.shape[1]
    p = period_us / recon.frame_spacing_us
    edges = [0, n]
    if math.isfinite(p) and p <= n:
        count = int(n // p)
        edges = [int(round(j * p)) for j in range(count + 1)]
    vals = []
    for tr in traces:
        per = []
        for lo, hi in zip(edges[:-1], edges[1:]):
            seg = tr[lo:hi]
            top, bot = seg.max(), seg.min()
            per.append(0.0 if top + bot == 0 else (top - bot) / (top + bot))
        vals.append(np.mean(per))
    return float(np.clip(np.mean(vals), 0.0, 1.0))


def recon_metrics(recon, truth, threshold: float = 0.1) -> ReconMetrics:
    """PSNR (peak = truth max) and support precision/recall.

    Supports are the voxels strictly above ``threshold`` times each volume's
    own maximum.
    """
    x, t = _vals(recon), _vals(truth)
    if x.shape != t.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {t.shape}")
    peak = t.max()
    if peak <= 0:
        raise ValueError("truth volume has no positive values")
    mse = float(np.mean((x - t) ** 2))
    psnr = math.inf if mse == 0 else 20.0 * math.log10(peak / math.sqrt(mse))
    ts = t > threshold * peak
    xmax = x.max()
    xs = x > threshold * xmax if xmax > 0 else np.zeros_like(ts)
    hit = np.count_nonzero(ts & xs)
    precision = hit / np.count_nonzero(xs) if xs.any() else 0.0
    recall = hit / np.count_nonzero(ts)
    return ReconMetrics(psnr, float(precision), float(recall))


def temporal_bin(v: VideoVolume, factor: int) -> VideoVolume:
    """Average consecutive groups of ``factor`` frames; a partial trailing group is dropped."""
    factor = int(factor)
    if factor < 1:
        raise ValueError("factor must be >= 1")
    a = v.values
    k = (a.shape[2] // factor) * factor
    if k == 0:
        raise ValueError("fewer frames than the binning factor")
    if k < a.shape[2]:
        logger.warning("temporal_bin: dropping %d trailing frames", a.shape[2] - k)
    binned = a[:, :, :k].reshape(a.shape[0], a.shape[1], k // factor, factor).mean(axis=3)
    return VideoVolume(binned, v.lateral_pitch_um, v.frame_spacing_us * factor, v.channel_id)


def row_modulation_period(image, min_period: float = 2.0) -> tuple[float, np.ndarray]:
    """Dominant y-direction modulation period (in rows) of a measurement.

    The row profile is the per-row mean; the period is ``rows / f`` at the
    strongest non-DC DFT bin ``f``. Also returns the one-sided power.
    """
    a = np.asarray(image, dtype=np.float64)
    profile = a.mean(axis=1)
    m = profile.size
    power = np.abs(np.fft.rfft(profile - profile.mean())) ** 2
    bins = np.arange(power.size)
    valid = (bins >= 1) & (bins <= m / min_period)
    if not valid.any() or power[valid].max() == 0:
        return math.inf, power
    f = int(bins[valid][np.argmax(power[valid])])
    return m / f, power
