"""Synthetic space-time scenes and measurement noise.

All generators are deterministic; the random ones take an explicit seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forward import Measurement, VideoVolume

__all__ = [
    "LedArraySpec",
    "NoiseSpec",
    "square_wave",
    "led_positions",
    "make_led_scene",
    "make_moving_disk_scene",
    "make_flashing_points_scene",
    "add_noise",
    "predicted_envelope",
    "discrete_envelope",
]


@dataclass(frozen=True)
class LedArraySpec:
    """A horizontal line of point-source LEDs pulsed in unison by a square wave.

    ``pulse_period_us`` of ``inf`` keeps the LEDs always on. ``row`` and
    ``first_col`` default to a line centered in the frame.
    """

    num_leds: int = 4
    spacing_px: float = 8.0
    pulse_period_us: float = 1980.0
    duty_cycle: float = 0.5
    amplitude: float = 1.0
    row: int | None = None
    first_col: float | None = None
    spot_sigma_px: float = 0.0

    def __post_init__(self):
        if self.num_leds < 1:
            raise ValueError("num_leds must be >= 1")
        if not self.pulse_period_us > 0:
            raise ValueError("pulse_period_us must be > 0")
        if self.spacing_px < 1:
            raise ValueError("spacing_px must be >= 1")
        if not 0 < self.duty_cycle <= 1:
            raise ValueError("duty_cycle must be in (0, 1]")


@dataclass(frozen=True)
class NoiseSpec:
    gaussian_sigma: float = 0.0
    poisson_scale: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.gaussian_sigma < 0 or self.poisson_scale < 0:
            raise ValueError("noise parameters must be nonnegative")


def square_wave(t_us, period_us: float, duty_cycle: float = 0.5, amplitude: float = 1.0):
    """On for the first ``duty_cycle`` fraction of every period, starting on at ``t = 0``."""
    t = np.asarray(t_us, dtype=np.float64)
    if np.isinf(period_us):
        return np.full(t.shape, float(amplitude))
    phase = np.mod(t, period_us)
    return np.where(phase < duty_cycle * period_us, float(amplitude), 0.0)


def led_positions(spec: LedArraySpec, dims) -> list[tuple[float, float]]:
    """``(row, col)`` of every LED on a ``(rows, cols)`` grid."""
    rows, cols = int(dims[0]), int(dims[1])
    row = rows // 2 if spec.row is None else spec.row
    span = (spec.num_leds - 1) * spec.spacing_px
    first = (cols - 1 - span) / 2 if spec.first_col is None else spec.first_col
    pos = [(float(row), float(first + n * spec.spacing_px)) for n in range(spec.num_leds)]
    for r, c in pos:
        if not (0 <= r <= rows - 1 and 0 <= c <= cols - 1):
            raise ValueError(f"LED at {(r, c)} falls outside a {rows}x{cols} frame")
    return pos


def _spot(dims, center, sigma):
    rows, cols = dims
    if sigma <= 0:
        img = np.zeros((rows, cols))
        img[int(round(center[0])), int(round(center[1]))] = 1.0
        return img
    yy, xx = np.mgrid[0:rows, 0:cols]
    img = np.exp(-((yy - center[0]) ** 2 + (xx - center[1]) ** 2) / (2 * sigma ** 2))
    return img / img.sum()


def make_led_scene(spec: LedArraySpec, dims, frame_spacing_us: float,
                   lateral_pitch_um: float = 1.0) -> VideoVolume:
    """Separable LED scene ``v = u(x, y) * f(t)`` sampled at ``t = k * frame_spacing_us``."""
    rows, cols, k = (int(d) for d in dims)
    u = np.zeros((rows, cols))
    for pos in led_positions(spec, (rows, cols)):
        u += _spot((rows, cols), pos, spec.spot_sigma_px)
    f = square_wave(np.arange(k) * frame_spacing_us, spec.pulse_period_us,
                    spec.duty_cycle, spec.amplitude)
    return VideoVolume(u[:, :, None] * f[None, None, :], lateral_pitch_um, frame_spacing_us)


def make_moving_disk_scene(radius_px: float, velocity_px_per_frame, dims, start=None,
                           amplitude: float = 1.0, frame_spacing_us: float = 1.0) -> VideoVolume:
    """Binary disk translating at constant ``(vx, vy)`` pixels per frame.

    ``start`` is the ``(row, col)`` center at frame 0 (frame center by default).
    """
    rows, cols, k = (int(d) for d in dims)
    vx, vy = (float(v) for v in velocity_px_per_frame)
    cy0, cx0 = ((rows - 1) / 2, (cols - 1) / 2) if start is None else start
    t = np.arange(k)
    cy, cx = cy0 + vy * t, cx0 + vx * t
    if (cy.min() - radius_px < 0 or cy.max() + radius_px > rows - 1
            or cx.min() - radius_px < 0 or cx.max() + radius_px > cols - 1):
        raise ValueError("disk trajectory leaves the frame")
    yy, xx = np.mgrid[0:rows, 0:cols]
    vol = np.empty((rows, cols, k))
    for n in range(k):
        vol[:, :, n] = ((yy - cy[n]) ** 2 + (xx - cx[n]) ** 2 <= radius_px ** 2) * amplitude
    return VideoVolume(vol, 1.0, frame_spacing_us)


def make_flashing_points_scene(num_points: int, dims, period_frames: int = 4,
                               duty_cycle: float = 0.5, seed: int = 0, margin: int = 4,
                               min_separation: float = 6.0, amplitude: float = 1.0,
                               frame_spacing_us: float = 1.0) -> VideoVolume:
    """Sparse scene of point sources at random pixels flashing in unison."""
    rows, cols, k = (int(d) for d in dims)
    rng = np.random.default_rng(seed)
    pts: list[tuple[int, int]] = []
    for _ in range(10000):
        if len(pts) == num_points:
            break
        p = (int(rng.integers(margin, rows - margin)), int(rng.integers(margin, cols - margin)))
        if all(np.hypot(p[0] - q[0], p[1] - q[1]) >= min_separation for q in pts):
            pts.append(p)
    if len(pts) < num_points:
        raise ValueError("could not place the requested points")
    f = square_wave(np.arange(k), period_frames, duty_cycle, amplitude)
    vol = np.zeros((rows, cols, k))
    for r, c in pts:
        vol[r, c, :] = f
    return VideoVolume(vol, 1.0, frame_spacing_us)


def add_noise(b: Measurement, spec: NoiseSpec) -> Measurement:
    """Poisson shot noise at ``poisson_scale`` photons per unit, then Gaussian read noise."""
    rng = np.random.default_rng(spec.seed)
    x = b.values
    if spec.poisson_scale > 0:
        # FFT convolution leaves round-off negatives in nonnegative data
        tol = 1e-12 * float(np.abs(x).max()) if x.size else 0.0
        if np.any(x < -tol):
            raise ValueError("Poisson noise requires a nonnegative measurement")
        x = rng.poisson(np.clip(x, 0.0, None) * spec.poisson_scale) / spec.poisson_scale
    else:
        x = x.copy()
    if spec.gaussian_sigma > 0:
        x = x + rng.normal(0.0, spec.gaussian_sigma, size=x.shape)
    return Measurement(x, b.timing, b.channel_id)


def predicted_envelope(f, exposure_us: float, line_us: float, num_samples: int,
                       oversample: int = 1) -> np.ndarray:
    """Waveform low-pass filtered by the exposure rect, sampled at row centers.

    Returns ``E[k] = integral of f over [k T_l, k T_l + T_e)``, i.e. the rect
    convolution evaluated at ``t_c(k) = T_e / 2 + k T_l``. The integral is a
    left Riemann sum with ``oversample`` points per line time, so
    ``oversample=1`` reproduces the discrete forward model exactly (times
    ``T_l``) and large values approach the continuous integral.
    """
    n_l = exposure_us / line_us
    if abs(n_l - round(n_l)) > 1e-9 * max(1.0, n_l):
        raise ValueError("exposure must be an integer multiple of the line time")
    n = int(round(n_l)) * int(oversample)
    h = line_us / oversample
    t = np.arange(num_samples)[:, None] * line_us + np.arange(n)[None, :] * h
    return np.asarray(f(t), dtype=np.float64).reshape(t.shape).sum(axis=1) * h


def discrete_envelope(mask, frame_values) -> np.ndarray:
    """Per-row sum of a temporal waveform over each row's active frames."""
    w = np.asarray(frame_values, dtype=np.float64)
    return mask.as_float().T @ w
