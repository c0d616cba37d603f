"""PSF handling and the shift-invariant convolution core.

Convolutions are strict zero-padded linear convolutions evaluated with real
FFTs, followed by a centered crop to the sensor size. The crop start along an
axis is ``ceil((full - out) / 2)``, which makes a unit impulse placed at
``(P // 2, Q // 2)`` an identity kernel whenever the sensor matches the scene.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft
from scipy.special import erf

__all__ = [
    "Normalization",
    "Psf",
    "Convolver",
    "convolve2d",
    "adjoint_convolve2d",
    "autocorrelation_slice",
    "peak_to_sidelobe_ratio",
    "simulate_lenslet_psf",
    "bin_image",
]


class Normalization(str, enum.Enum):
    SUM_TO_ONE = "sum_to_one"
    MAX_TO_ONE = "max_to_one"
    RAW = "raw"


def _normalize_planes(planes: np.ndarray, mode: Normalization) -> np.ndarray:
    mode = Normalization(mode)
    if mode is Normalization.RAW:
        return planes
    axis = (-2, -1)
    scale = planes.sum(axis=axis, keepdims=True) if mode is Normalization.SUM_TO_ONE \
        else planes.max(axis=axis, keepdims=True)
    if np.any(scale <= 0):
        raise ValueError("cannot normalize a PSF plane with no positive values")
    return planes / scale


@dataclass(frozen=True)
class Psf:
    """Nonnegative point spread function, one ``(P, Q)`` plane per color channel.

    ``planes`` has shape ``(channels, P, Q)``; a bare 2D array is promoted to a
    single channel.
    """

    planes: np.ndarray
    pixel_pitch_um: float = 1.0
    normalization: Normalization = Normalization.SUM_TO_ONE

    def __post_init__(self):
        p = np.array(self.planes, dtype=np.float64)
        if p.ndim == 2:
            p = p[None]
        if p.ndim != 3:
            raise ValueError("PSF planes must be (P, Q) or (channels, P, Q)")
        if not np.all(np.isfinite(p)):
            raise ValueError("PSF contains non-finite values")
        if np.any(p < 0):
            raise ValueError("PSF values must be nonnegative")
        norm = Normalization(self.normalization)
        p = _normalize_planes(p, norm)
        p.setflags(write=False)
        object.__setattr__(self, "planes", p)
        object.__setattr__(self, "normalization", norm)

    @property
    def num_channels(self) -> int:
        return self.planes.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.planes.shape[1:]

    def plane(self, channel: int = 0) -> np.ndarray:
        if not 0 <= channel < self.num_channels:
            raise ValueError(f"PSF has no channel {channel}")
        return self.planes[channel]

    def scaled(self, factor: float) -> "Psf":
        return Psf(self.planes * factor, self.pixel_pitch_um, Normalization.RAW)

    def binned(self, factor: int, normalization=None) -> "Psf":
        planes = np.stack([bin_image(p, factor) for p in self.planes])
        norm = self.normalization if normalization is None else normalization
        return Psf(planes, self.pixel_pitch_um * factor, norm)


def _crop_start(full: int, out: int) -> int:
    return (full - out + 1) // 2


class Convolver:
    """Cached cropped linear convolution ``scene (R, C) -> sensor (M, N)``.

    Both :meth:`forward` and :meth:`adjoint` accept stacks with extra trailing
    axes (e.g. ``(R, C, K)``); the transform runs over the first two.
    """

    def __init__(self, psf_plane, scene_shape, sensor_shape=None, workers=None):
        h = np.asarray(psf_plane, dtype=np.float64)
        if h.ndim != 2:
            raise ValueError("psf_plane must be 2D")
        self.psf_shape = h.shape
        self.scene_shape = tuple(int(s) for s in scene_shape)
        self.sensor_shape = self.scene_shape if sensor_shape is None \
            else tuple(int(s) for s in sensor_shape)
        full = tuple(s + p - 1 for s, p in zip(self.scene_shape, h.shape))
        for out, f in zip(self.sensor_shape, full):
            if not 1 <= out <= f:
                raise ValueError(
                    f"sensor shape {self.sensor_shape} does not fit inside the "
                    f"full convolution support {full}"
                )
        self.full_shape = full
        self.fft_shape = tuple(sfft.next_fast_len(f, real=True) for f in full)
        self.start = tuple(_crop_start(f, o) for f, o in zip(full, self.sensor_shape))
        self.workers = workers
        self._otf = sfft.rfft2(h, s=self.fft_shape, workers=workers)
        self._otf_conj = np.conj(self._otf)

    def _expand(self, otf, ndim):
        return otf.reshape(otf.shape + (1,) * (ndim - 2))

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[:2] != self.scene_shape:
            raise ValueError(f"scene shape {x.shape[:2]} != {self.scene_shape}")
        spec = sfft.rfft2(x, s=self.fft_shape, axes=(0, 1), workers=self.workers)
        spec *= self._expand(self._otf, x.ndim)
        full = sfft.irfft2(spec, s=self.fft_shape, axes=(0, 1), workers=self.workers)
        (r0, c0), (m, n) = self.start, self.sensor_shape
        return full[r0:r0 + m, c0:c0 + n]

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        if y.shape[:2] != self.sensor_shape:
            raise ValueError(f"sensor shape {y.shape[:2]} != {self.sensor_shape}")
        (r0, c0), (m, n) = self.start, self.sensor_shape
        padded = np.zeros(self.fft_shape + y.shape[2:])
        padded[r0:r0 + m, c0:c0 + n] = y
        spec = sfft.rfft2(padded, axes=(0, 1), workers=self.workers)
        spec *= self._expand(self._otf_conj, y.ndim)
        corr = sfft.irfft2(spec, s=self.fft_shape, axes=(0, 1), workers=self.workers)
        r, c = self.scene_shape
        return corr[:r, :c]


def convolve2d(frame, psf_plane, sensor_shape=None, workers=None) -> np.ndarray:
    """Linear convolution of ``frame`` with ``psf_plane``, center-cropped.

    ``sensor_shape`` defaults to the frame's own shape.
    """
    frame = np.asarray(frame, dtype=np.float64)
    if not np.all(np.isfinite(frame)):
        raise ValueError("frame contains non-finite values")
    return Convolver(psf_plane, frame.shape[:2], sensor_shape, workers).forward(frame)


def adjoint_convolve2d(image, psf_plane, scene_shape=None, workers=None) -> np.ndarray:
    """Exact adjoint of :func:`convolve2d`: zero-pad, correlate with the PSF, crop."""
    image = np.asarray(image, dtype=np.float64)
    scene_shape = image.shape[:2] if scene_shape is None else scene_shape
    return Convolver(psf_plane, scene_shape, image.shape[:2], workers).adjoint(image)


def autocorrelation_slice(psf_plane) -> np.ndarray:
    """Central horizontal slice of the mean-subtracted, peak-normalized autocorrelation.

    Returns an array of length ``2Q - 1`` with the zero lag at index ``Q - 1``.
    """
    h = np.asarray(psf_plane, dtype=np.float64)
    x = h - h.mean()
    if not np.any(x):
        raise ValueError("PSF has zero variance; autocorrelation undefined")
    p, q = x.shape
    s = (2 * p - 1, 2 * q - 1)
    spec = sfft.rfft2(x, s=s)
    ac = sfft.irfft2(spec * np.conj(spec), s=s)
    row = ac[0]
    row = row / row[0]
    return np.fft.fftshift(row)


def peak_to_sidelobe_ratio(slice_: np.ndarray) -> float:
    """Main peak over the largest sidelobe magnitude outside the main lobe.

    The main lobe extends from the central peak to the first local minimum on
    each side.
    """
    a = np.asarray(slice_, dtype=np.float64)
    c = int(np.argmax(a))
    lo = c
    while lo > 0 and a[lo - 1] < a[lo]:
        lo -= 1
    hi = c
    while hi < a.size - 1 and a[hi + 1] < a[hi]:
        hi += 1
    side = np.concatenate([a[:lo], a[hi + 1:]])
    if side.size == 0:
        return np.inf
    worst = np.abs(side).max()
    return np.inf if worst == 0 else float(a[c] / worst)


def simulate_lenslet_psf(num_lenslets: int, spot_sigma_px: float, dims,
                         seed: int = 0, channels: int = 1) -> Psf:
    """Caustic-like PSF: Gaussian foci at uniformly random sub-pixel positions.

    Each spot is integrated over the pixel area and truncated at 4 sigma, so the
    PSF is exactly zero far from every focus. Channels share spot positions.
    """
    if num_lenslets < 1:
        raise ValueError("num_lenslets must be >= 1")
    if spot_sigma_px <= 0:
        raise ValueError("spot_sigma_px must be positive")
    p, q = (int(d) for d in dims)
    rng = np.random.default_rng(seed)
    centers = rng.uniform(0.0, 1.0, size=(num_lenslets, 2)) * (p, q)
    h = np.zeros((p, q))
    radius = int(np.ceil(4 * spot_sigma_px)) + 1
    scale = np.sqrt(2.0) * spot_sigma_px
    for cy, cx in centers:
        r0, r1 = max(int(cy) - radius, 0), min(int(cy) + radius + 1, p)
        c0, c1 = max(int(cx) - radius, 0), min(int(cx) + radius + 1, q)
        ey = np.arange(r0, r1 + 1, dtype=np.float64)
        ex = np.arange(c0, c1 + 1, dtype=np.float64)
        wy = np.diff(erf((ey - cy) / scale)) / 2
        wx = np.diff(erf((ex - cx) / scale)) / 2
        wy[np.abs(np.arange(r0, r1) + 0.5 - cy) > 4 * spot_sigma_px + 0.5] = 0
        wx[np.abs(np.arange(c0, c1) + 0.5 - cx) > 4 * spot_sigma_px + 0.5] = 0
        h[r0:r1, c0:c1] += np.outer(wy, wx)
    if h.sum() <= 0:
        raise ValueError("simulated PSF is empty")
    return Psf(np.repeat(h[None], channels, axis=0), normalization=Normalization.SUM_TO_ONE)


def bin_image(image, factor: int) -> np.ndarray:
    """Non-overlapping ``factor x factor`` box mean over the first two axes."""
    a = np.asarray(image, dtype=np.float64)
    factor = int(factor)
    if factor < 1:
        raise ValueError("binning factor must be >= 1")
    r, c = a.shape[:2]
    if r % factor or c % factor:
        raise ValueError(f"binning factor {factor} does not divide shape {(r, c)}")
    if factor == 1:
        return a.copy()
    a = a.reshape((r // factor, factor, c // factor, factor) + a.shape[2:])
    return a.mean(axis=(1, 3))
