"""Discrete shutter functions for rolling (single, dual) and global shutters.

Frame ``k`` sits at time ``k * line_time_us`` measured from the start of the
first row's exposure. A row whose scan index is ``s`` exposes over
``[s * T_l, s * T_l + T_e)``, so it is active for frames ``s .. s + N_l - 1``.
Runs that extend past the chosen number of frames are truncated, never wrapped.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "ShutterMode",
    "TimingConfig",
    "ShutterMask",
    "build_shutter_mask",
    "frames_per_capture",
    "effective_frame_rate",
    "is_alias_free",
]


class ShutterMode(str, enum.Enum):
    ROLLING_SINGLE = "rolling_single"
    ROLLING_DUAL = "rolling_dual"
    GLOBAL = "global"

    @classmethod
    def parse(cls, value: "str | ShutterMode") -> "ShutterMode":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"rollingsingle": "rolling_single", "single": "rolling_single",
                   "rollingdual": "rolling_dual", "dual": "rolling_dual"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown shutter mode {value!r}") from None


@dataclass(frozen=True)
class TimingConfig:
    """Sensor timing parameters.

    Parameters
    ----------
    exposure_time_us : float
        Per-row exposure ``T_e``.
    line_time_us : float
        Delay ``T_l`` between the exposure starts of consecutive rows.
    mode : ShutterMode
        Rolling single, rolling dual (top and bottom edges scan inward) or global.
    num_rows : int
        Sensor rows ``M``.
    num_frames : int, optional
        Frames ``K`` to recover. ``None`` uses :func:`frames_per_capture`.
    inter_capture_gap_us : float
        Readout dead time between successive captures. Infinite means a single
        isolated capture.
    """

    exposure_time_us: float
    line_time_us: float
    mode: ShutterMode = ShutterMode.ROLLING_SINGLE
    num_rows: int = 1
    num_frames: int | None = None
    inter_capture_gap_us: float = math.inf

    def __post_init__(self):
        object.__setattr__(self, "mode", ShutterMode.parse(self.mode))
        if not (self.exposure_time_us > 0 and math.isfinite(self.exposure_time_us)):
            raise ValueError("exposure_time_us must be positive and finite")
        if not (self.line_time_us > 0 and math.isfinite(self.line_time_us)):
            raise ValueError("line_time_us must be positive and finite")
        if int(self.num_rows) != self.num_rows or self.num_rows < 1:
            raise ValueError("num_rows must be a positive integer")
        if self.num_frames is not None and (int(self.num_frames) != self.num_frames
                                            or self.num_frames < 1):
            raise ValueError("num_frames must be a positive integer")
        if self.inter_capture_gap_us < 0:
            raise ValueError("inter_capture_gap_us must be non-negative")
        # raises on a non-integer ratio
        _ = self.lines_per_exposure
        if self.mode is ShutterMode.ROLLING_DUAL and self.num_rows % 2:
            raise ValueError("rolling_dual mode requires an even number of rows")

    @property
    def lines_per_exposure(self) -> int:
        """``N_l = T_e / T_l``, the number of rows exposing at once per shutter."""
        ratio = self.exposure_time_us / self.line_time_us
        n = round(ratio)
        if n < 1 or abs(ratio - n) > 1e-9 * max(1.0, ratio):
            raise ValueError(
                f"exposure_time_us ({self.exposure_time_us}) must be an integer "
                f"multiple of line_time_us ({self.line_time_us})"
            )
        return int(n)

    @property
    def resolved_num_frames(self) -> int:
        return self.num_frames if self.num_frames is not None else frames_per_capture(self)

    def scan_index(self) -> np.ndarray:
        """Scan position of every row (the row's start delay in line times)."""
        rows = np.arange(self.num_rows)
        if self.mode is ShutterMode.ROLLING_DUAL:
            return np.minimum(rows, self.num_rows - 1 - rows)
        if self.mode is ShutterMode.GLOBAL:
            return np.zeros(self.num_rows, dtype=int)
        return rows

    def capture_duration_us(self) -> float:
        """Time from the first row's exposure start to the last row's end."""
        return float(self.scan_index().max()) * self.line_time_us + self.exposure_time_us

    def capture_period_us(self) -> float:
        return self.capture_duration_us() + self.inter_capture_gap_us

    def replace(self, **changes) -> "TimingConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class ShutterMask:
    """Per-frame row activation ``masks[k, i]`` (shape ``(K, M)``, boolean)."""

    masks: np.ndarray
    mode: ShutterMode = ShutterMode.ROLLING_SINGLE

    def __post_init__(self):
        m = np.asarray(self.masks, dtype=bool)
        if m.ndim != 2:
            raise ValueError("masks must be a (K, M) array")
        m.setflags(write=False)
        object.__setattr__(self, "masks", m)

    @property
    def num_frames(self) -> int:
        return self.masks.shape[0]

    @property
    def num_rows(self) -> int:
        return self.masks.shape[1]

    @property
    def n_active_per_frame(self) -> np.ndarray:
        return self.masks.sum(axis=1)

    def active_frames(self, row: int) -> np.ndarray:
        return np.flatnonzero(self.masks[:, row])

    def as_float(self) -> np.ndarray:
        return self.masks.astype(np.float64)


def build_shutter_mask(config: TimingConfig) -> ShutterMask:
    """Sample the shutter function at frame times ``k * T_l`` for every row.

    Row ``i`` is active at frame ``k`` iff ``s_i <= k < s_i + N_l`` with ``s_i``
    the row's scan index (``min(i, M-1-i)`` for the dual shutter, 0 for global).
    """
    n_l = config.lines_per_exposure
    k = np.arange(config.resolved_num_frames)[:, None]
    start = config.scan_index()[None, :]
    masks = (k >= start) & (k < start + n_l)
    return ShutterMask(masks, config.mode)


def frames_per_capture(config: TimingConfig) -> int:
    """Number of distinct frame times at which at least one row is exposing."""
    n_l = config.lines_per_exposure
    m = config.num_rows
    if config.mode is ShutterMode.ROLLING_SINGLE:
        return m + n_l - 1
    if config.mode is ShutterMode.ROLLING_DUAL:
        return math.ceil(m / 2) + n_l - 1
    return n_l


def effective_frame_rate(config: TimingConfig) -> float:
    """Frame rate in fps set by the line time."""
    return 1e6 / config.line_time_us


def is_alias_free(config: TimingConfig) -> bool:
    """True when the exposure rect band-limits below the ``1/T_l`` sampling rate."""
    return config.exposure_time_us >= 2 * config.line_time_us
