"""Plain-text run configuration.

One ``key = value`` pair per line, with dotted section prefixes::

    timing.exposure_time_us = 660
    timing.line_time_us = 220
    solver.tau = 1e-6
    seed = 3

``#`` starts a comment. ``none`` (or ``auto``) selects a computed default for
optional keys. Unknown keys are errors. Keys under ``derived.`` are written
into manifests for the reader's benefit and ignored on load.
"""

from __future__ import annotations

import configparser
import dataclasses
import enum
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .optics import Normalization
from .scenegen import LedArraySpec, NoiseSpec, led_positions
from .shutter import TimingConfig, effective_frame_rate, frames_per_capture, is_alias_free
from .solver import SolverParams

__all__ = [
    "ConfigError",
    "PsfSpec",
    "SceneSpec",
    "AnalysisSpec",
    "RunConfig",
    "parse_config",
    "load_config",
    "dump_config",
    "derived_values",
]

BINNING_FACTORS = (1, 2, 4, 8)
_FAKE_SECTION = "__root__"


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


@dataclass(frozen=True)
class PsfSpec:
    """Where the PSF comes from: a file (PSF0 or PNG) or the lenslet simulator.

    ``rows`` and ``cols`` default to the scene shape; ``seed`` to the run seed.
    """

    source: str = "synthetic"
    path: str | None = None
    num_lenslets: int = 100
    spot_sigma_px: float = 1.5
    rows: int | None = None
    cols: int | None = None
    channels: int = 1
    seed: int | None = None
    pixel_pitch_um: float = 1.0
    dark_subtract: bool = True
    normalization: Normalization = Normalization.SUM_TO_ONE

    def __post_init__(self):
        if self.source not in ("synthetic", "file"):
            raise ValueError("source must be 'synthetic' or 'file'")
        if self.source == "file" and not self.path:
            raise ValueError("path is required when source = file")
        if self.channels < 1:
            raise ValueError("channels must be >= 1")


@dataclass(frozen=True)
class SceneSpec:
    """Synthetic scene parameters. ``rows``/``cols`` default to the sensor shape."""

    type: str = "led"
    rows: int | None = None
    cols: int | None = None
    amplitude: float = 1.0
    # LED array
    num_leds: int = 4
    spacing_px: float = 8.0
    pulse_period_us: float = 1980.0
    duty_cycle: float = 0.5
    led_row: int | None = None
    first_col: float | None = None
    spot_sigma_px: float = 0.0
    # moving disk
    radius_px: float = 4.0
    velocity_x: float = 1.0
    velocity_y: float = 0.0
    start_row: float | None = None
    start_col: float | None = None
    # flashing points
    num_points: int = 3
    period_frames: int = 4
    margin: int = 4
    min_separation: float = 6.0
    seed: int | None = None

    def __post_init__(self):
        if self.type not in ("led", "disk", "points"):
            raise ValueError("type must be one of led, disk, points")

    def led_spec(self) -> LedArraySpec:
        return LedArraySpec(self.num_leds, self.spacing_px, self.pulse_period_us,
                            self.duty_cycle, self.amplitude, self.led_row, self.first_col,
                            self.spot_sigma_px)


@dataclass(frozen=True)
class AnalysisSpec:
    """``frame_spacing_us`` defaults to the line time times both binning factors."""

    frame_spacing_us: float | None = None
    trim_frames: int = 0
    reducer: str = "max"
    window: str | None = None
    led_radius: int = 0


@dataclass(frozen=True)
class RunConfig:
    timing: TimingConfig | None = None
    sensor_cols: int | None = None
    psf: PsfSpec = field(default_factory=PsfSpec)
    scene: SceneSpec = field(default_factory=SceneSpec)
    measurement_path: str | None = None
    truth_path: str | None = None
    solver: SolverParams = field(default_factory=SolverParams)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    analysis: AnalysisSpec = field(default_factory=AnalysisSpec)
    binning_factor: int = 1
    temporal_bin: int = 1
    output_dir: str = "out"
    seed: int = 0

    def __post_init__(self):
        if self.binning_factor not in BINNING_FACTORS:
            raise ConfigError(f"binning_factor: must be one of {BINNING_FACTORS}")
        if self.temporal_bin < 1:
            raise ConfigError("temporal_bin: must be >= 1")

    def require_timing(self) -> TimingConfig:
        if self.timing is None:
            raise ConfigError("timing.exposure_time_us: required")
        return self.timing

    # resolved shapes --------------------------------------------------------
    @property
    def sensor_shape(self) -> tuple[int, int]:
        rows = self.require_timing().num_rows
        return rows, rows if self.sensor_cols is None else self.sensor_cols

    @property
    def scene_shape(self) -> tuple[int, int]:
        m, n = self.sensor_shape
        return (m if self.scene.rows is None else self.scene.rows,
                n if self.scene.cols is None else self.scene.cols)

    @property
    def psf_shape(self) -> tuple[int, int]:
        r, c = self.scene_shape
        return (r if self.psf.rows is None else self.psf.rows,
                c if self.psf.cols is None else self.psf.cols)

    def resolved(self) -> "RunConfig":
        """Fill every defaulted value (seeds, shapes, frame count) explicitly."""
        s = self.seed
        psf = dataclasses.replace(self.psf, seed=s if self.psf.seed is None else self.psf.seed)
        scene = dataclasses.replace(self.scene,
                                    seed=s if self.scene.seed is None else self.scene.seed)
        if self.timing is None:
            return dataclasses.replace(self, psf=psf, scene=scene)
        rows, cols = self.scene_shape
        pr, pc = self.psf_shape
        return dataclasses.replace(
            self,
            timing=self.timing.replace(num_frames=self.timing.resolved_num_frames),
            sensor_cols=self.sensor_shape[1],
            psf=dataclasses.replace(psf, rows=pr, cols=pc),
            scene=dataclasses.replace(scene, rows=rows, cols=cols),
        )


# section name -> (RunConfig attribute, section type)
_SECTIONS = {
    "timing": ("timing", TimingConfig),
    "psf": ("psf", PsfSpec),
    "scene": ("scene", SceneSpec),
    "solver": ("solver", SolverParams),
    "noise": ("noise", NoiseSpec),
    "analysis": ("analysis", AnalysisSpec),
}
_FLAT = {
    "sensor.cols": "sensor_cols",
    "measurement.path": "measurement_path",
    "measurement.truth_path": "truth_path",
    "binning_factor": "binning_factor",
    "temporal_bin": "temporal_bin",
    "output_dir": "output_dir",
    "seed": "seed",
}
_NONE_WORDS = ("none", "auto", "")


def _hints(cls) -> dict:
    return typing.get_type_hints(cls)


def _coerce(text: str, tp):
    text = text.strip()
    args = typing.get_args(tp)
    if typing.get_origin(tp) in (typing.Union, types.UnionType) and type(None) in args:
        if text.lower() in _NONE_WORDS:
            return None
        (tp,) = [a for a in args if a is not type(None)]
    if tp is bool:
        low = text.lower()
        if low in ("true", "yes", "on", "1"):
            return True
        if low in ("false", "no", "off", "0"):
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    if tp is int:
        return int(text)
    if tp is float:
        return float(text)
    if isinstance(tp, type) and issubclass(tp, enum.Enum):
        return tp.parse(text) if hasattr(tp, "parse") else tp(text.lower())
    return text


def _format(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, enum.Enum):
        return str(value.value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_config(text: str, overrides: dict | None = None) -> RunConfig:
    """Parse config text; ``overrides`` maps dotted keys to replacement strings."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",),
                                   comment_prefixes=("#", ";"), delimiters=("=",),
                                   default_section="__none__")
    cp.optionxform = str
    try:
        cp.read_string(f"[{_FAKE_SECTION}]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    items = dict(cp[_FAKE_SECTION]) if cp.has_section(_FAKE_SECTION) else {}
    items.update(overrides or {})

    sections: dict[str, dict] = {name: {} for name in _SECTIONS}
    flat: dict = {}
    flat_hints = _hints(RunConfig)
    for key, raw in items.items():
        key = key.strip()
        if key.startswith("derived."):
            continue
        try:
            if key in _FLAT:
                attr = _FLAT[key]
                flat[attr] = _coerce(raw, flat_hints[attr])
                continue
            sec, _, name = key.partition(".")
            if sec not in _SECTIONS or not name:
                raise ConfigError(f"{key}: unknown key")
            cls = _SECTIONS[sec][1]
            hints = _hints(cls)
            if name not in hints:
                raise ConfigError(f"{key}: unknown key")
            sections[sec][name] = _coerce(raw, hints[name])
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from exc

    built = {}
    for sec, (attr, cls) in _SECTIONS.items():
        vals = sections[sec]
        if sec == "timing":
            if not vals:
                built[attr] = None
                continue
            for req in ("exposure_time_us", "line_time_us"):
                if req not in vals:
                    raise ConfigError(f"timing.{req}: required")
        if sec == "noise" and "seed" not in vals:
            vals["seed"] = flat.get("seed", 0)
        if sec == "solver" and "seed" not in vals:
            vals["seed"] = flat.get("seed", 0)
        try:
            built[attr] = cls(**vals)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{sec}: {exc}") from exc
    try:
        return RunConfig(**built, **flat)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path, overrides: dict | None = None) -> RunConfig:
    return parse_config(Path(path).read_text(), overrides)


def derived_values(cfg: RunConfig) -> dict:
    t = cfg.require_timing()
    out = {
        "lines_per_exposure": t.lines_per_exposure,
        "frames_per_capture": frames_per_capture(t),
        "num_frames": t.resolved_num_frames,
        "effective_frame_rate_fps": effective_frame_rate(t),
        "alias_free": is_alias_free(t),
        "capture_duration_us": t.capture_duration_us(),
    }
    if cfg.scene.type == "led":
        out["envelope_period_rows"] = cfg.scene.pulse_period_us / t.line_time_us
        out["led_frequency_hz"] = 1e6 / cfg.scene.pulse_period_us
        out["led_positions"] = ";".join(
            f"{r:g},{c:g}" for r, c in led_positions(cfg.scene.led_spec(), cfg.scene_shape))
    return out


def dump_config(cfg: RunConfig, derived: dict | None = None, extra: dict | None = None) -> str:
    """Serialize every field (defaults included) plus optional ``derived.`` lines."""
    lines = []
    for sec, (attr, _) in _SECTIONS.items():
        obj = getattr(cfg, attr)
        if obj is None:
            continue
        for f in dataclasses.fields(obj):
            lines.append(f"{sec}.{f.name} = {_format(getattr(obj, f.name))}")
    for key, attr in _FLAT.items():
        lines.append(f"{key} = {_format(getattr(cfg, attr))}")
    for k, v in {**(derived or {}), **(extra or {})}.items():
        lines.append(f"derived.{k} = {_format(v)}")
    return "\n".join(lines) + "\n"
