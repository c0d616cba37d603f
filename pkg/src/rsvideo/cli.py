"""``rsvideo`` command line: simulate, reconstruct, calibrate, analyze.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import recon_metrics, temporal_bin, temporal_contrast, temporal_spectrum, \
    xt_projection
from .config import ConfigError, RunConfig, derived_values, dump_config, load_config, \
    parse_config
from .fileio import read_png, read_psf, read_volume, write_csv, write_png, write_psf, \
    write_volume
from .forward import Measurement, VideoVolume, forward_apply
from .optics import Normalization, Psf, autocorrelation_slice, bin_image, \
    simulate_lenslet_psf
from .scenegen import add_noise, led_positions, make_flashing_points_scene, \
    make_led_scene, make_moving_disk_scene
from .shutter import build_shutter_mask
from .solver import SolverDivergence, fista_solve

logger = logging.getLogger("rsvideo")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERICAL = 0, 2, 3, 4
SATURATION_LIMIT = 0.01

__all__ = ["main", "cmd_simulate", "cmd_reconstruct", "cmd_calibrate", "cmd_analyze",
           "calibrate_image", "load_psf"]


def _write_manifest(out: Path, cfg: RunConfig, derived: dict | None = None,
                    extra: dict | None = None) -> None:
    extra = {"version": __version__, **(extra or {})}
    (out / "manifest.txt").write_text(dump_config(cfg, derived, extra))


def _stack_for_png(chans: list[np.ndarray]) -> np.ndarray:
    if len(chans) == 1:
        return chans[0]
    if len(chans) == 3:
        return np.stack(chans, axis=-1)
    raise ValueError("PNG export needs 1 or 3 channels")


# PSF --------------------------------------------------------------------------

def calibrate_image(image: np.ndarray, bitdepth: int, dark_subtract: bool = True,
                    pixel_pitch_um: float = 1.0) -> Psf:
    """Turn a raw point-source capture into a sum-to-one PSF.

    The dark offset is the most frequent pixel value of each channel, which is
    the background level for a sparse caustic image.
    """
    planes = image[None] if image.ndim == 2 else np.moveaxis(image, -1, 0)
    full = (1 << bitdepth) - 1
    sat = np.mean(np.any(planes >= full, axis=0))
    if sat > SATURATION_LIMIT:
        logger.warning("%.1f%% of PSF pixels are saturated", 100 * sat)
    out = []
    for p in planes:
        if dark_subtract:
            offset = np.bincount(np.rint(p).astype(np.int64).ravel()).argmax()
            p = np.clip(p - offset, 0.0, None)
        if not np.any(p > 0):
            raise ValueError("PSF image has no signal (all zero after dark subtraction)")
        out.append(p)
    return Psf(np.stack(out), pixel_pitch_um, Normalization.SUM_TO_ONE)


def load_psf(cfg: RunConfig) -> Psf:
    spec = cfg.psf
    if spec.source == "synthetic":
        seed = cfg.seed if spec.seed is None else spec.seed
        return simulate_lenslet_psf(spec.num_lenslets, spec.spot_sigma_px, cfg.psf_shape,
                                    seed, spec.channels)
    path = Path(spec.path)
    if path.suffix.lower() == ".png":
        img, depth = read_png(path)
        return calibrate_image(img, depth, spec.dark_subtract, spec.pixel_pitch_um)
    psf = read_psf(path)
    return Psf(psf.planes, spec.pixel_pitch_um, spec.normalization)


# simulate ---------------------------------------------------------------------

def make_scene(cfg: RunConfig) -> VideoVolume:
    t = cfg.require_timing()
    rows, cols = cfg.scene_shape
    dims = (rows, cols, t.resolved_num_frames)
    sc = cfg.scene
    dt = t.line_time_us
    seed = cfg.seed if sc.seed is None else sc.seed
    if sc.type == "led":
        return make_led_scene(sc.led_spec(), dims, dt)
    if sc.type == "disk":
        start = None if sc.start_row is None or sc.start_col is None \
            else (sc.start_row, sc.start_col)
        return make_moving_disk_scene(sc.radius_px, (sc.velocity_x, sc.velocity_y), dims,
                                      start, sc.amplitude, dt)
    return make_flashing_points_scene(sc.num_points, dims, sc.period_frames, sc.duty_cycle,
                                      seed, sc.margin, sc.min_separation, sc.amplitude, dt)


def cmd_simulate(cfg: RunConfig, out: Path, workers: int | None = None) -> dict:
    """Render the scene through the camera model; writes measurement, truth and PSF."""
    cfg = cfg.resolved()
    t = cfg.timing
    mask = build_shutter_mask(t)
    scene = make_scene(cfg)
    psf = load_psf(cfg)
    n_cols = cfg.sensor_shape[1]
    chans = []
    for c in range(psf.num_channels):
        v = dataclasses.replace(scene, channel_id=c)
        b = forward_apply(v, psf, mask, sensor_cols=n_cols, timing=t, workers=workers)
        if cfg.noise.gaussian_sigma > 0 or cfg.noise.poisson_scale > 0:
            b = add_noise(b, dataclasses.replace(cfg.noise, seed=cfg.noise.seed + c))
        chans.append(b.values)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"measurement": out / "measurement.vol", "truth": out / "truth.vol",
             "psf": out / "psf.psf", "measurement_png": out / "measurement.png"}
    write_volume(paths["measurement"], chans)
    write_volume(paths["truth"], scene.values)
    write_psf(paths["psf"], psf)
    if len(chans) in (1, 3):
        write_png(paths["measurement_png"], _stack_for_png(chans))
    _write_manifest(out, cfg, derived_values(cfg))
    logger.info("simulate: %s frames -> %s", t.resolved_num_frames, out)
    return paths


# reconstruct ------------------------------------------------------------------

def cmd_reconstruct(cfg: RunConfig, out: Path, workers: int | None = None) -> dict:
    """Bin, solve each channel and write the volume, frame PNGs and objective traces."""
    t0 = cfg.require_timing()
    if not cfg.measurement_path:
        raise ConfigError("measurement.path: required for reconstruct")
    chans = read_volume(cfg.measurement_path)
    if chans[0].shape[2] != 1:
        raise ConfigError("measurement.path: expected a 2D measurement (d2 = 1)")
    chans = [c[:, :, 0] for c in chans]
    m, n = chans[0].shape
    if t0.num_rows != m:
        logger.warning("timing.num_rows = %d but the measurement has %d rows; using the file",
                       t0.num_rows, m)
    # sensor dimensions come from the file
    cfg = dataclasses.replace(cfg, timing=t0.replace(num_rows=m), sensor_cols=n).resolved()
    t0 = cfg.timing
    f = cfg.binning_factor
    if m % f or n % f:
        raise ConfigError(f"binning_factor: {f} does not divide the {m}x{n} measurement")
    rows, cols = cfg.scene.rows or m, cfg.scene.cols or n
    if rows % f or cols % f:
        raise ConfigError(f"binning_factor: {f} does not divide the {rows}x{cols} scene")
    try:
        timing = t0.replace(num_rows=m // f, line_time_us=t0.line_time_us * f,
                            num_frames=t0.num_frames if f == 1 else None)
    except ValueError as exc:
        raise ConfigError(f"binning_factor: {exc}") from exc

    psf = load_psf(cfg)
    if psf.num_channels != len(chans):
        raise ConfigError(f"psf: {psf.num_channels} channel(s) but the measurement has "
                          f"{len(chans)}")
    if f > 1:
        psf = psf.binned(f)
    mask = build_shutter_mask(timing)
    scene_shape = (rows // f, cols // f)
    vols, reports = [], []
    for c, b in enumerate(chans):
        meas = Measurement(bin_image(b, f), timing, c)
        vol, rep = fista_solve(meas, psf, mask, cfg.solver, scene_shape=scene_shape,
                               lateral_pitch_um=psf.pixel_pitch_um, workers=workers)
        if cfg.temporal_bin > 1:
            vol = temporal_bin(vol, cfg.temporal_bin)
        vols.append(vol)
        reports.append(rep)

    out.mkdir(parents=True, exist_ok=True)
    write_volume(out / "recon.vol", [v.values for v in vols])
    frames = out / "frames"
    frames.mkdir(exist_ok=True)
    if len(vols) in (1, 3):
        stack = _stack_for_png([v.values for v in vols])
        peak = float(np.clip(stack, 0, None).max())
        for k in range(vols[0].num_frames):
            img = stack[:, :, k]
            img = np.clip(img, 0, None) * (65535.0 / peak) if peak > 0 else img
            write_png(frames / f"frame_{k:04d}.png", img, normalize=False)
    for c, rep in enumerate(reports):
        rep.write_csv(out / ("objective.csv" if c == 0 else f"objective_c{c}.csv"))
    derived = {
        "binned_line_time_us": timing.line_time_us,
        "binned_num_rows": timing.num_rows,
        "binned_num_frames": timing.resolved_num_frames,
        "frame_spacing_us": vols[0].frame_spacing_us,
        "lines_per_exposure": timing.lines_per_exposure,
    }
    for c, rep in enumerate(reports):
        derived[f"c{c}.iterations_run"] = rep.iterations_run
        derived[f"c{c}.converged"] = rep.converged
        derived[f"c{c}.best_iteration"] = rep.best_iteration
        derived[f"c{c}.best_objective"] = rep.best_objective
        derived[f"c{c}.step_size"] = rep.final_step_size
    _write_manifest(out, cfg, derived)
    return {"volume": out / "recon.vol", "reports": reports, "volumes": vols}


# calibrate --------------------------------------------------------------------

def _plot_autocorrelation(path: Path, lags: np.ndarray, slices: list[np.ndarray]) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 3), dpi=100)
    for c, s in enumerate(slices):
        ax.plot(lags, s, lw=1, label=f"channel {c}")
    ax.set_xlabel("lag (pixels)")
    ax.set_ylabel("normalized autocorrelation")
    if len(slices) > 1:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def cmd_calibrate(image_path, cfg: RunConfig, out: Path) -> dict:
    """Normalize a point-source capture into a PSF and write autocorrelation diagnostics."""
    img, depth = read_png(image_path)
    psf = calibrate_image(img, depth, cfg.psf.dark_subtract, cfg.psf.pixel_pitch_um)
    out.mkdir(parents=True, exist_ok=True)
    write_psf(out / "psf.psf", psf)
    slices = [autocorrelation_slice(p) for p in psf.planes]
    q = psf.shape[1]
    lags = np.arange(-(q - 1), q)
    write_csv(out / "autocorrelation.csv", ["lag"] + [f"channel_{c}" for c in range(len(slices))],
              zip(lags, *slices))
    _plot_autocorrelation(out / "autocorrelation.png", lags, slices)
    _write_manifest(out, cfg.resolved(), extra={"psf_image": str(image_path),
                                                "bitdepth": depth})
    return {"psf": psf, "slices": slices}


# analyze ----------------------------------------------------------------------

def cmd_analyze(volume_path, cfg: RunConfig, out: Path, truth_path=None) -> dict:
    """x-t projection, temporal spectrum, LED contrast and (with a truth volume) metrics."""
    chans = read_volume(volume_path)
    a = chans[0]
    an = cfg.analysis
    if an.frame_spacing_us is not None:
        spacing = an.frame_spacing_us
    elif cfg.timing is not None:
        spacing = cfg.timing.line_time_us * cfg.binning_factor * cfg.temporal_bin
    else:
        spacing = 1.0
    vol = VideoVolume(a, frame_spacing_us=spacing)

    mask, positions = None, None
    report: dict = {"frame_spacing_us": spacing, "num_frames": vol.num_frames}
    if cfg.scene.type == "led" and cfg.timing is not None:
        rows, cols = cfg.scene_shape
        sy, sx = a.shape[0] / rows, a.shape[1] / cols
        positions = [(r * sy, c * sx) for r, c in led_positions(cfg.scene.led_spec(),
                                                                (rows, cols))]
        mask = np.zeros(a.shape[:2], dtype=bool)
        for r, c in positions:
            mask[int(round(r)), int(round(c))] = True

    out.mkdir(parents=True, exist_ok=True)
    write_png(out / "xt_projection.png", xt_projection(vol, an.reducer))
    spec = temporal_spectrum(vol, mask, an.window)
    write_csv(out / "spectrum.csv", ["frequency_hz", "power"], zip(spec.frequencies_hz, spec.power))
    report["peak_hz"] = spec.peak_hz
    report["bin_width_hz"] = spec.bin_width_hz
    if positions is not None:
        trim = an.trim_frames
        frames = slice(trim, vol.num_frames - trim) if trim else None
        report["led_frequency_hz"] = 1e6 / cfg.scene.pulse_period_us
        report["temporal_contrast"] = temporal_contrast(vol, positions, cfg.scene.pulse_period_us,
                                                        frames, an.led_radius)
    if truth_path is not None:
        metrics = recon_metrics(vol, read_volume(truth_path)[0])
        for k, v in metrics._asdict().items():
            report[f"metrics.{k}"] = v
    lines = [f"{k} = {'none' if v is None else (repr(v) if isinstance(v, float) else v)}"
             for k, v in report.items()]
    (out / "report.txt").write_text("\n".join(lines) + "\n")
    return report


# entry point ------------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="run configuration file")
    common.add_argument("--output", type=Path, help="output directory (overrides output_dir)")
    common.add_argument("--seed", type=int, help="run seed (overrides seed)")
    common.add_argument("--threads", type=int, default=None, help="FFT worker threads")
    common.add_argument("--verbose", "-v", action="store_true")

    p = argparse.ArgumentParser(prog="rsvideo", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="render a synthetic capture")
    r = sub.add_parser("reconstruct", parents=[common], help="recover a video from a capture")
    r.add_argument("--measurement", help="measurement VOL0 file (overrides measurement.path)")
    r.add_argument("--psf", help="PSF0 or PNG file (overrides psf.path)")
    c = sub.add_parser("calibrate", parents=[common], help="normalize a PSF capture")
    c.add_argument("image", type=Path, help="16-bit PNG point-source image")
    a = sub.add_parser("analyze", parents=[common], help="spectra, projections and metrics")
    a.add_argument("volume", type=Path, help="VOL0 volume")
    a.add_argument("--truth", type=Path, help="ground-truth VOL0 volume")
    return p


def _load(args) -> RunConfig:
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if getattr(args, "measurement", None):
        overrides["measurement.path"] = args.measurement
    if getattr(args, "psf", None):
        overrides["psf.source"] = "file"
        overrides["psf.path"] = args.psf
    if args.config is None:
        if args.command in ("simulate", "reconstruct"):
            raise ConfigError("--config: required for this command")
        return parse_config("", overrides)
    return load_config(args.config, overrides)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load(args)
        out = args.output if args.output is not None else Path(cfg.output_dir)
        if args.command == "simulate":
            cmd_simulate(cfg, out, args.threads)
        elif args.command == "reconstruct":
            cmd_reconstruct(cfg, out, args.threads)
        elif args.command == "calibrate":
            cmd_calibrate(args.image, cfg, out)
        else:
            cmd_analyze(args.volume, cfg, out, args.truth)
    except ConfigError as exc:
        print(f"rsvideo: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"rsvideo: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (SolverDivergence, FloatingPointError, ValueError) as exc:
        print(f"rsvideo: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
