import sys
import time
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

from rsvideo.cli import cmd_reconstruct, cmd_simulate  # noqa: E402
from rsvideo.config import parse_config  # noqa: E402

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# three flashing points, 64x64x16, N_l = 2, centered 15-row sensor strip
SPARSE_CONFIG = """
timing.exposure_time_us = 440
timing.line_time_us = 220
timing.mode = rolling_single
timing.num_rows = 15
timing.num_frames = 16
sensor.cols = 64
scene.type = points
scene.rows = 64
scene.cols = 64
scene.num_points = 3
scene.period_frames = 4
psf.num_lenslets = 300
psf.spot_sigma_px = 0.7
psf.rows = 64
psf.cols = 64
solver.tau = 1e-7
solver.alpha = 3
solver.max_iters = 1000
solver.rel_tol = 1e-10
seed = 0
"""

# four LEDs on a 64x64 grid, 64 frames, T_e = 660 us
LED_CONFIG = """
timing.exposure_time_us = 660
timing.line_time_us = 220
timing.mode = rolling_single
timing.num_rows = 64
timing.num_frames = 64
scene.type = led
scene.num_leds = 4
scene.spacing_px = 8
psf.num_lenslets = 100
psf.spot_sigma_px = 1.5
psf.seed = 1
solver.tau = 1e-6
solver.alpha = 10
solver.max_iters = 300
solver.rel_tol = 1e-9
"""

LED_PERIODS_US = (2640.0, 1980.0, 1320.0, 660.0)


def simulate_and_reconstruct(text: str, root: Path, extra: str = ""):
    """Run the simulate then reconstruct pipeline; returns (sim paths, recon result)."""
    sim = cmd_simulate(parse_config(text), root / "sim")
    rec_text = text + extra + (f"\nmeasurement.path = {sim['measurement']}\n"
                               f"psf.source = file\npsf.path = {sim['psf']}\n")
    rec = cmd_reconstruct(parse_config(rec_text), root / "rec")
    return sim, rec


@pytest.fixture(scope="session")
def sparse_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("sparse")
    start = time.perf_counter()
    sim, rec = simulate_and_reconstruct(SPARSE_CONFIG, root)
    elapsed = time.perf_counter() - start
    from rsvideo.fileio import read_volume
    truth = read_volume(sim["truth"])[0]
    return {"truth": truth, "recon": rec["volumes"][0].values, "report": rec["reports"][0],
            "root": root, "elapsed_s": elapsed}


@pytest.fixture(scope="session")
def led_sweep(tmp_path_factory):
    from rsvideo.scenegen import led_positions
    root = tmp_path_factory.mktemp("led")
    out = {}
    start = time.perf_counter()
    for period in LED_PERIODS_US:
        text = LED_CONFIG + f"scene.pulse_period_us = {period!r}\n"
        _, rec = simulate_and_reconstruct(text, root / str(int(period)))
        cfg = parse_config(text)
        out[period] = {
            "volume": rec["volumes"][0],
            "positions": led_positions(cfg.scene.led_spec(), cfg.scene_shape),
        }
    out["elapsed_s"] = time.perf_counter() - start
    return out


def rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))
