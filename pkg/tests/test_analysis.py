import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rsvideo.analysis import (led_traces, recon_metrics, row_modulation_period,
                              temporal_bin, temporal_contrast, temporal_spectrum, xt_projection)
from rsvideo.forward import VideoVolume
from rsvideo.scenegen import LedArraySpec, led_positions, make_led_scene, square_wave


def trace_volume(trace, spacing=220.0, shape=(1, 1)):
    trace = np.asarray(trace, dtype=float)
    return VideoVolume(np.broadcast_to(trace, shape + trace.shape).copy(), 1.0, spacing)


# x-t projection ---------------------------------------------------------------

def test_static_point_is_horizontal_line():
    v = np.zeros((6, 7, 5))
    v[2, 3, :] = 1.0
    xt = xt_projection(VideoVolume(v))
    assert xt.shape == (7, 5)
    np.testing.assert_array_equal(xt[3], 1.0)
    assert np.count_nonzero(xt) == 5


def test_leds_give_four_tracks_and_dashes():
    spec = LedArraySpec(4, 8, 1980.0)
    vol = make_led_scene(spec, (16, 40, 18), 220.0)
    xt = xt_projection(vol)
    lit_cols = np.flatnonzero(xt.any(axis=1))
    expect = [int(round(c)) for _, c in led_positions(spec, (16, 40))]
    np.testing.assert_array_equal(lit_cols, expect)
    np.testing.assert_array_equal(xt[expect[0]], np.tile([1, 1, 1, 1, 1, 0, 0, 0, 0], 2))
    np.testing.assert_array_equal(xt_projection(vol, "sum"), xt)
    with pytest.raises(ValueError):
        xt_projection(vol, "median")


# spectrum ---------------------------------------------------------------------

def test_constant_volume_has_no_peak():
    res = temporal_spectrum(VideoVolume(np.full((3, 3, 32), 2.5), 1.0, 220.0))
    assert res.peak_hz is None
    assert np.abs(res.power[1:]).max() < 1e-24


def test_square_wave_1980_peaks_at_505_with_odd_harmonics():
    k = 99  # 11 whole periods of 9 frames
    f = square_wave(np.arange(k) * 220.0, 1980.0)
    res = temporal_spectrum(trace_volume(f))
    assert abs(res.peak_hz - 1e6 / 1980) < res.bin_width_hz / 2
    base = int(round(505.05 / res.bin_width_hz))
    assert res.power[3 * base] > 1e-3 * res.power[base]
    # on for 5 of 9 frames, so even harmonics survive but stay below the fundamental
    assert res.power[base] == res.power[1:].max()


def test_sinusoid_quarter_line_rate_amplitude():
    k, tl, amp = 64, 220.0, 0.7
    f0 = 1e6 / (4 * tl)
    t = np.arange(k) * tl * 1e-6
    res = temporal_spectrum(trace_volume(3 + amp * np.cos(2 * np.pi * f0 * t)))
    assert res.peak_hz == pytest.approx(f0, rel=1e-12)
    assert res.power.max() == pytest.approx(amp ** 2 / 2, rel=0.01)
    others = np.delete(res.power, np.argmax(res.power))
    assert others.max() < 1e-20


@given(k=st.integers(4, 80), seed=st.integers(0, 10 ** 6))
def test_parseval_single_voxel(k, seed):
    x = np.random.default_rng(seed).normal(size=k)
    res = temporal_spectrum(trace_volume(x))
    assert res.power.sum() == pytest.approx(x.var(), rel=1e-8)
    assert np.all(np.diff(res.frequencies_hz) > 0) and np.all(res.power >= 0)


@given(k=st.integers(16, 128), cycles=st.floats(1.5, 6.0), phase=st.floats(0, 6.28))
def test_sinusoid_peak_within_one_bin(k, cycles, phase):
    f0 = cycles / (k * 220e-6)
    t = np.arange(k) * 220e-6
    res = temporal_spectrum(trace_volume(np.sin(2 * np.pi * f0 * t + phase)))
    assert abs(res.peak_hz - f0) <= res.bin_width_hz


def test_spectrum_mask_window_and_errors():
    v = np.zeros((2, 2, 16))
    v[0, 0] = np.cos(np.pi * np.arange(16) / 2)
    vol = VideoVolume(v, 1.0, 220.0)
    masked = temporal_spectrum(vol, voxel_mask=np.array([[1, 0], [0, 0]], bool))
    full = temporal_spectrum(vol)
    np.testing.assert_allclose(full.power * 4, masked.power, rtol=1e-12)
    assert temporal_spectrum(vol, window="hann").peak_hz == masked.peak_hz
    with pytest.raises(ValueError):
        temporal_spectrum(VideoVolume(np.zeros((2, 2, 3))))
    with pytest.raises(ValueError):
        temporal_spectrum(vol, window="kaiser")
    with pytest.raises(ValueError):
        temporal_spectrum(vol, voxel_mask=np.zeros((2, 2), bool))


# contrast ---------------------------------------------------------------------

def led_recon(trace):
    v = np.zeros((5, 9, len(trace)))
    v[2, 2] = v[2, 6] = trace
    return VideoVolume(v, 1.0, 220.0), [(2, 2), (2, 6)]


def test_perfect_square_wave_contrast_is_one():
    vol, pos = led_recon(square_wave(np.arange(36) * 220.0, 1980.0))
    assert temporal_contrast(vol, pos, 1980.0) == 1.0


def test_constant_trace_contrast_is_zero():
    vol, pos = led_recon(np.full(36, 0.4))
    assert temporal_contrast(vol, pos, 1980.0) == 0.0


def test_partial_modulation_and_frames_window():
    f = 1.0 + 0.5 * square_wave(np.arange(40) * 220.0, 880.0)
    vol, pos = led_recon(f)
    assert temporal_contrast(vol, pos, 880.0) == pytest.approx(0.5 / 2.5)
    assert temporal_contrast(vol, pos, 880.0, frames=slice(4, 36)) == pytest.approx(0.2)


@given(c=st.floats(1e-6, 1e6), seed=st.integers(0, 1000))
def test_contrast_scale_invariant(c, seed):
    f = np.random.default_rng(seed).random(30) + 0.01
    vol, pos = led_recon(f)
    scaled = VideoVolume(vol.values * c, 1.0, 220.0)
    assert temporal_contrast(scaled, pos, 1320.0) == pytest.approx(
        temporal_contrast(vol, pos, 1320.0), rel=1e-9)


def test_contrast_zero_trace_raises_and_box_traces():
    vol, pos = led_recon(np.zeros(12))
    with pytest.raises(ValueError, match="no signal"):
        temporal_contrast(vol, pos, 660.0)
    v = np.ones((5, 5, 3))
    np.testing.assert_array_equal(led_traces(v, [(2, 2)], radius=1), [[9, 9, 9]])


# metrics ----------------------------------------------------------------------

def test_identical_volumes():
    t = np.random.default_rng(0).random((4, 4, 3))
    m = recon_metrics(t, t)
    assert math.isinf(m.psnr_db) and m.support_precision == 1 and m.support_recall == 1


def test_psnr_with_known_noise():
    rng = np.random.default_rng(1)
    t = rng.random((32, 32, 16))
    t /= t.max()
    sigma = 0.05
    m = recon_metrics(t + rng.normal(0, sigma, t.shape), t)
    assert m.psnr_db == pytest.approx(20 * math.log10(1 / sigma), abs=0.5)


def test_empty_recon_and_mismatch():
    t = np.zeros((3, 3, 2))
    t[1, 1, 0] = 1
    m = recon_metrics(np.zeros_like(t), t)
    assert m.support_recall == 0 and m.support_precision == 0
    with pytest.raises(ValueError, match="shape"):
        recon_metrics(np.zeros((3, 3, 3)), t)


def test_support_threshold_is_ten_percent_of_each_max():
    t = np.zeros((1, 4, 1))
    t[0, :, 0] = [1.0, 0.5, 0.05, 0.0]
    r = np.zeros_like(t)
    r[0, :, 0] = [10.0, 0.0, 2.0, 0.5]
    m = recon_metrics(r, t)
    assert m.support_precision == pytest.approx(0.5)
    assert m.support_recall == pytest.approx(0.5)


# binning and row period -------------------------------------------------------

def test_temporal_bin_averages_and_drops_tail(caplog):
    v = VideoVolume(np.arange(7.0).reshape(1, 1, 7), 1.0, 220.0)
    out = temporal_bin(v, 2)
    np.testing.assert_array_equal(out.values.ravel(), [0.5, 2.5, 4.5])
    assert out.frame_spacing_us == 440.0
    assert "dropping 1" in caplog.text
    with pytest.raises(ValueError):
        temporal_bin(v, 8)


def test_row_modulation_period():
    rows = np.arange(90)
    img = np.outer(2 + square_wave(rows * 220.0, 1980.0), np.ones(5))
    assert row_modulation_period(img)[0] == 9.0
    assert math.isinf(row_modulation_period(np.ones((10, 4)))[0])
