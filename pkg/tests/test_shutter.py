import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import mask_oracle
from rsvideo.shutter import (ShutterMode, TimingConfig, build_shutter_mask,
                             effective_frame_rate, frames_per_capture, is_alias_free)


def timing(te, tl, mode="rolling_single", m=8, k=None):
    return TimingConfig(te, tl, mode, m, k)


def test_lines_per_exposure_led_setting():
    assert timing(660, 220).lines_per_exposure == 3


def test_single_identity_pattern():
    mask = build_shutter_mask(timing(220, 220, m=4, k=4))
    np.testing.assert_array_equal(mask.masks, np.eye(4, dtype=bool))


def test_dual_six_rows_by_hand():
    mask = build_shutter_mask(timing(220, 220, "rolling_dual", m=6, k=3))
    for k in range(3):
        assert set(np.flatnonzero(mask.masks[k])) == {k, 5 - k}
    np.testing.assert_array_equal(mask.masks, mask.masks[:, ::-1])


def test_global_all_rows_over_exposure():
    mask = build_shutter_mask(timing(660, 220, "global", m=5))
    assert mask.num_frames == 3
    assert mask.masks.all()


@pytest.mark.parametrize("te, tl", [(650, 220), (100, 220), (0, 220), (220, -1)])
def test_rejects_bad_ratio(te, tl):
    with pytest.raises(ValueError):
        timing(te, tl)


def test_rejects_odd_dual():
    with pytest.raises(ValueError, match="even"):
        timing(220, 220, "rolling_dual", m=7)


def test_frames_per_capture_examples():
    assert frames_per_capture(timing(220, 220, "rolling_dual", m=280)) == 140
    assert frames_per_capture(timing(880, 220, m=1)) == 4
    assert frames_per_capture(timing(660, 220, m=8)) == 10
    # matches the number of nonzero mask frames
    mask = build_shutter_mask(timing(660, 220, m=8))
    assert np.count_nonzero(mask.masks.any(axis=1)) == 10


def test_frame_rate_examples():
    assert effective_frame_rate(timing(660, 220)) == pytest.approx(4545.4545454545, rel=1e-12)
    assert effective_frame_rate(timing(9.17, 9.17)) == pytest.approx(109051.25, rel=1e-6)
    assert effective_frame_rate(timing(1e6, 1e6)) == 1.0


def test_alias_free_flag():
    assert not is_alias_free(timing(220, 220))
    assert is_alias_free(timing(440, 220))
    assert is_alias_free(timing(660, 220))


def test_mode_parse_aliases():
    assert ShutterMode.parse("dual") is ShutterMode.ROLLING_DUAL
    assert ShutterMode.parse("Rolling-Single") is ShutterMode.ROLLING_SINGLE
    with pytest.raises(ValueError):
        ShutterMode.parse("sideways")


def test_capture_duration_and_period():
    t = timing(660, 220, m=90)
    assert t.capture_duration_us() == 89 * 220 + 660
    assert math.isinf(t.capture_period_us())
    assert t.replace(inter_capture_gap_us=1000).capture_period_us() == 89 * 220 + 1660


modes = st.sampled_from(["rolling_single", "rolling_dual", "global"])


@given(n_l=st.integers(1, 5), half=st.integers(1, 12), mode=modes,
       extra=st.integers(-3, 3))
def test_mask_matches_window_oracle(n_l, half, mode, extra):
    t = TimingConfig(n_l * 7.5, 7.5, mode, 2 * half)
    k = max(1, frames_per_capture(t) + extra)
    mask = build_shutter_mask(t.replace(num_frames=k))
    np.testing.assert_array_equal(mask.masks, mask_oracle(t.scan_index(), n_l, k))


@given(n_l=st.integers(1, 5), m=st.integers(1, 24))
def test_single_column_sums_and_monotone_scan(n_l, m):
    t = TimingConfig(n_l * 10.0, 10.0, "rolling_single", m)
    mask = build_shutter_mask(t)
    np.testing.assert_array_equal(mask.masks.sum(axis=0), n_l)
    firsts = [mask.active_frames(i)[0] for i in range(m)]
    np.testing.assert_array_equal(np.diff(firsts), 1)
    for i in range(m):
        run = mask.active_frames(i)
        np.testing.assert_array_equal(run, np.arange(run[0], run[0] + n_l))


@given(n_l=st.integers(1, 4), half=st.integers(1, 16), k=st.integers(1, 30))
def test_dual_symmetry(n_l, half, k):
    m = 2 * half
    mask = build_shutter_mask(TimingConfig(n_l * 5.0, 5.0, "dual", m, k))
    np.testing.assert_array_equal(mask.masks, mask.masks[:, ::-1])


@given(n_l=st.integers(1, 4), m=st.integers(1, 20), k=st.integers(1, 10))
def test_truncated_runs_never_wrap(n_l, m, k):
    mask = build_shutter_mask(TimingConfig(n_l * 1.0, 1.0, "rolling_single", m, k))
    for i in range(m):
        run = mask.active_frames(i)
        if run.size:
            assert run[0] == i
            assert np.all(np.diff(run) == 1)
            assert run.size == min(n_l, k - i)
        else:
            assert i >= k
