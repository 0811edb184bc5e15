from __future__ import annotations

import numpy as np
import pytest

import signal_utils
from signal_utils import (
    Combine,
    ForceRecording,
    ForceTrace,
    grip_force,
    median_filter,
    moving_average,
    read_recording,
    recording_force,
    synthesize_recording,
    travel_distance,
    write_recording,
)


# ---------------- Filters ---------------- #
def test_median_removes_an_isolated_spike():
    out = median_filter([0, 0, 10, 0, 0, 0, 0])
    assert out[2] == 0.0
    np.testing.assert_array_equal(out, np.zeros(7))


def test_median_edges_shrink_to_odd_windows():
    np.testing.assert_array_equal(median_filter([1, 2, 3, 4, 5]), [2, 2, 3, 4, 4])


def test_median_is_idempotent_on_steps():
    step = np.r_[np.zeros(20), np.ones(20)]
    once = median_filter(step)
    np.testing.assert_array_equal(once, step)
    np.testing.assert_array_equal(median_filter(once), once)


def test_median_rejects_even_or_oversized_windows():
    with pytest.raises(ValueError):
        median_filter(np.zeros(10), window=4)
    with pytest.raises(ValueError):
        median_filter(np.zeros(3), window=5)


@pytest.mark.parametrize("window", [1, 3, 7])
def test_median_window_as_long_as_the_trace(window):
    x = np.random.default_rng(window).normal(size=window)
    np.testing.assert_array_equal(median_filter(x, window), signal_utils.naive_median_filter(x, window))


def test_moving_average_is_valid_mode():
    out = moving_average(np.arange(12, dtype=float))
    np.testing.assert_allclose(out, [4.5, 5.5, 6.5])
    assert moving_average(np.ones(10)).tolist() == [1.0]
    with pytest.raises(ValueError):
        moving_average(np.ones(9))


def test_filters_match_naive_references():
    rng = np.random.default_rng(4)
    for _ in range(200):
        x = rng.normal(size=int(rng.integers(10, 80)))
        if rng.random() < 0.5:
            x = np.round(x, 1)
        assert median_filter(x).tolist() == signal_utils.naive_median_filter(x)
        assert moving_average(x).tolist() == signal_utils.naive_moving_average(x)


# ---------------- Grip force ---------------- #
def test_spiky_plateau_reads_the_plateau():
    plateau = np.full(240, 0.3)
    plateau[[40, 90, 150]] = 100.0
    assert grip_force(ForceTrace(tuple(plateau))) == 0.3


def test_clean_ramp_peaks_near_its_end():
    assert grip_force(np.linspace(0.0, 1.0, 240)) == pytest.approx(0.981, abs=1e-3)


def test_constant_trace_returns_the_constant():
    assert grip_force([0.5] * 30) == 0.5


def test_samples_below_the_peak_do_not_change_the_force():
    base = np.r_[np.zeros(20), np.full(40, 0.8), np.zeros(20)]
    assert grip_force(np.r_[base, np.full(30, 0.2)]) == grip_force(base)


def test_short_trace_is_rejected():
    with pytest.raises(ValueError):
        grip_force([1.0] * 9)


def test_recording_force_combines_cells():
    rec = ForceRecording(tuple(range(30)), (ForceTrace((0.4,) * 30), ForceTrace((0.6,) * 30)))
    assert recording_force(rec) == pytest.approx(0.5)
    assert recording_force(rec, Combine.MIN) == 0.4
    assert recording_force(rec, "sum") == pytest.approx(1.0)
    with pytest.raises(ValueError):
        recording_force(ForceRecording((), ()))


def test_synthesized_recording_recovers_its_force():
    rec = synthesize_recording(0.72, np.random.default_rng(0))
    assert len(rec.cells) == 2
    assert len(rec.t_s) == signal_utils.NOMINAL_SAMPLES
    assert max(rec.cells[0].samples) > 50
    assert recording_force(rec) == pytest.approx(0.72, rel=1e-12)


# ---------------- Trace files ---------------- #
def test_recording_file_round_trip(tmp_path):
    rec = synthesize_recording(0.5, np.random.default_rng(1), noise_std=0.01)
    path = tmp_path / "pull.csv"
    write_recording(rec, path)
    assert path.read_text().splitlines()[0] == "t_s,left_n,right_n"
    again = read_recording(path)
    assert again.cells[0].samples == rec.cells[0].samples
    assert again.cells[1].samples == rec.cells[1].samples
    assert again.rate_hz == pytest.approx(signal_utils.NOMINAL_RATE_HZ)


def test_single_cell_file(tmp_path):
    path = tmp_path / "one.csv"
    path.write_text("t_s,force_n\n" + "".join(f"{k / 80},{0.25}\n" for k in range(20)))
    rec = read_recording(path)
    assert len(rec.cells) == 1
    assert grip_force(rec.cells[0]) == 0.25


def test_bad_trace_header_is_rejected(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("time,force\n0,1\n")
    with pytest.raises(ValueError):
        read_recording(path)


def test_travel_distance():
    assert travel_distance((30.0, 40.0), (0.0, 0.0), 0.01) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        travel_distance((1.0, 1.0), (0.0, 0.0), 0.0)
