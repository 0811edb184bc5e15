"""
Grip-force extraction from load-cell traces.

Median filter (window 5) then the peak of a 10-sample moving average, per cell.
Traces are CSV files with header "t_s,left_n,right_n" (or "t_s,force_n").
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

logger = logging.getLogger(__name__)

NOMINAL_RATE_HZ = 80.0
NOMINAL_SAMPLES = 240
MEDIAN_WINDOW = 5
AVERAGE_WINDOW = 10


class Combine(str, Enum):
    MEAN = "mean"
    MIN = "min"
    SUM = "sum"


@dataclass(frozen=True)
class ForceTrace:
    samples: Tuple[float, ...]
    rate_hz: float = NOMINAL_RATE_HZ

    def __post_init__(self) -> None:
        samples = tuple(float(v) for v in self.samples)
        if not all(math.isfinite(v) for v in samples):
            raise ValueError("force samples must be finite")
        object.__setattr__(self, "samples", samples)


@dataclass(frozen=True)
class ForceRecording:
    t_s: Tuple[float, ...]
    cells: Tuple[ForceTrace, ...]

    @property
    def rate_hz(self) -> float:
        return self.cells[0].rate_hz if self.cells else NOMINAL_RATE_HZ


def median_filter(x: Sequence[float], window: int = MEDIAN_WINDOW) -> np.ndarray:
    """Centered running median of the same length as `x`.

    Near the edges the window shrinks to the available samples; when that
    leaves an even count, the sample farthest from the centre is dropped so
    every output is an actual input value.
    """
    arr = np.asarray(x, dtype=float)
    if window % 2 == 0 or window < 1:
        raise ValueError(f"median window must be a positive odd integer, got {window}")
    n = arr.size
    if window > n:
        raise ValueError(f"median window {window} exceeds trace length {n}")
    half = window // 2
    out = np.empty(n)
    out[half : n - half] = np.median(sliding_window_view(arr, window), axis=1)
    for i in list(range(half)) + list(range(n - half, n)):
        lo, hi = max(0, i - half), min(n, i + half + 1)
        if (hi - lo) % 2 == 0:
            # One side is truncated; drop the far end of the other side.
            if i - lo > hi - 1 - i:
                lo += 1
            else:
                hi -= 1
        out[i] = np.median(arr[lo:hi])
    return out


def moving_average(x: Sequence[float], window: int = AVERAGE_WINDOW) -> np.ndarray:
    """Valid-mode moving average of length len(x) - window + 1 (exactly rounded sums)."""
    arr = np.asarray(x, dtype=float)
    if window < 1:
        raise ValueError("average window must be >= 1")
    if window > arr.size:
        raise ValueError(f"average window {window} exceeds trace length {arr.size}")
    return np.fromiter((math.fsum(row) for row in sliding_window_view(arr, window)), dtype=float) / window


def grip_force(trace: ForceTrace | Sequence[float]) -> float:
    samples = trace.samples if isinstance(trace, ForceTrace) else trace
    if len(samples) < AVERAGE_WINDOW:
        raise ValueError(f"trace needs at least {AVERAGE_WINDOW} samples, got {len(samples)}")
    return float(np.max(moving_average(median_filter(samples, MEDIAN_WINDOW), AVERAGE_WINDOW)))


def recording_force(recording: ForceRecording, combine: Combine | str = Combine.MEAN) -> float:
    """Run the pipeline per cell and combine the per-cell peaks."""
    if not recording.cells:
        raise ValueError("recording has no load-cell traces")
    peaks = [grip_force(cell) for cell in recording.cells]
    mode = Combine(combine)
    if mode is Combine.MEAN:
        return float(np.mean(peaks))
    if mode is Combine.MIN:
        return float(min(peaks))
    return float(math.fsum(peaks))


def travel_distance(centroid_px: Tuple[float, float], origin_px: Tuple[float, float], meters_per_px: float) -> float:
    if not meters_per_px > 0:
        raise ValueError("meters_per_px must be positive")
    return math.hypot(centroid_px[0] - origin_px[0], centroid_px[1] - origin_px[1]) * meters_per_px


# ---------------- Trace files ---------------- #
def read_recording(path: Path | str) -> ForceRecording:
    path = Path(path)
    with path.open(newline="") as fp:
        reader = csv.reader(fp)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration as exc:
            raise ValueError(f"{path}: empty trace file") from exc
        if header == ["t_s", "left_n", "right_n"]:
            n_cells = 2
        elif header == ["t_s", "force_n"]:
            n_cells = 1
        else:
            raise ValueError(f"{path}: unexpected trace header {header}")
        rows = [[float(v) for v in row] for row in reader if row]
    if any(len(row) != n_cells + 1 for row in rows):
        raise ValueError(f"{path}: every row needs {n_cells + 1} columns")
    times = tuple(row[0] for row in rows)
    rate = NOMINAL_RATE_HZ
    if len(times) > 1 and times[-1] > times[0]:
        rate = (len(times) - 1) / (times[-1] - times[0])
    cells = tuple(ForceTrace(tuple(row[k + 1] for row in rows), rate) for k in range(n_cells))
    return ForceRecording(times, cells)


def write_recording(recording: ForceRecording, path: Path | str) -> None:
    header = ["t_s", "left_n", "right_n"] if len(recording.cells) == 2 else ["t_s", "force_n"]
    with Path(path).open("w", newline="") as fp:
        writer = csv.writer(fp, lineterminator="\n")
        writer.writerow(header)
        for k, t in enumerate(recording.t_s):
            writer.writerow([repr(t)] + [repr(cell.samples[k]) for cell in recording.cells])


def synthesize_recording(
    force: float,
    rng: np.random.Generator,
    noise_std: float = 0.0,
    n_samples: int = NOMINAL_SAMPLES,
    rate_hz: float = NOMINAL_RATE_HZ,
    spikes_per_cell: int = 3,
    spike_height: float = 100.0,
) -> ForceRecording:
    """Two-cell pull test: ramp to `force`, hold, release; isolated spikes on the plateau."""
    ramp_end, hold_end = n_samples // 4, (3 * n_samples) // 4
    profile = np.zeros(n_samples)
    profile[:ramp_end] = np.linspace(0.0, force, ramp_end, endpoint=False)
    profile[ramp_end:hold_end] = force
    profile[hold_end:] = np.linspace(force, 0.0, n_samples - hold_end)
    # Spikes sit at least MEDIAN_WINDOW apart so the median filter removes each one.
    slots = np.arange(ramp_end + MEDIAN_WINDOW, hold_end - MEDIAN_WINDOW, MEDIAN_WINDOW)
    cells = []
    for _ in range(2):
        samples = profile.copy()
        if noise_std > 0:
            samples += rng.normal(0.0, noise_std, size=n_samples)
        if spikes_per_cell and slots.size:
            chosen = rng.choice(slots, size=min(spikes_per_cell, slots.size), replace=False)
            samples[chosen] += spike_height
        cells.append(ForceTrace(tuple(samples), rate_hz))
    times = tuple(float(k) / rate_hz for k in range(n_samples))
    return ForceRecording(times, tuple(cells))


def naive_median_filter(x: Sequence[float], window: Optional[int] = None) -> list:
    """O(n*w) reference for `median_filter`, used by the self-test."""
    window = window or MEDIAN_WINDOW
    values = [float(v) for v in x]
    n, half = len(values), window // 2
    out = []
    for i in range(n):
        lo, hi = max(0, i - half), min(n, i + half + 1)
        if (hi - lo) % 2 == 0:
            if i - lo > hi - 1 - i:
                lo += 1
            else:
                hi -= 1
        out.append(sorted(values[lo:hi])[(hi - lo) // 2])
    return out


def naive_moving_average(x: Sequence[float], window: Optional[int] = None) -> list:
    window = window or AVERAGE_WINDOW
    values = [float(v) for v in x]
    return [math.fsum(values[i : i + window]) / window for i in range(len(values) - window + 1)]
