"""Smoothed mean-absolute-value features on single-ended and differential channels."""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .core import EmgBlock

WINDOW_S = 0.300


def differential_pairs(n: int) -> list[tuple[int, int]]:
    if n < 1:
        raise ValueError("channel count must be >= 1")
    return [(i, j) for i in range(n) for j in range(i + 1, n)]


def channel_map(n: int) -> list:
    return list(range(n)) + differential_pairs(n)


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    t: np.ndarray
    values: np.ndarray  # (frames, n + n(n-1)/2)
    channel_map: list

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def to_csv(self) -> str:
        names = [f"ch{c}" if isinstance(c, int) else f"ch{c[0]}-ch{c[1]}" for c in self.channel_map]
        buf = io.StringIO()
        np.savetxt(buf, np.column_stack([self.t, self.values]), fmt="%.9g", delimiter=",",
                   header="t," + ",".join(names), comments="")
        return buf.getvalue()


def window_bounds(emg: EmgBlock, frame_times, window: float = WINDOW_S):
    """Sample index bounds so that frame k averages samples lo[k] < s <= hi[k]."""
    rel = (np.asarray(frame_times, dtype=float) - emg.t0) * emg.sample_rate
    hi = np.floor(rel + 1e-6).astype(np.int64)
    lo = np.floor(rel - window * emg.sample_rate + 1e-6).astype(np.int64)
    lo = np.maximum(lo, -1)
    if np.any(hi >= emg.n_samples):
        raise ValueError("frame times extend past the end of the EMG block")
    if np.any(hi <= lo):
        raise ValueError("empty MAV window (frame precedes the EMG block)")
    return lo, hi


def _cut_points(lo, hi, n_samples):
    cuts = np.unique(np.concatenate([[0], lo + 1, hi + 1]))
    return cuts[cuts < n_samples], np.searchsorted(cuts, lo + 1), np.searchsorted(cuts, hi + 1)


def _window_means(rect: np.ndarray, lo, hi, cuts) -> np.ndarray:
    """Window means of channel-major ``rect`` (channels, samples) -> (frames, channels)."""
    # prefix sums are only needed at window edges: sum the segments between them
    starts, i_lo, i_hi = cuts
    prefix = np.zeros((rect.shape[0], len(starts) + 1))
    np.cumsum(np.add.reduceat(rect, starts, axis=1), axis=1, out=prefix[:, 1:])
    return ((prefix[:, i_hi] - prefix[:, i_lo]) / (hi - lo)).T


def extract_features(emg: EmgBlock, frame_times, window: float = WINDOW_S) -> FeatureMatrix:
    """Causal rectangular MAV over (T - window, T] at every frame time T."""
    lo, hi = window_bounds(emg, frame_times, window)
    x = np.ascontiguousarray(emg.samples.T, dtype=np.float64)
    n = x.shape[0]
    out = np.empty((len(lo), n + n * (n - 1) // 2))
    cuts = _cut_points(lo, hi, x.shape[1])
    out[:, :n] = _window_means(np.abs(x), lo, hi, cuts)
    col = n
    for i in range(n - 1):
        block = np.abs(x[i + 1:] - x[i])
        out[:, col:col + block.shape[0]] = _window_means(block, lo, hi, cuts)
        col += block.shape[0]
    return FeatureMatrix(np.asarray(frame_times, dtype=float).copy(), out, channel_map(n))
