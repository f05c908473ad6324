"""Mimicked and mirrored training sets built from one session."""

from __future__ import annotations

import enum
import io
from dataclasses import dataclass

import numpy as np

from .core import N_DOF, SessionDataset
from .features import FeatureMatrix
from .humansim import rng_for

DEFAULT_MAX_LAG = 15


class Paradigm(str, enum.Enum):
    MIMICKED = "mimicked"
    MIRRORED = "mirrored"


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    paradigm: Paradigm
    t: np.ndarray
    features: np.ndarray  # (frames, n_features)
    labels: np.ndarray  # (frames, 8)
    applied_lag: int
    split: dict  # movement index -> {"train": [...], "test": [...]} trial indices within the movement
    frame_index: np.ndarray  # position of each frame on the session grid
    trial_id: np.ndarray  # session trial number per frame, -1 outside trial segments
    is_train: np.ndarray

    def __len__(self):
        return len(self.t)

    @property
    def test_mask(self) -> np.ndarray:
        return (self.trial_id >= 0) & ~self.is_train

    @property
    def train_mask(self) -> np.ndarray:
        return (self.trial_id >= 0) & self.is_train

    def to_csv(self) -> str:
        nf = self.features.shape[1]
        header = ["t"] + [f"f{i}" for i in range(nf)] + [f"k{i}" for i in range(N_DOF)] + ["trial_id", "is_train"]
        table = np.column_stack([self.t, self.features, self.labels, self.trial_id, self.is_train.astype(int)])
        fmt = ["%.9g"] * (1 + nf + N_DOF) + ["%d", "%d"]
        buf = io.StringIO()
        np.savetxt(buf, table, fmt=fmt, delimiter=",", header=",".join(header), comments="")
        return buf.getvalue()


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    a = a - a.mean()
    b = b - b.mean()
    den = np.sqrt(np.dot(a, a) * np.dot(b, b))
    return float(np.dot(a, b) / den) if den > 0 else 0.0


def lag_scores(labels: np.ndarray, features: np.ndarray, max_lag: int = DEFAULT_MAX_LAG) -> dict:
    """Summed per-DOF correlation of |label| delayed by L against the mean standardized feature."""
    labels = np.abs(np.asarray(labels, dtype=float))
    f = np.asarray(features, dtype=float)
    if labels.shape[0] != f.shape[0]:
        raise ValueError("labels and features must share the frame grid")
    sd = f.std(axis=0)
    live = sd > 0
    if not live.any():
        raise ValueError("all features are constant; correlation undefined")
    trace = ((f[:, live] - f[:, live].mean(axis=0)) / sd[live]).mean(axis=1)
    dofs = [d for d in range(labels.shape[1]) if np.ptp(labels[:, d]) > 0]
    if not dofs:
        raise ValueError("labels are constant; correlation undefined")
    n = len(trace)
    if max_lag >= n - 1:
        raise ValueError("lag window longer than the recording")
    scores = {}
    for lag in range(-max_lag, max_lag + 1):
        # label frame t - lag is paired with feature frame t
        if lag >= 0:
            lab, tr = labels[:n - lag], trace[lag:]
        else:
            lab, tr = labels[-lag:], trace[:n + lag]
        scores[lag] = sum(_pearson(lab[:, d], tr) for d in dofs)
    return scores


def estimate_alignment_lag(labels, features, max_lag: int = DEFAULT_MAX_LAG) -> int:
    """Lag in frames by which the features trail the labels.

    Ties go to the smaller |lag|, then to the negative lag.
    """
    if isinstance(features, FeatureMatrix):
        features = features.values
    if hasattr(labels, "angles"):
        labels = labels.angles
    scores = lag_scores(labels, features, max_lag)
    best = max(scores.values())
    tied = [lag for lag, s in scores.items() if s >= best - 1e-12 * max(1.0, abs(best))]
    return min(tied, key=lambda lag: (abs(lag), lag))


def draw_split(n_movements: int, trials_per_movement: int, split_seed: int) -> dict:
    split = {}
    for m in range(n_movements):
        order = rng_for(split_seed, "split", m).permutation(trials_per_movement)
        half = trials_per_movement // 2
        split[m] = {"train": sorted(int(i) for i in order[:half]),
                    "test": sorted(int(i) for i in order[half:])}
    return split


def build_dataset(session: SessionDataset, paradigm, features: FeatureMatrix, split_seed: int,
                  lag: int | None = None, max_lag: int = DEFAULT_MAX_LAG) -> LabeledDataset:
    paradigm = Paradigm(paradigm)
    n = len(session.frame_times)
    if features.values.shape[0] != n or not np.array_equal(features.t, session.frame_times):
        raise ValueError("features must be on the session's frame grid")
    if paradigm is Paradigm.MIMICKED:
        source = session.virtual.angles
        if lag is None:
            lag = estimate_alignment_lag(source, features.values, max_lag)
    else:
        source = session.contralateral.angles
        lag = 0
    if abs(lag) >= n:
        raise ValueError(f"lag {lag} exceeds the stream length {n}")
    # feature frame i carries label frame i - lag; frames without a partner are dropped
    idx = np.arange(max(lag, 0), n + min(lag, 0))
    labels = source[idx - lag].astype(float)

    per_mov = {}
    for tr in session.trials:
        per_mov[tr.movement_index] = max(per_mov.get(tr.movement_index, 0), tr.trial_index + 1)
    counts = set(per_mov.values())
    if len(counts) != 1:
        raise ValueError("every movement needs the same number of trials")
    split = draw_split(len(session.catalog), counts.pop(), split_seed)
    train_trials = np.array([tr.trial_index in split[tr.movement_index]["train"] for tr in session.trials])

    trial_id = session.trial_ids()[idx]
    is_train = np.zeros(len(idx), dtype=bool)
    inside = trial_id >= 0
    is_train[inside] = train_trials[trial_id[inside]]
    return LabeledDataset(
        paradigm=paradigm,
        t=features.t[idx],
        features=features.values[idx],
        labels=labels,
        applied_lag=int(lag),
        split=split,
        frame_index=idx,
        trial_id=trial_id,
        is_train=is_train,
    )
