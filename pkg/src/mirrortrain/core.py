"""Domain types and normalization conventions shared across the toolkit.

Joint angles are stored normalized to [-1, +1]: 0 is the nominal rest
posture, +1 / -1 the ends of the range of motion.  A deviation of the full
span (2 normalized units) is 100 %.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

FRAME_RATE = 30.0
EMG_RATE = 1000
N_DOF = 8
N_EMG_CHANNELS = 32
SPAN = 2.0


class Dof(enum.IntEnum):
    D1_ABDUCTION = 0
    D1_FLEXION = 1
    D2_FLEXION = 2
    D3_FLEXION = 3
    D4_FLEXION = 4
    D5_FLEXION = 5
    WRIST_FLEXION = 6
    WRIST_PRONATION = 7


DOF_LABELS = (
    "D1 abduction/adduction",
    "D1 flexion/extension",
    "D2 flexion/extension",
    "D3 flexion/extension",
    "D4 flexion/extension",
    "D5 flexion/extension",
    "wrist flexion/extension",
    "wrist pronation/supination",
)


class Source(str, enum.Enum):
    TRUE = "true"
    CONTRALATERAL = "contralateral"
    VIRTUAL = "virtual"


class RangeWarning(UserWarning):
    pass


def normalize_angle(raw: float, rom: Sequence[float], rest_deg: float) -> float:
    """Map a raw angle in degrees onto [-1, 1], piecewise linear around rest.

    Values outside the range of motion are clamped and a RangeWarning is
    emitted.
    """
    lo, hi = float(rom[0]), float(rom[1])
    if not lo < rest_deg < hi:
        raise ValueError(f"rest {rest_deg} must lie strictly inside ROM [{lo}, {hi}]")
    if raw > hi or raw < lo:
        warnings.warn(f"angle {raw} outside ROM [{lo}, {hi}], clamped", RangeWarning, stacklevel=2)
        raw = min(max(raw, lo), hi)
    if raw >= rest_deg:
        return (raw - rest_deg) / (hi - rest_deg)
    return (raw - rest_deg) / (rest_deg - lo)


def denormalize_angle(pos: float, rom: Sequence[float], rest_deg: float) -> float:
    lo, hi = float(rom[0]), float(rom[1])
    if pos >= 0:
        return rest_deg + pos * (hi - rest_deg)
    return rest_deg + pos * (rest_deg - lo)


def deviation_percent(pos, rest):
    """Absolute deviation as percent of the full normalized span.

    Works elementwise on arrays.
    """
    return np.abs(np.asarray(pos, dtype=float) - np.asarray(rest, dtype=float)) * (100.0 / SPAN)


def frame_times(n_frames: int, t0: float = 0.0, rate: float = FRAME_RATE) -> np.ndarray:
    return t0 + np.arange(n_frames, dtype=float) / rate


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class KinematicFrame:
    t: float
    angles: np.ndarray
    source: Source
    clamped: bool = False


@dataclass(frozen=True, eq=False)
class KinematicStream:
    """A 30 Hz sequence of 8-DOF normalized positions from one source.

    Angles are float32 so the 9-significant-digit CSV format round-trips
    exactly.
    """

    t: np.ndarray
    angles: np.ndarray
    source: Source

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        a = np.asarray(self.angles, dtype=np.float32)
        if a.ndim != 2 or a.shape[1] != N_DOF:
            raise ValueError(f"angles must be (n, {N_DOF}), got {a.shape}")
        if t.shape != (a.shape[0],):
            raise ValueError("t and angles length mismatch")
        if len(t) > 1:
            dt = np.diff(t)
            if np.any(dt <= 0):
                raise ValueError("frame times must be strictly increasing")
            if not np.allclose(dt, 1.0 / FRAME_RATE, rtol=0, atol=1e-9):
                raise ValueError("frame period must be 1/30 s")
        if not np.all(np.isfinite(a)) or np.any(np.abs(a) > 1.0):
            raise ValueError("angles must be finite and within [-1, 1]")
        object.__setattr__(self, "t", _frozen(t))
        object.__setattr__(self, "angles", _frozen(a))
        object.__setattr__(self, "source", Source(self.source))

    def __len__(self):
        return len(self.t)

    def frame(self, i: int) -> KinematicFrame:
        return KinematicFrame(float(self.t[i]), self.angles[i], self.source)

    def window(self, t0: float, t1: float, closed: bool = False) -> slice:
        """Frame slice for [t0, t1), or [t0, t1] when ``closed``."""
        tol = 1e-6 / FRAME_RATE
        start = int(np.searchsorted(self.t, t0 - tol, side="left"))
        if closed:
            stop = int(np.searchsorted(self.t, t1 + tol, side="right"))
        else:
            stop = int(np.searchsorted(self.t, t1 - tol, side="left"))
        return slice(start, stop)

    def shifted(self, dt: float) -> "KinematicStream":
        return KinematicStream(self.t + dt, self.angles, self.source)

    def equals(self, other: "KinematicStream") -> bool:
        return (
            self.source == other.source
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.angles, other.angles)
        )


@dataclass(frozen=True)
class MovementSpec:
    name: str
    target_dofs: tuple  # of (Dof, direction) pairs
    peak_amplitude: float = 1.0

    def __post_init__(self):
        targets = tuple((Dof(d), int(s)) for d, s in self.target_dofs)
        if not targets:
            raise ValueError(f"movement {self.name!r} has no target DOF")
        if any(s not in (-1, 1) for _, s in targets):
            raise ValueError(f"movement {self.name!r}: directions must be +1 or -1")
        if len({d for d, _ in targets}) != len(targets):
            raise ValueError(f"movement {self.name!r}: duplicate target DOF")
        if not 0 < self.peak_amplitude <= 1:
            raise ValueError(f"movement {self.name!r}: peak_amplitude must be in (0, 1]")
        object.__setattr__(self, "target_dofs", targets)

    @property
    def dofs(self) -> list[int]:
        return [int(d) for d, _ in self.target_dofs]

    @property
    def direction_vector(self) -> np.ndarray:
        v = np.zeros(N_DOF)
        for d, s in self.target_dofs:
            v[int(d)] = s
        return v

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "target_dofs": [[int(d), s] for d, s in self.target_dofs],
            "peak_amplitude": self.peak_amplitude,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MovementSpec":
        return cls(d["name"], tuple(tuple(x) for x in d["target_dofs"]), float(d.get("peak_amplitude", 1.0)))


@dataclass(frozen=True)
class TrialRecord:
    movement_index: int
    trial_index: int
    t_start: float
    t_end: float
    preceding_iti: tuple

    @property
    def segment(self) -> tuple:
        """Preceding ITI plus the trial itself, [iti_start, t_end)."""
        return (self.preceding_iti[0], self.t_end)

    def to_dict(self) -> dict:
        return {
            "movement_index": self.movement_index,
            "trial_index": self.trial_index,
            "t_start": self.t_start,
            "t_end": self.t_end,
            "preceding_iti": list(self.preceding_iti),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrialRecord":
        return cls(int(d["movement_index"]), int(d["trial_index"]), float(d["t_start"]),
                   float(d["t_end"]), tuple(float(x) for x in d["preceding_iti"]))


@dataclass(frozen=True, eq=False)
class EmgBlock:
    samples: np.ndarray  # (n_samples, channels) float32
    sample_rate: int = EMG_RATE
    t0: float = 0.0

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float32)
        if s.ndim != 2:
            raise ValueError("EMG samples must be (n_samples, channels)")
        if not np.all(np.isfinite(s)):
            raise ValueError("EMG samples must be finite")
        object.__setattr__(self, "samples", _frozen(s))

    @property
    def channels(self) -> int:
        return self.samples.shape[1]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    def equals(self, other: "EmgBlock") -> bool:
        return (self.sample_rate == other.sample_rate and self.t0 == other.t0
                and np.array_equal(self.samples, other.samples))


def emg_sample_count(duration: float, rate: int = EMG_RATE) -> int:
    # round before ceil so 480.0000000001 s does not gain a sample
    return int(math.ceil(round(duration * rate, 6)))


@dataclass(frozen=True, eq=False)
class SessionDataset:
    participant_id: str
    seed: int
    catalog: tuple  # of MovementSpec
    trials: tuple  # of TrialRecord
    streams: dict  # Source -> KinematicStream
    emg: Optional[EmgBlock]
    baseline_rest_window: tuple
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "catalog", tuple(self.catalog))
        object.__setattr__(self, "trials", tuple(self.trials))
        streams = {Source(k): v for k, v in self.streams.items()}
        object.__setattr__(self, "streams", streams)
        ref = None
        for s in streams.values():
            if ref is None:
                ref = s.t
            elif not np.array_equal(ref, s.t):
                raise ValueError("all kinematic streams must share frame timestamps")
        for a, b in zip(self.trials, self.trials[1:]):
            if b.t_start < a.t_end:
                raise ValueError("trials must be sorted and non-overlapping")

    @property
    def true(self) -> KinematicStream:
        return self.streams[Source.TRUE]

    @property
    def contralateral(self) -> KinematicStream:
        return self.streams[Source.CONTRALATERAL]

    @property
    def virtual(self) -> KinematicStream:
        return self.streams[Source.VIRTUAL]

    @property
    def frame_times(self) -> np.ndarray:
        return next(iter(self.streams.values())).t

    def movement(self, trial: TrialRecord) -> MovementSpec:
        return self.catalog[trial.movement_index]

    def trial_ids(self) -> np.ndarray:
        """Per-frame index of the trial segment (preceding ITI + trial); -1 outside."""
        t = self.frame_times
        ids = np.full(len(t), -1, dtype=int)
        stream = next(iter(self.streams.values()))
        for k, tr in enumerate(self.trials):
            ids[stream.window(*tr.segment)] = k
        return ids

    def equals(self, other: "SessionDataset") -> bool:
        if (self.participant_id, self.seed, self.catalog, self.trials, self.baseline_rest_window) != (
            other.participant_id, other.seed, other.catalog, other.trials, other.baseline_rest_window
        ):
            return False
        if set(self.streams) != set(other.streams):
            return False
        if not all(self.streams[k].equals(other.streams[k]) for k in self.streams):
            return False
        if (self.emg is None) != (other.emg is None):
            return False
        return self.emg is None or self.emg.equals(other.emg)
