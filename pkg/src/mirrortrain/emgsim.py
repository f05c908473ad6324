"""Forward model from True kinematics to 32-channel surface EMG at 1 kHz.

Each sample is amplitude-modulated white noise, so the expected rectified
value of a channel is ``sqrt(2/pi)`` times its envelope.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import EMG_RATE, FRAME_RATE, N_DOF, N_EMG_CHANNELS, EmgBlock, KinematicStream, emg_sample_count
from .humansim import rng_for

N_DIRECTIONS = 2 * N_DOF


def default_synergy_matrix(strong: float = 1.0, weak: float = 0.05) -> np.ndarray:
    """Two dedicated channels per DOF-direction plus a weak common drive."""
    s = np.full((N_EMG_CHANNELS, N_DIRECTIONS), weak)
    for u in range(N_DIRECTIONS):
        s[2 * u, u] = strong
        s[2 * u + 1, u] = strong
    return s


@dataclass(frozen=True)
class EmgModelParams:
    synergy_matrix: tuple = field(default_factory=lambda: tuple(map(tuple, default_synergy_matrix())))
    baseline_noise: float = 0.1
    activation_gain: float = 1.0
    seed: int = 0

    def __post_init__(self):
        s = np.asarray(self.synergy_matrix, dtype=float)
        if s.shape != (N_EMG_CHANNELS, N_DIRECTIONS):
            raise ValueError(f"synergy_matrix must be {N_EMG_CHANNELS}x{N_DIRECTIONS}")
        if np.any(s < 0) or self.activation_gain < 0:
            raise ValueError("EMG gains must be non-negative")
        if not self.baseline_noise > 0:
            raise ValueError("baseline_noise must be positive")
        object.__setattr__(self, "synergy_matrix", tuple(map(tuple, s.tolist())))

    @property
    def synergy(self) -> np.ndarray:
        return np.array(self.synergy_matrix)

    def to_dict(self) -> dict:
        return {
            "synergy_matrix": [list(r) for r in self.synergy_matrix],
            "baseline_noise": self.baseline_noise,
            "activation_gain": self.activation_gain,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EmgModelParams":
        d = dict(d)
        if "synergy_matrix" in d:
            d["synergy_matrix"] = tuple(tuple(float(x) for x in r) for r in d["synergy_matrix"])
        return cls(**d)


def rectified_velocity(stream: KinematicStream) -> np.ndarray:
    """(frames, 16) direction-split velocity; column 2i is +DOF i, 2i+1 is -DOF i."""
    x = stream.angles.astype(float)
    v = np.zeros_like(x)
    v[1:] = np.diff(x, axis=0) * FRAME_RATE
    u = np.empty((len(x), N_DIRECTIONS))
    u[:, 0::2] = np.maximum(v, 0.0)
    u[:, 1::2] = np.maximum(-v, 0.0)
    return u


def emg_envelope(stream: KinematicStream, params: EmgModelParams, rate: int = EMG_RATE) -> np.ndarray:
    """Per-sample standard deviation of every channel, (samples, 32)."""
    u = rectified_velocity(stream)
    duration = len(stream) / FRAME_RATE
    n = emg_sample_count(duration, rate)
    ts = stream.t[0] + np.arange(n) / rate
    up = np.empty((n, N_DIRECTIONS))
    for c in range(N_DIRECTIONS):
        up[:, c] = np.interp(ts, stream.t, u[:, c])
    activation = up @ params.synergy.T
    return params.activation_gain * activation + params.baseline_noise


def synthesize_emg(true_stream: KinematicStream, params: EmgModelParams) -> EmgBlock:
    env = emg_envelope(true_stream, params)
    out = np.empty(env.shape, dtype=np.float32)
    for ch in range(env.shape[1]):
        noise = rng_for(params.seed, "emg", ch).standard_normal(env.shape[0])
        out[:, ch] = env[:, ch] * noise
    return EmgBlock(out, EMG_RATE, float(true_stream.t[0]))
