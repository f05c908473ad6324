"""Synthetic True and Contralateral kinematics.

The True hand follows the virtual hand with a reaction delay, a per-trial
gain, a linear leak of the target profile into the other DOFs and a slowly
wandering rest posture.  The Contralateral hand mirrors the True hand with a
two-sided timing jitter and an amplitude error.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .core import N_DOF, KinematicStream, Source
from .protocol import TrialTimingParams, profile_array

PURPOSES = {
    "delay": 1,
    "gain": 2,
    "drift": 3,
    "tracker_true": 4,
    "jitter": 5,
    "mirror_magnitude": 6,
    "mirror_offset": 7,
    "tracker_contralateral": 8,
    "emg": 9,
    "split": 10,
}


def rng_for(seed: int, purpose: str, index: int = 0) -> np.random.Generator:
    """Independent Philox stream for (seed, purpose, index)."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(PURPOSES[purpose], int(index)))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class ImperfectionParams:
    coupling_matrix: tuple = field(default_factory=lambda: tuple(map(tuple, np.eye(N_DOF))))
    drift_step_sigma: float = 0.0
    drift_clamp: float = 0.5
    reaction_delay_mean: float = 0.0
    reaction_delay_sd: float = 0.0
    magnitude_gain_mean: float = 1.0
    magnitude_gain_sd: float = 0.0
    tracker_noise_sigma: float = 0.0
    mirror_timing_jitter_sd: float = 0.0
    mirror_magnitude_sd: float = 0.0
    mirror_rest_offset_sd: float = 0.0

    def __post_init__(self):
        c = np.asarray(self.coupling_matrix, dtype=float)
        if c.shape != (N_DOF, N_DOF):
            raise ValueError(f"coupling_matrix must be {N_DOF}x{N_DOF}")
        if not np.all(np.diag(c) == 1.0):
            raise ValueError("coupling_matrix diagonal must be 1")
        off = c[~np.eye(N_DOF, dtype=bool)]
        if np.any(off < 0) or np.any(off >= 1):
            raise ValueError("coupling_matrix off-diagonal entries must lie in [0, 1)")
        object.__setattr__(self, "coupling_matrix", tuple(map(tuple, c.tolist())))
        for name in ("drift_step_sigma", "drift_clamp", "reaction_delay_sd", "magnitude_gain_sd",
                     "tracker_noise_sigma", "mirror_timing_jitter_sd", "mirror_magnitude_sd",
                     "mirror_rest_offset_sd", "reaction_delay_mean"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @property
    def coupling(self) -> np.ndarray:
        return np.array(self.coupling_matrix)

    @classmethod
    def uniform_coupling(cls, leak: float, **kw) -> "ImperfectionParams":
        c = np.full((N_DOF, N_DOF), float(leak))
        np.fill_diagonal(c, 1.0)
        return cls(coupling_matrix=tuple(map(tuple, c)), **kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["coupling_matrix"] = [list(r) for r in self.coupling_matrix]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ImperfectionParams":
        d = dict(d)
        if "coupling_matrix" in d:
            d["coupling_matrix"] = tuple(tuple(float(x) for x in r) for r in d["coupling_matrix"])
        return cls(**d)


@dataclass
class TrialTruth:
    delay: float
    gain: float
    direction: list  # per-DOF signed weight of the movement profile
    coupling_peaks: dict  # non-target DOF -> realized peak |leak|
    rest_offset: list  # True rest offset in effect from this trial's preceding ITI
    truncated: bool = False
    mirror_jitter: float = 0.0
    mirror_magnitude: float = 0.0
    mirror_rest_offset: list = field(default_factory=lambda: [0.0] * N_DOF)


@dataclass
class GroundTruthLog:
    trials: list

    def to_dict(self) -> dict:
        out = []
        for t in self.trials:
            d = asdict(t)
            d["coupling_peaks"] = {str(k): v for k, v in t.coupling_peaks.items()}
            out.append(d)
        return {"trials": out}

    @classmethod
    def from_dict(cls, d: dict) -> "GroundTruthLog":
        trials = []
        for t in d["trials"]:
            t = dict(t)
            t["coupling_peaks"] = {int(k): v for k, v in t["coupling_peaks"].items()}
            trials.append(TrialTruth(**t))
        return cls(trials)


def movement_weights(movement, coupling: np.ndarray) -> np.ndarray:
    """Per-DOF weight of the profile: +-1 on targets, leak on the rest.

    Leaks into a non-target DOF from several targets are averaged so the
    row entries stay the leak fraction of the target peak.
    """
    w = np.zeros(N_DOF)
    dofs = movement.dofs
    for d, s in movement.target_dofs:
        w += s * coupling[int(d)]
    w /= len(dofs)
    for d, s in movement.target_dofs:
        w[int(d)] = s
    return w


def _frame_index(stream: KinematicStream, t: float) -> int:
    return int(round((t - stream.t[0]) * 30.0))


def _add_movement(out, stream, tr, weights, amplitude, shift, timing, lo, hi, peak):
    """Add amplitude * weights * profile(t - t_start - shift) on frames [lo, hi)."""
    s0 = _frame_index(stream, tr.t_start)
    lo = max(lo, 0)
    hi = min(hi, len(out))
    if hi <= lo:
        return
    rel = (np.arange(lo, hi) - s0) / 30.0 - shift
    shape = profile_array(rel, timing, peak)
    out[lo:hi] += amplitude * np.outer(shape, weights)


def _noise(stream, trials, sigma, seed, purpose):
    n = len(stream)
    noise = np.zeros((n, N_DOF))
    if sigma == 0:
        return noise
    bounds = [0] + [_frame_index(stream, tr.preceding_iti[0]) for tr in trials] + [n]
    for k, (a, b) in enumerate(zip(bounds[:-1], bounds[1:])):
        noise[a:b] = rng_for(seed, purpose, k).normal(0.0, sigma, size=(b - a, N_DOF))
    return noise


def _piecewise_offsets(stream, trials, offsets):
    """Rest offset per frame; offsets[k] holds from trial k's ITI to the next ITI."""
    out = np.zeros((len(stream), N_DOF))
    starts = [_frame_index(stream, tr.preceding_iti[0]) for tr in trials] + [len(stream)]
    for k in range(len(trials)):
        out[starts[k]:starts[k + 1]] = offsets[k]
    return out


def simulate_true_stream(virtual: KinematicStream, trials, catalog, params: ImperfectionParams,
                         rng_seed: int, timing: TrialTimingParams = TrialTimingParams()):
    """Return (True stream, GroundTruthLog)."""
    coupling = params.coupling
    n = len(virtual)
    move = np.zeros((n, N_DOF))
    offsets = np.zeros((len(trials), N_DOF))
    log = []
    window = timing.duration + timing.iti
    for k, tr in enumerate(trials):
        mv = catalog[tr.movement_index]
        d = rng_for(rng_seed, "delay", k).normal(params.reaction_delay_mean, params.reaction_delay_sd)
        d = max(0.0, float(d))
        g = rng_for(rng_seed, "gain", k).normal(params.magnitude_gain_mean, params.magnitude_gain_sd)
        g = max(0.0, float(g))
        if k > 0:
            step = rng_for(rng_seed, "drift", k).normal(0.0, params.drift_step_sigma, size=N_DOF)
            offsets[k] = np.clip(offsets[k - 1] + step, -params.drift_clamp, params.drift_clamp)
        w = movement_weights(mv, coupling)
        s0 = _frame_index(virtual, tr.t_start)
        _add_movement(move, virtual, tr, w, g, d, timing, s0, s0 + int(round(window * 30)), mv.peak_amplitude)
        truncated = d + timing.ramp_up > window
        nontarget = [j for j in range(N_DOF) if j not in mv.dofs]
        seg = move[s0:s0 + int(round(window * 30))]
        log.append(TrialTruth(
            delay=d,
            gain=g,
            direction=w.tolist(),
            coupling_peaks={j: float(np.max(np.abs(seg[:, j]))) for j in nontarget},
            rest_offset=offsets[k].tolist(),
            truncated=bool(truncated),
        ))
    drift = _piecewise_offsets(virtual, trials, offsets)
    noise = _noise(virtual, trials, params.tracker_noise_sigma, rng_seed, "tracker_true")
    angles = np.clip(drift + move + noise, -1.0, 1.0) + 0.0
    return KinematicStream(virtual.t, angles, Source.TRUE), GroundTruthLog(log)


def simulate_contralateral_stream(true_stream: KinematicStream, log: GroundTruthLog, trials, catalog,
                                  params: ImperfectionParams, rng_seed: int,
                                  timing: TrialTimingParams = TrialTimingParams()) -> KinematicStream:
    """Mirror of the True hand: same movements, jittered in time and scaled.

    The movement and rest components are rebuilt from ``log`` so the mirror
    never copies True-hand tracker noise.  ``log`` is annotated in place with
    the realized mirror perturbations.
    """
    n = len(true_stream)
    move = np.zeros((n, N_DOF))
    offsets = np.zeros((len(trials), N_DOF))
    window = timing.duration + timing.iti
    pre = int(round(timing.iti * 30))
    for k, tr in enumerate(trials):
        truth = log.trials[k]
        j = float(rng_for(rng_seed, "jitter", k).normal(0.0, params.mirror_timing_jitter_sd))
        m = float(rng_for(rng_seed, "mirror_magnitude", k).normal(0.0, params.mirror_magnitude_sd))
        e = rng_for(rng_seed, "mirror_offset", k).normal(0.0, params.mirror_rest_offset_sd, size=N_DOF)
        offsets[k] = np.asarray(truth.rest_offset) + e
        s0 = _frame_index(true_stream, tr.t_start)
        mv = catalog[tr.movement_index]
        # a mirror never moves the opposite way: the scale is clipped at 0 like the gain
        _add_movement(move, true_stream, tr, np.asarray(truth.direction), max(0.0, 1.0 + m) * truth.gain,
                      truth.delay + j, timing, s0 - pre, s0 + int(round(window * 30)), mv.peak_amplitude)
        truth.mirror_jitter = j
        truth.mirror_magnitude = m
        truth.mirror_rest_offset = e.tolist()
    rest = _piecewise_offsets(true_stream, trials, offsets)
    noise = _noise(true_stream, trials, params.tracker_noise_sigma, rng_seed, "tracker_contralateral")
    angles = np.clip(rest + move + noise, -1.0, 1.0) + 0.0
    return KinematicStream(true_stream.t, angles, Source.CONTRALATERAL)
