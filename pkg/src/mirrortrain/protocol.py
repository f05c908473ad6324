"""Movement catalog, trial timing and the preprogrammed virtual-hand stream."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .core import FRAME_RATE, N_DOF, Dof, KinematicStream, MovementSpec, Source, TrialRecord, frame_times

_EPS = 1e-9


@dataclass(frozen=True)
class TrialTimingParams:
    ramp_up: float = 0.7
    hold: float = 0.1
    ramp_down: float = 0.7
    iti: float = 1.0
    initial_rest: float = 30.0
    trials_per_movement: int = 10

    def __post_init__(self):
        if min(self.ramp_up, self.ramp_down) <= 0 or self.hold < 0:
            raise ValueError("ramp durations must be positive and hold non-negative")
        if abs(self.duration - 1.5) > _EPS:
            raise ValueError(f"ramp_up + hold + ramp_down must equal 1.5 s, got {self.duration}")
        if self.iti <= 0 or self.initial_rest < self.iti:
            raise ValueError("iti must be positive and initial_rest at least one iti long")
        if self.trials_per_movement < 1:
            raise ValueError("trials_per_movement must be >= 1")

    @property
    def duration(self) -> float:
        return self.ramp_up + self.hold + self.ramp_down

    def to_dict(self) -> dict:
        return asdict(self)


def default_movement_catalog() -> list[MovementSpec]:
    """The 18 movements that can be enumerated from the protocol description."""
    cat = []
    for digit in range(1, 6):
        dof = Dof(digit)
        cat.append(MovementSpec(f"D{digit} flexion", ((dof, +1),)))
        cat.append(MovementSpec(f"D{digit} extension", ((dof, -1),)))
    cat += [
        MovementSpec("wrist flexion", ((Dof.WRIST_FLEXION, +1),)),
        MovementSpec("wrist extension", ((Dof.WRIST_FLEXION, -1),)),
        MovementSpec("wrist pronation", ((Dof.WRIST_PRONATION, +1),)),
        MovementSpec("wrist supination", ((Dof.WRIST_PRONATION, -1),)),
        MovementSpec("thumb abduction", ((Dof.D1_ABDUCTION, +1),)),
        MovementSpec("thumb adduction", ((Dof.D1_ABDUCTION, -1),)),
        MovementSpec("D1-D5 flexion", tuple((Dof(d), +1) for d in range(1, 6))),
        MovementSpec("D1-D5 extension", tuple((Dof(d), -1) for d in range(1, 6))),
    ]
    return cat


def profile_array(t_in_trial, timing: TrialTimingParams = TrialTimingParams(), peak: float = 1.0) -> np.ndarray:
    """Vectorised trapezoid; zero outside [0, duration]."""
    t = np.asarray(t_in_trial, dtype=float)
    up_end = timing.ramp_up
    hold_end = timing.ramp_up + timing.hold
    end = timing.duration
    out = np.zeros_like(t)
    rising = (t > 0) & (t < up_end - _EPS)
    plateau = (t >= up_end - _EPS) & (t <= hold_end + _EPS)
    falling = (t > hold_end + _EPS) & (t < end)
    out[rising] = peak * t[rising] / timing.ramp_up
    out[plateau] = peak
    out[falling] = peak * (end - t[falling]) / timing.ramp_down
    return out


def virtual_profile(t_in_trial: float, timing: TrialTimingParams = TrialTimingParams(), peak: float = 1.0) -> float:
    if not -_EPS <= t_in_trial <= timing.duration + _EPS:
        raise ValueError(f"t={t_in_trial} outside the trial [0, {timing.duration}]")
    return float(profile_array(np.array([t_in_trial]), timing, peak)[0])


def trial_schedule(catalog, timing: TrialTimingParams = TrialTimingParams()) -> list[TrialRecord]:
    trials = []
    period = timing.duration + timing.iti
    k = 0
    for m in range(len(catalog)):
        for i in range(timing.trials_per_movement):
            t0 = timing.initial_rest + k * period
            trials.append(TrialRecord(m, i, t0, t0 + timing.duration, (t0 - timing.iti, t0)))
            k += 1
    return trials


def session_duration(n_trials: int, timing: TrialTimingParams = TrialTimingParams()) -> float:
    return timing.initial_rest + n_trials * (timing.duration + timing.iti)


def generate_virtual_stream(catalog, timing: TrialTimingParams = TrialTimingParams(),
                            frame_rate: float = FRAME_RATE):
    """Return (trial schedule, virtual KinematicStream)."""
    if frame_rate != FRAME_RATE:
        raise ValueError("only the 30 Hz frame grid is supported")
    if not catalog:
        raise ValueError("movement catalog is empty")
    trials = trial_schedule(catalog, timing)
    n_frames = int(round(session_duration(len(trials), timing) * frame_rate))
    angles = np.zeros((n_frames, N_DOF))
    n_trial_frames = int(round(timing.duration * frame_rate)) + 1
    rel = np.arange(n_trial_frames) / frame_rate
    for tr in trials:
        mv = catalog[tr.movement_index]
        shape = profile_array(rel, timing, mv.peak_amplitude)
        s0 = int(round(tr.t_start * frame_rate))
        for dof, sign in mv.target_dofs:
            angles[s0:s0 + n_trial_frames, int(dof)] = sign * shape
    return trials, KinematicStream(frame_times(n_frames), angles, Source.VIRTUAL)
