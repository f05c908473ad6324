"""Kinematic fidelity metrics and cohort-level aggregation.

Per-trial metrics are computed on the session's 30 Hz grid.  Percentages are
percent of the full normalized span; times are seconds.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .core import FRAME_RATE, N_DOF, SPAN, KinematicStream, SessionDataset, deviation_percent
from .stats import DegenerateSampleError, iqr_outlier_filter, t_test_one_sample, t_test_paired

log = logging.getLogger(__name__)

FLAT_TRIAL_FLOOR = 1.0  # percent of span


def resting_position(stream: KinematicStream, iti) -> np.ndarray:
    sl = stream.window(iti[0], iti[1])
    frames = stream.angles[sl].astype(float)
    if len(frames) == 0:
        raise ValueError(f"no frames in interval {tuple(iti)}")
    return frames.mean(axis=0)


def _trial_frames(stream: KinematicStream, trial) -> np.ndarray:
    return stream.angles[stream.window(trial.t_start, trial.t_end, closed=True)].astype(float)


def coupling_peaks(stream: KinematicStream, trial, movement) -> dict:
    """Peak deviation from rest (percent) of every non-target DOF in one trial."""
    rest = resting_position(stream, trial.preceding_iti)
    dev = deviation_percent(_trial_frames(stream, trial), rest).max(axis=0)
    return {j: float(dev[j]) for j in range(N_DOF) if j not in movement.dofs}


def coupling_metric(stream: KinematicStream, trials, catalog):
    """Per-trial non-target peaks and the participant summary (median of all peaks)."""
    per_trial = [coupling_peaks(stream, tr, catalog[tr.movement_index]) for tr in trials]
    pooled = [v for d in per_trial for v in d.values()]
    return per_trial, float(np.median(pooled))


def drift_metric(stream: KinematicStream, trials, baseline):
    """Per-ITI mean-over-DOF deviation of the rest posture from the baseline rest."""
    base = resting_position(stream, baseline)
    per_iti = np.array([
        float(np.mean(deviation_percent(resting_position(stream, tr.preceding_iti), base)))
        for tr in trials
    ])
    return per_iti, float(np.median(per_iti))


def max_deviation(stream: KinematicStream, trial, dof: int):
    """(max deviation percent, time of the first maximum relative to trial start)."""
    rest = resting_position(stream, trial.preceding_iti)[dof]
    sl = stream.window(trial.t_start, trial.t_end, closed=True)
    dev = deviation_percent(stream.angles[sl, dof].astype(float), rest)
    i = int(np.argmax(dev))
    # the closed window starts on the trial's first frame
    return float(dev[i]), i / FRAME_RATE


def magnitude_error(true_stream, ref_stream, trial, movement):
    """(absolute, signed) difference in target-DOF maximum deviation, percent.

    Combination movements average over their target DOFs.
    """
    signed = [max_deviation(true_stream, trial, d)[0] - max_deviation(ref_stream, trial, d)[0]
              for d in movement.dofs]
    return float(np.mean(np.abs(signed))), float(np.mean(signed))


def timing_error(true_stream, ref_stream, trial, movement):
    """(absolute, signed) difference in time of maximum deviation, seconds.

    Returns None for flat trials whose deviation never exceeds the 1 % floor.
    """
    signed = []
    for d in movement.dofs:
        mt, tt = max_deviation(true_stream, trial, d)
        mr, tr_ = max_deviation(ref_stream, trial, d)
        if mt < FLAT_TRIAL_FLOOR or mr < FLAT_TRIAL_FLOOR:
            return None
        signed.append(tt - tr_)
    return float(np.mean(np.abs(signed))), float(np.mean(signed))


def stream_rmse(a: KinematicStream, b: KinematicStream) -> float:
    """RMSE over all frames and DOFs, as percent of span."""
    if not np.array_equal(a.t, b.t):
        raise ValueError("streams must share a frame grid")
    d = a.angles.astype(float) - b.angles.astype(float)
    return float(np.sqrt(np.mean(d * d))) * 100.0 / SPAN


def variance_metrics(signed_errors, groups):
    """Median over groups of the per-group sample variance and s.d. (n - 1).

    Groups with fewer than two values are skipped with a warning.
    """
    signed_errors = np.asarray(signed_errors, dtype=float)
    groups = np.asarray(groups)
    variances = []
    for g in np.unique(groups):
        vals = signed_errors[groups == g]
        if len(vals) < 2:
            warnings.warn(f"group {g!r} has fewer than 2 trials; excluded", RuntimeWarning, stacklevel=2)
            continue
        variances.append(float(np.var(vals, ddof=1)))
    if not variances:
        raise ValueError("no group with at least 2 values")
    var = float(np.median(variances))
    return {"variance": var, "sd": math.sqrt(var)}


@dataclass
class ParticipantKinematics:
    """Participant-level summaries of every kinematic metric."""

    participant_id: str
    coupling: float
    drift: float
    magnitude: dict  # paradigm -> median absolute error
    magnitude_signed: dict
    magnitude_sd: dict
    magnitude_variance: dict
    timing: dict
    timing_signed: dict
    timing_sd: dict
    timing_variance: dict
    rmse: dict
    trials: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


REFERENCES = {"mimicked": "virtual", "mirrored": "contralateral"}


def analyze_session(session: SessionDataset) -> ParticipantKinematics:
    true = session.true
    refs = {"mimicked": session.virtual, "mirrored": session.contralateral}
    coupling_trials, coupling = coupling_metric(true, session.trials, session.catalog)
    drift_itis, drift = drift_metric(true, session.trials, session.baseline_rest_window)
    rows = []
    out = {k: {} for k in ("magnitude", "magnitude_signed", "magnitude_sd", "magnitude_variance",
                           "timing", "timing_signed", "timing_sd", "timing_variance", "rmse")}
    for paradigm, ref in refs.items():
        mag_abs, mag_signed, mag_group = [], [], []
        tim_abs, tim_signed, tim_group = [], [], []
        for k, tr in enumerate(session.trials):
            mv = session.catalog[tr.movement_index]
            ma, ms = magnitude_error(true, ref, tr, mv)
            mag_abs.append(ma)
            mag_signed.append(ms)
            mag_group.append(tr.movement_index)
            te = timing_error(true, ref, tr, mv)
            if te is not None:
                tim_abs.append(te[0])
                tim_signed.append(te[1])
                tim_group.append(tr.movement_index)
            rows.append({"trial": k, "paradigm": paradigm, "magnitude_error": ma, "magnitude_signed": ms,
                         "timing_error": None if te is None else te[0],
                         "timing_signed": None if te is None else te[1]})
        out["magnitude"][paradigm] = float(np.median(mag_abs))
        out["magnitude_signed"][paradigm] = float(np.median(mag_signed))
        mag_var = variance_metrics(mag_signed, mag_group)
        out["magnitude_sd"][paradigm] = mag_var["sd"]
        out["magnitude_variance"][paradigm] = mag_var["variance"]
        out["timing"][paradigm] = float(np.median(tim_abs))
        out["timing_signed"][paradigm] = float(np.median(tim_signed))
        tim_var = variance_metrics(tim_signed, tim_group)
        out["timing_sd"][paradigm] = tim_var["sd"]
        out["timing_variance"][paradigm] = tim_var["variance"]
        out["rmse"][paradigm] = stream_rmse(true, ref)
    for k, (c, d) in enumerate(zip(coupling_trials, drift_itis)):
        rows.append({"trial": k, "paradigm": "true", "coupling_peaks": {str(j): v for j, v in c.items()},
                     "drift": float(d)})
    return ParticipantKinematics(session.participant_id, coupling, drift, trials=rows, **out)


@dataclass
class CohortEntry:
    metric: str
    test: str
    participants: list
    values: dict  # group -> per-participant values (before outlier removal)
    outliers_removed: list
    mean: dict
    sem: dict
    n: int
    t: Optional[float]
    df: Optional[int]
    p: Optional[float]
    error: Optional[str] = None
    filter_applied: bool = True

    def to_dict(self) -> dict:
        return asdict(self)


def _mean_sem(values):
    v = np.asarray(values, dtype=float)
    sem = float(np.std(v, ddof=1) / math.sqrt(len(v))) if len(v) > 1 else float("nan")
    return float(np.mean(v)), sem


def cohort_aggregate(metric: str, participants, values, test: str = "one_sample",
                     mu0: float = 0.0, strict: bool = True) -> CohortEntry:
    """Outlier-filter per-participant values, then run the requested t-test.

    ``values`` maps a group name to per-participant values.  A one-sample
    test uses a single group; a paired test uses two groups, and a
    participant flagged as an outlier in either group is removed from both.
    With ``strict=False`` a degenerate t-test is recorded in ``error``
    instead of raised.
    """
    groups = list(values)
    removed_idx = set()
    filtered = True
    for g in groups:
        res = iqr_outlier_filter(values[g])
        filtered &= res.filtered
        removed_idx.update(res.removed_index)
    keep = [i for i in range(len(participants)) if i not in removed_idx]
    kept = {g: [float(values[g][i]) for i in keep] for g in groups}
    if len(keep) < 2:
        raise DegenerateSampleError(f"{metric}: fewer than 2 participants after outlier removal")
    mean, sem = {}, {}
    for g in groups:
        mean[g], sem[g] = _mean_sem(kept[g])
    t = df = p = None
    err = None
    try:
        if test == "one_sample":
            r = t_test_one_sample(kept[groups[0]], mu0)
        elif test == "paired":
            r = t_test_paired(kept[groups[0]], kept[groups[1]])
        else:
            raise ValueError(f"unknown test {test!r}")
        t, df, p = r.t, r.df, r.p
    except DegenerateSampleError as exc:
        if strict:
            raise
        err = str(exc)
    return CohortEntry(
        metric=metric,
        test=test,
        participants=list(participants),
        values={g: [float(v) for v in values[g]] for g in groups},
        outliers_removed=[participants[i] for i in sorted(removed_idx)],
        mean=mean,
        sem=sem,
        n=len(keep),
        t=t,
        df=df,
        p=p,
        error=err,
        filter_applied=filtered,
    )


FIG2_METRICS = ("coupling", "drift")
FIG3_METRICS = ("magnitude", "magnitude_sd", "magnitude_variance", "timing", "timing_signed",
                "timing_sd", "timing_variance", "rmse")


def cohort_kinematics(results) -> dict:
    """Cohort entries for every kinematic metric (the fig2 and fig3 tables)."""
    ids = [r.participant_id for r in results]
    report = {}
    for m in FIG2_METRICS:
        report[m] = cohort_aggregate(m, ids, {"true": [getattr(r, m) for r in results]}, "one_sample",
                                     strict=False)
    for m in FIG3_METRICS:
        vals = {p: [getattr(r, m)[p] for r in results] for p in ("mimicked", "mirrored")}
        report[m] = cohort_aggregate(m, ids, vals, "paired", strict=False)
    return report
