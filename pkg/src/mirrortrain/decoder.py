"""Kalman-filter decoder of joint positions from EMG features.

The state is the 8-DOF position vector, optionally augmented with the 8
velocities (the default when fitting from a labelled dataset, since the
simulated EMG tracks movement speed rather than posture).  System matrices
are identified by least squares from labelled training frames; decoding is
the standard predict/update recursion.  The update is carried out in
information form, so a 528-dimensional observation costs only n x n work per
frame once ``C^T Q^-1`` has been factored; this is algebraically identical
to the innovation-covariance form of the Kalman gain.  Once the covariance
reaches its fixed point the gain is frozen.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg

from .core import FRAME_RATE, N_DOF, SPAN
from .labeling import LabeledDataset

DEFAULT_LOADING = 1e-4
CONVERGED_TOL = 1e-14  # relative change of P at which the gain is frozen


class RankDeficientError(np.linalg.LinAlgError):
    pass


class Reference(str, enum.Enum):
    TRAINING_LABELS = "training_labels"
    TRUE_KINEMATICS = "true_kinematics"


@dataclass(frozen=True)
class PostProcessConfig:
    enabled: bool = False
    deadband: float = 0.0
    output_clamp: tuple = (-1.0, 1.0)

    def __post_init__(self):
        if not 0 <= self.deadband < 1:
            raise ValueError("deadband must be in [0, 1)")

    def apply(self, x: np.ndarray) -> np.ndarray:
        if not self.enabled:
            return x
        x = np.where(np.abs(x) < self.deadband, 0.0, x)
        return np.clip(x, self.output_clamp[0], self.output_clamp[1])


@dataclass(frozen=True, eq=False)
class DecoderModel:
    A: np.ndarray
    W: np.ndarray
    C: np.ndarray
    Q: np.ndarray  # residual covariance + loading * I
    obs_offset: np.ndarray  # feature value at the zero state
    loading: float
    post: PostProcessConfig = field(default_factory=PostProcessConfig)
    channel_subset: Optional[tuple] = None
    n_outputs: int = N_DOF  # leading state entries reported as positions

    @property
    def n_features(self) -> int:
        return self.C.shape[0]

    @property
    def velocity_states(self) -> bool:
        return self.A.shape[0] > self.n_outputs

    def to_json(self) -> str:
        def enc(a):
            a = np.asarray(a, dtype=float)
            return {"shape": list(a.shape), "data": [float(v).hex() for v in a.ravel()]}

        doc = {
            "A": enc(self.A), "W": enc(self.W), "C": enc(self.C), "Q": enc(self.Q),
            "obs_offset": enc(self.obs_offset),
            "loading": float(self.loading).hex(),
            "post": {"enabled": self.post.enabled, "deadband": float(self.post.deadband).hex(),
                     "output_clamp": [float(v).hex() for v in self.post.output_clamp]},
            "channel_subset": None if self.channel_subset is None else list(self.channel_subset),
            "n_outputs": self.n_outputs,
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "DecoderModel":
        doc = json.loads(text)

        def dec(d):
            return np.array([float.fromhex(v) for v in d["data"]]).reshape(d["shape"])

        post = doc["post"]
        return cls(
            A=dec(doc["A"]), W=dec(doc["W"]), C=dec(doc["C"]), Q=dec(doc["Q"]),
            obs_offset=dec(doc["obs_offset"]), loading=float.fromhex(doc["loading"]),
            post=PostProcessConfig(post["enabled"], float.fromhex(post["deadband"]),
                                   tuple(float.fromhex(v) for v in post["output_clamp"])),
            channel_subset=None if doc["channel_subset"] is None else tuple(doc["channel_subset"]),
            n_outputs=int(doc["n_outputs"]),
        )


def select_channels(features: np.ndarray, labels: np.ndarray, k: int) -> tuple:
    """Indices of the k features most correlated (in absolute value) with any label DOF."""
    f = features - features.mean(axis=0)
    y = labels - labels.mean(axis=0)
    fs = np.sqrt((f * f).sum(axis=0))
    ys = np.sqrt((y * y).sum(axis=0))
    with np.errstate(divide="ignore", invalid="ignore"):
        corr = (f.T @ y) / np.outer(fs, ys)
    score = np.nan_to_num(np.abs(corr), nan=0.0).max(axis=1)
    order = np.argsort(-score, kind="stable")[:k]
    return tuple(sorted(int(i) for i in order))


def _check_rank(gram: np.ndarray, what: str) -> None:
    s = np.linalg.svd(gram, compute_uv=False)
    if s[0] == 0 or s[-1] <= s[0] * 1e-12:
        raise RankDeficientError(f"{what}: normal equations are rank deficient")


def augment_velocity(x: np.ndarray, segments: np.ndarray, rate: float = FRAME_RATE):
    """Append first-difference velocities; drops each segment's first frame.

    Returns (augmented states, mask of the rows kept).
    """
    keep = np.zeros(len(x), dtype=bool)
    keep[1:] = segments[1:] == segments[:-1]
    v = np.zeros_like(x)
    v[1:] = (x[1:] - x[:-1]) * rate
    return np.hstack([x, v])[keep], keep


def fit_arrays(x: np.ndarray, z: np.ndarray, segments: np.ndarray, loading: float = DEFAULT_LOADING,
               channel_subset: Optional[int] = None, post: PostProcessConfig = PostProcessConfig(),
               velocity_states: bool = False) -> DecoderModel:
    """Identify (A, W, C, Q) from label rows ``x`` and feature rows ``z``.

    ``segments`` labels contiguous runs of frames; the transition model only
    uses successive frames inside one segment.  ``loading`` is relative to
    the mean diagonal of the observation residual covariance.  With
    ``velocity_states`` the state is [position, velocity] and only the
    positions are reported by ``infer``.
    """
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    segments = np.asarray(segments)
    if len(x) < 2 or len(x) != len(z) or len(segments) != len(x):
        raise ValueError("need at least 2 aligned frames")
    if not np.all(np.isfinite(z)) or not np.all(np.isfinite(x)):
        raise ValueError("non-finite features or labels")
    n_outputs = x.shape[1]
    if velocity_states:
        x, keep = augment_velocity(x, segments)
        z, segments = z[keep], segments[keep]
        if len(x) < 2:
            raise ValueError("need at least 2 frames after velocity augmentation")
    subset = None
    if channel_subset is not None:
        if not 0 < channel_subset <= z.shape[1]:
            raise ValueError(f"channel_subset must be in 1..{z.shape[1]}")
        subset = select_channels(z, x, channel_subset)
        z = z[:, subset]

    pair = segments[1:] == segments[:-1]
    prev, nxt = x[:-1][pair], x[1:][pair]
    if len(prev) < 1:
        raise ValueError("no successive frame pairs inside a segment")
    gram = prev.T @ prev
    _check_rank(gram, "state transition fit")
    A = np.linalg.solve(gram, prev.T @ nxt).T
    r = nxt - prev @ A.T
    W = r.T @ r / max(len(r) - 1, 1)

    xm, zm = x.mean(axis=0), z.mean(axis=0)
    xc, zc = x - xm, z - zm
    gram = xc.T @ xc
    _check_rank(gram, "observation fit")
    C = np.linalg.solve(gram, xc.T @ zc).T
    offset = zm - C @ xm
    e = zc - xc @ C.T
    Q = e.T @ e / max(len(e) - 1, 1)
    mean_diag = float(np.mean(np.diag(Q)))
    lam = loading * mean_diag if mean_diag > 0 else loading
    Q = Q + lam * np.eye(Q.shape[0])
    Q = 0.5 * (Q + Q.T)
    try:
        np.linalg.cholesky(Q)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("loaded observation covariance is not positive definite") from exc
    # C-ordered storage so a reloaded model runs the same BLAS paths bit for bit
    c = np.ascontiguousarray
    return DecoderModel(c(A), c(0.5 * (W + W.T)), c(C), c(Q), c(offset), lam, post, subset, n_outputs)


def fit(train: LabeledDataset, loading: float = DEFAULT_LOADING, channel_subset: Optional[int] = None,
        post: PostProcessConfig = PostProcessConfig(), velocity_states: bool = True) -> DecoderModel:
    mask = train.train_mask
    return fit_arrays(train.labels[mask], train.features[mask], train.trial_id[mask],
                      loading, channel_subset, post, velocity_states)


@dataclass
class FilterTrace:
    estimates: np.ndarray  # post-processed output
    raw: np.ndarray  # filter state before post-processing
    P_prior: np.ndarray  # final predicted covariance
    P_post: np.ndarray  # final updated covariance


def infer(model: DecoderModel, features, trace: bool = False):
    """Run the filter over a feature sequence; returns (frames, 8) estimates.

    With ``trace=True`` a FilterTrace holding the final covariances is
    returned instead.
    """
    z = np.asarray(getattr(features, "values", features), dtype=float)
    if model.channel_subset is not None:
        z = z[:, list(model.channel_subset)]
    if z.ndim != 2 or z.shape[1] != model.n_features:
        raise ValueError(f"expected {model.n_features} features, got {z.shape}")
    A, W, C = model.A, model.W, model.C
    n = A.shape[0]
    try:
        chol = linalg.cho_factor(model.Q, lower=True)
    except linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("observation covariance is not invertible") from exc
    ctqi = linalg.cho_solve(chol, C).T  # C^T Q^-1
    info = ctqi @ C  # C^T Q^-1 C
    y = (z - model.obs_offset) @ ctqi.T
    eye = np.eye(n)
    x = np.zeros(n)
    P = W.copy()
    out = np.empty((len(z), n))
    Pm = P
    t = 0
    while t < len(z):
        xm = A @ x
        Pm = A @ P @ A.T + W
        # P+ = (I + P- C^T Q^-1 C)^-1 P-,  K = P+ C^T Q^-1
        P_new = np.linalg.solve(eye + Pm @ info, Pm)
        P_new = 0.5 * (P_new + P_new.T)
        x = xm + P_new @ (y[t] - info @ xm)
        out[t] = x
        t += 1
        settled = np.max(np.abs(P_new - P)) <= CONVERGED_TOL * max(np.max(np.abs(P_new)), 1e-300)
        P = P_new
        if settled:
            break
    if t < len(z):
        # steady state: x_t = F x_{t-1} + P y_t
        F = A - P @ info @ A
        drive = y[t:] @ P.T
        for k in range(len(drive)):
            x = F @ x + drive[k]
            out[t + k] = x
    if not np.all(np.isfinite(out)):
        raise np.linalg.LinAlgError("filter diverged (non-finite state)")
    out = out[:, :model.n_outputs]
    est = model.post.apply(out)
    if trace:
        return FilterTrace(est, out, Pm, P)
    return est


@dataclass
class EvalResult:
    rmse_per_dof: np.ndarray  # normalized units
    rmse: float  # pooled, normalized units
    n_frames: int

    @property
    def rmse_percent(self) -> float:
        return self.rmse * 100.0 / SPAN


def rmse(estimate: np.ndarray, reference: np.ndarray) -> EvalResult:
    d = np.asarray(estimate, dtype=float) - np.asarray(reference, dtype=float)
    if d.size == 0:
        raise ValueError("empty evaluation set")
    return EvalResult(np.sqrt(np.mean(d * d, axis=0)), float(np.sqrt(np.mean(d * d))), len(d))


def evaluate(model: DecoderModel, dataset: LabeledDataset, reference=Reference.TRAINING_LABELS,
             true_stream=None, estimates: Optional[np.ndarray] = None) -> EvalResult:
    """RMSE on the test-split trials (each with its preceding ITI)."""
    reference = Reference(reference)
    mask = dataset.test_mask
    if not mask.any():
        raise ValueError("empty test set")
    if estimates is None:
        estimates = infer(model, dataset.features)
    if reference is Reference.TRAINING_LABELS:
        ref = dataset.labels
    else:
        if true_stream is None:
            raise ValueError("true_stream is required for the True-kinematics reference")
        ref = true_stream.angles[dataset.frame_index]
    return rmse(estimates[mask], ref[mask])
