"""Per-participant pipeline: simulate, analyze, decode."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace


from .analysis import ParticipantKinematics, analyze_session
from .config import ExperimentConfig
from .core import SessionDataset, Source
from .decoder import Reference, evaluate, fit, infer
from .emgsim import synthesize_emg
from .features import extract_features
from .humansim import simulate_contralateral_stream, simulate_true_stream
from .labeling import Paradigm, build_dataset
from .protocol import generate_virtual_stream

log = logging.getLogger(__name__)


def simulate_session(config: ExperimentConfig, index: int, with_emg: bool = True):
    """Simulate participant ``index`` of the cohort; returns (session, ground-truth log)."""
    seed = config.participant_seed(index)
    catalog = list(config.catalog)
    trials, virtual = generate_virtual_stream(catalog, config.timing)
    true, gt = simulate_true_stream(virtual, trials, catalog, config.imperfections, seed, config.timing)
    contra = simulate_contralateral_stream(true, gt, trials, catalog, config.imperfections, seed, config.timing)
    emg = synthesize_emg(true, replace(config.emg, seed=seed)) if with_emg else None
    session = SessionDataset(
        participant_id=config.participant_ids()[index],
        seed=seed,
        catalog=catalog,
        trials=trials,
        streams={Source.TRUE: true, Source.CONTRALATERAL: contra, Source.VIRTUAL: virtual},
        emg=emg,
        baseline_rest_window=(0.0, config.timing.initial_rest),
        config=config.echo(),
    )
    return session, gt


@dataclass
class ParticipantDecode:
    participant_id: str
    lag: int
    rmse: dict  # paradigm -> {"training_labels": pct, "true_kinematics": pct}
    rmse_per_dof: dict
    models: dict  # paradigm -> DecoderModel


def decode_session(session: SessionDataset, config: ExperimentConfig) -> ParticipantDecode:
    if session.emg is None:
        raise ValueError(f"{session.participant_id}: session has no EMG")
    feats = extract_features(session.emg, session.frame_times)
    opts = config.decoder
    rmse, per_dof, models = {}, {}, {}
    lag = 0
    for paradigm in Paradigm:
        ds = build_dataset(session, paradigm, feats, split_seed=session.seed)
        if paradigm is Paradigm.MIMICKED:
            lag = ds.applied_lag
        model = fit(ds, opts.loading, opts.channel_subset, opts.post, opts.velocity_states)
        est = infer(model, ds.features)
        res_lab = evaluate(model, ds, Reference.TRAINING_LABELS, estimates=est)
        res_true = evaluate(model, ds, Reference.TRUE_KINEMATICS, true_stream=session.true, estimates=est)
        rmse[paradigm.value] = {"training_labels": res_lab.rmse_percent, "true_kinematics": res_true.rmse_percent}
        per_dof[paradigm.value] = {"training_labels": res_lab.rmse_per_dof.tolist(),
                                   "true_kinematics": res_true.rmse_per_dof.tolist()}
        models[paradigm.value] = model
        log.debug("%s %s rmse %s", session.participant_id, paradigm.value, rmse[paradigm.value])
    return ParticipantDecode(session.participant_id, lag, rmse, per_dof, models)


def run_participant(config: ExperimentConfig, index: int, decode: bool = True):
    """Simulate one participant in memory and return (kinematic metrics, decode results or None)."""
    session, _ = simulate_session(config, index, with_emg=decode)
    kin = analyze_session(session)
    dec = decode_session(session, config) if decode else None
    return kin, dec


def kinematics_only(config: ExperimentConfig) -> list[ParticipantKinematics]:
    return [analyze_session(simulate_session(config, i, with_emg=False)[0]) for i in range(config.cohort_size)]
