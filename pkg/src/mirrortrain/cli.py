"""Command-line runner: simulate a cohort, analyze kinematics, decode EMG.

Output tree under ``--out``::

    cohort.json                 config echo and participant seeds
    sessions/<id>/              one session directory per participant
    fig2.csv fig3.csv           kinematic tables (analyze)
    fig4.csv models/            decoder tables and fitted models (decode)
    report.json                 cohort statistics
    decode_report.json          decoder statistics (decode)

Errors are reported as one JSON object on stderr with a non-zero exit code.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from . import __version__
from .analysis import FIG2_METRICS, FIG3_METRICS, analyze_session, cohort_aggregate, cohort_kinematics
from .config import ConfigError, ExperimentConfig
from .pipeline import decode_session, simulate_session
from .sessionio import SessionFormatError, load_session, save_session

log = logging.getLogger("mirrortrain")

COHORT_FILE = "cohort.json"
SESSIONS = "sessions"
PARADIGMS = ("mimicked", "mirrored")
DECODE_REFERENCES = ("training_labels", "true_kinematics")

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_OTHER = 1


class CohortError(RuntimeError):
    pass


def _clean(obj):
    """JSON-safe copy: NaN/inf become null, tuples become lists."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def write_json(obj, path: Path) -> None:
    path.write_text(json.dumps(_clean(obj), indent=1, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")


def write_table(rows, path: Path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["metric", "paradigm", "participant", "value"])
    for metric, paradigm, pid, value in rows:
        w.writerow([metric, paradigm, pid, repr(float(value))])
    path.write_text(buf.getvalue(), encoding="utf-8")


def _map(fn, items, jobs: int):
    """Ordered map; results never depend on the worker count."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as pool:
        return list(pool.map(fn, items))


# workers (module level so they pickle)

def _simulate_one(args):
    config, index, out = args
    session, gt = simulate_session(config, index)
    save_session(session, out / SESSIONS / session.participant_id, gt.to_dict())
    log.info("simulated %s", session.participant_id)
    return {"id": session.participant_id, "seed": session.seed}


def _analyze_one(path):
    kin = analyze_session(load_session(path, load_emg=False))
    log.info("analyzed %s", kin.participant_id)
    return kin


def _decode_one(args):
    config, path = args
    res = decode_session(load_session(path), config)
    log.info("decoded %s", res.participant_id)
    return res


# commands

def cmd_simulate(config: ExperimentConfig, out: Path, jobs: int = 1) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    (out / SESSIONS).mkdir(exist_ok=True)
    people = _map(_simulate_one, [(config, i, out) for i in range(config.cohort_size)], jobs)
    cohort = {"format_version": 1, "config": config.echo(), "participants": people}
    write_json(cohort, out / COHORT_FILE)
    return cohort


def read_cohort(out: Path):
    path = out / COHORT_FILE
    if not path.is_file():
        raise CohortError(f"{path}: no cohort here (run 'simulate' first)")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CohortError(f"{path}: corrupt cohort file ({exc})") from exc
    config = ExperimentConfig.from_dict(doc["config"])
    dirs = [out / SESSIONS / p["id"] for p in doc["participants"]]
    return config, dirs


def kinematic_tables(results):
    fig2, fig3 = [], []
    for r in results:
        for m in FIG2_METRICS:
            fig2.append((m, "true", r.participant_id, getattr(r, m)))
        for m in FIG3_METRICS:
            for p in PARADIGMS:
                fig3.append((m, p, r.participant_id, getattr(r, m)[p]))
    return fig2, fig3


def cmd_analyze(out: Path, jobs: int = 1) -> dict:
    config, dirs = read_cohort(out)
    results = _map(_analyze_one, dirs, jobs)
    fig2, fig3 = kinematic_tables(results)
    write_table(fig2, out / "fig2.csv")
    write_table(fig3, out / "fig3.csv")
    report = {
        "version": __version__,
        "config": config.echo(),
        "figures": {"fig2": "fig2.csv", "fig3": "fig3.csv"},
        "kinematics": {k: v.to_dict() for k, v in cohort_kinematics(results).items()},
        "participants": {r.participant_id: {k: v for k, v in r.to_dict().items() if k != "trials"}
                         for r in results},
    }
    write_json(report, out / "report.json")
    return report


def cohort_decoding(results) -> dict:
    ids = [r.participant_id for r in results]
    entries = {}
    for ref in DECODE_REFERENCES:
        vals = {p: [r.rmse[p][ref] for r in results] for p in PARADIGMS}
        entries[f"rmse_{ref}"] = cohort_aggregate(f"rmse_{ref}", ids, vals, "paired", strict=False)
    return entries


def cmd_decode(out: Path, jobs: int = 1, channel_subset=None, no_postprocess: bool = False,
               config: ExperimentConfig | None = None) -> dict:
    cohort_config, dirs = read_cohort(out)
    config = config or cohort_config
    dec = config.decoder
    if channel_subset is not None:
        dec = replace(dec, channel_subset=channel_subset)
    if no_postprocess:
        dec = replace(dec, post=replace(dec.post, enabled=False))
    config = replace(config, decoder=dec)
    results = _map(_decode_one, [(config, d) for d in dirs], jobs)
    models = out / "models"
    models.mkdir(exist_ok=True)
    rows = []
    for r in results:
        for p in PARADIGMS:
            (models / f"{r.participant_id}_{p}.json").write_text(r.models[p].to_json() + "\n", encoding="utf-8")
            for ref in DECODE_REFERENCES:
                rows.append((f"rmse_{ref}", p, r.participant_id, r.rmse[p][ref]))
    write_table(rows, out / "fig4.csv")
    report = {
        "version": __version__,
        "config": config.echo(),
        "figures": {"fig4": "fig4.csv"},
        "decoding": {k: v.to_dict() for k, v in cohort_decoding(results).items()},
        "participants": {r.participant_id: {"lag": r.lag, "rmse": r.rmse, "rmse_per_dof": r.rmse_per_dof,
                                            "models": {p: f"models/{r.participant_id}_{p}.json" for p in PARADIGMS}}
                         for r in results},
    }
    write_json(report, out / "decode_report.json")
    return report


def cmd_full(config: ExperimentConfig, out: Path, jobs: int = 1, channel_subset=None,
             no_postprocess: bool = False) -> dict:
    cmd_simulate(config, out, jobs)
    kin = cmd_analyze(out, jobs)
    dec = cmd_decode(out, jobs, channel_subset, no_postprocess)
    report = {
        "version": __version__,
        "config": dec["config"],
        "figures": {**kin["figures"], **dec["figures"]},
        "kinematics": kin["kinematics"],
        "decoding": dec["decoding"],
        "participants": {pid: {**kin["participants"][pid], "decoding": dec["participants"][pid]}
                         for pid in kin["participants"]},
    }
    write_json(report, out / "report.json")
    return report


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, help="output directory (default: config output_dir)")
    common.add_argument("--jobs", type=int, default=1, help="participants processed in parallel")
    sim = argparse.ArgumentParser(add_help=False)
    sim.add_argument("--config", type=Path, help="experiment config JSON")
    sim.add_argument("--seed", type=int, help="override the master seed")
    dec = argparse.ArgumentParser(add_help=False)
    dec.add_argument("--channel-subset", type=int, metavar="K", help="decode from the K best features")
    dec.add_argument("--no-postprocess", action="store_true", help="disable deadband/clamp post-processing")

    ap = argparse.ArgumentParser(prog="mirrortrain", description="Mimicked vs mirrored kinematic labeling study.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common, sim], help="simulate a cohort of sessions")
    sub.add_parser("analyze", parents=[common], help="kinematic metrics and statistics")
    p = sub.add_parser("decode", parents=[common, dec], help="train and evaluate decoders")
    p.add_argument("--config", type=Path, help="config whose decoder options replace the cohort's")
    sub.add_parser("full", parents=[common, sim, dec], help="simulate, analyze and decode")
    return ap


def load_config(args) -> ExperimentConfig:
    config = ExperimentConfig.load(args.config) if getattr(args, "config", None) else ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        try:
            config = replace(config, master_seed=args.seed)
        except ConfigError as exc:
            raise ConfigError(exc.message, "--seed") from exc
    return config


def _setup_logging() -> None:
    level = os.environ.get("MIRRORTRAIN_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def _fail(kind: str, message: str, code: int, **extra) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message, **extra}, sort_keys=True) + "\n")
    return code


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        if args.jobs < 1:
            raise ConfigError("must be >= 1", "--jobs")
        if getattr(args, "channel_subset", None) is not None and args.channel_subset < 1:
            raise ConfigError("must be >= 1", "--channel-subset")
        if args.command in ("simulate", "full"):
            config = load_config(args)
            out = args.out or Path(config.output_dir)
            if args.command == "simulate":
                cmd_simulate(config, out, args.jobs)
            else:
                cmd_full(config, out, args.jobs, args.channel_subset, args.no_postprocess)
        else:
            out = args.out or Path(ExperimentConfig().output_dir)
            if args.command == "analyze":
                cmd_analyze(out, args.jobs)
            else:
                override = ExperimentConfig.load(args.config) if args.config else None
                if override is not None:
                    override = replace(read_cohort(out)[0], decoder=override.decoder)
                cmd_decode(out, args.jobs, args.channel_subset, args.no_postprocess, override)
    except ConfigError as exc:
        return _fail("config", exc.message, EXIT_CONFIG, field=exc.field)
    except (SessionFormatError, CohortError) as exc:
        return _fail("data", str(exc), EXIT_DATA)
    except OSError as exc:
        return _fail("io", str(exc), EXIT_OTHER, path=str(exc.filename) if exc.filename else None)
    except Exception as exc:  # noqa: BLE001 - last-resort machine-readable report
        log.debug("unhandled error", exc_info=True)
        return _fail(type(exc).__name__, str(exc), EXIT_OTHER)
    return 0


if __name__ == "__main__":
    sys.exit(main())
