"""Fit the default imperfection parameters to the published cohort values.

Each round simulates kinematics-only cohorts over several master seeds and
rescales one parameter per target metric.  The relationships are close to
linear so a handful of rounds is enough.  Writes
src/mirrortrain/data/tuned_params.json.

    python3 scripts/calibrate.py --seeds 8 --rounds 5
"""

from __future__ import annotations

import argparse
import json
import logging
from dataclasses import replace
from pathlib import Path

import numpy as np

from mirrortrain.config import ExperimentConfig
from mirrortrain.humansim import ImperfectionParams
from mirrortrain.pipeline import kinematics_only

log = logging.getLogger("calibrate")

TARGETS = {
    "coupling": 11.43,
    "drift": 7.07,
    "magnitude_mimicked": 12.89,
    "magnitude_mirrored": 6.67,
}
OUT = Path(__file__).resolve().parents[1] / "src" / "mirrortrain" / "data" / "tuned_params.json"


def cohort_means(params: ImperfectionParams, seeds) -> dict:
    acc = {k: [] for k in TARGETS}
    for s in seeds:
        cfg = replace(ExperimentConfig(master_seed=s), imperfections=params)
        res = kinematics_only(cfg)
        acc["coupling"].append(np.mean([r.coupling for r in res]))
        acc["drift"].append(np.mean([r.drift for r in res]))
        acc["magnitude_mimicked"].append(np.mean([r.magnitude["mimicked"] for r in res]))
        acc["magnitude_mirrored"].append(np.mean([r.magnitude["mirrored"] for r in res]))
    return {k: float(np.mean(v)) for k, v in acc.items()}


def leak_of(params: ImperfectionParams) -> float:
    c = params.coupling
    return float(c[~np.eye(len(c), dtype=bool)].mean())


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=8)
    ap.add_argument("--rounds", type=int, default=5)
    ap.add_argument("--first-seed", type=int, default=1000)
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    start = json.loads(OUT.read_text())["imperfections"]
    params = ImperfectionParams.from_dict(start)
    seeds = list(range(args.first_seed, args.first_seed + args.seeds))
    for rnd in range(args.rounds):
        m = cohort_means(params, seeds)
        log.info("round %d: %s", rnd, {k: round(v, 3) for k, v in m.items()})
        leak = leak_of(params) * TARGETS["coupling"] / m["coupling"]
        sigma = params.drift_step_sigma * TARGETS["drift"] / m["drift"]
        # mimicked magnitude error grows with the gain shortfall 1 - g
        short = (1 - params.magnitude_gain_mean) * TARGETS["magnitude_mimicked"] / m["magnitude_mimicked"]
        mirror = params.mirror_magnitude_sd * TARGETS["magnitude_mirrored"] / m["magnitude_mirrored"]
        d = params.to_dict()
        d.pop("coupling_matrix")
        d.update(drift_step_sigma=sigma, magnitude_gain_mean=1 - short, mirror_magnitude_sd=mirror)
        params = ImperfectionParams.uniform_coupling(leak, **d)
    final = cohort_means(params, seeds)
    log.info("final: %s", {k: round(v, 3) for k, v in final.items()})

    doc = {
        "imperfections": params.to_dict(),
        "calibration": {"seeds": seeds, "cohort_size": ExperimentConfig().cohort_size,
                        "targets": TARGETS, "recovered": final},
    }
    OUT.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    log.info("wrote %s", OUT)


if __name__ == "__main__":
    main()
