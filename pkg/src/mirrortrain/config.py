"""Experiment configuration: one JSON document validated against a schema."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

from .core import MovementSpec
from .decoder import DEFAULT_LOADING, PostProcessConfig
from .emgsim import EmgModelParams
from .humansim import ImperfectionParams
from .protocol import TrialTimingParams, default_movement_catalog


class ConfigError(ValueError):
    def __init__(self, message: str, field: str = ""):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field
        self.message = message


def _data(name: str) -> str:
    return resources.files("mirrortrain").joinpath("data").joinpath(name).read_text(encoding="utf-8")


def config_schema() -> dict:
    return json.loads(_data("config.schema.json"))


def tuned_imperfections() -> dict:
    """Imperfection parameters calibrated to the published cohort values."""
    return json.loads(_data("tuned_params.json"))["imperfections"]


@dataclass(frozen=True)
class DecoderOptions:
    loading: float = DEFAULT_LOADING
    channel_subset: Optional[int] = None
    post: PostProcessConfig = field(default_factory=PostProcessConfig)
    velocity_states: bool = True


@dataclass(frozen=True)
class ExperimentConfig:
    cohort_size: int = 7
    master_seed: int = 20190101
    imperfections: ImperfectionParams = field(default_factory=lambda: ImperfectionParams.from_dict(tuned_imperfections()))
    emg: EmgModelParams = field(default_factory=EmgModelParams)
    timing: TrialTimingParams = field(default_factory=TrialTimingParams)
    catalog: tuple = field(default_factory=lambda: tuple(default_movement_catalog()))
    decoder: DecoderOptions = field(default_factory=DecoderOptions)
    output_dir: str = "mirrortrain_out"

    def __post_init__(self):
        if self.cohort_size < 2:
            raise ConfigError("must be >= 2", "cohort_size")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError("must be an unsigned 64-bit integer", "master_seed")

    def participant_seed(self, index: int) -> int:
        ss = np.random.SeedSequence(self.master_seed, spawn_key=(index,))
        return int(ss.generate_state(1, dtype=np.uint64)[0])

    def participant_ids(self) -> list[str]:
        return [f"P{i + 1:02d}" for i in range(self.cohort_size)]

    def to_dict(self) -> dict:
        emg = self.emg.to_dict()
        emg.pop("seed")
        return {
            "cohort_size": self.cohort_size,
            "master_seed": self.master_seed,
            "imperfections": self.imperfections.to_dict(),
            "emg": emg,
            "timing": self.timing.to_dict(),
            "catalog": [m.to_dict() for m in self.catalog],
            "decoder": {
                "loading": self.decoder.loading,
                "channel_subset": self.decoder.channel_subset,
                "velocity_states": self.decoder.velocity_states,
                "postprocess": {"enabled": self.decoder.post.enabled, "deadband": self.decoder.post.deadband},
            },
            "output_dir": self.output_dir,
        }

    def echo(self) -> dict:
        """Provenance copy embedded in outputs; the output location is left out."""
        d = self.to_dict()
        d.pop("output_dir")
        return d

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        validator = jsonschema.Draft202012Validator(config_schema())
        errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.path))
        if errors:
            e = errors[0]
            raise ConfigError(e.message, ".".join(str(p) for p in e.path) or "<root>")
        base = cls().to_dict()
        merged = _merge(base, doc)
        try:
            dec = merged["decoder"]
            return cls(
                cohort_size=merged["cohort_size"],
                master_seed=merged["master_seed"],
                imperfections=ImperfectionParams.from_dict(merged["imperfections"]),
                emg=EmgModelParams.from_dict(merged["emg"]),
                timing=TrialTimingParams(**merged["timing"]),
                catalog=tuple(MovementSpec.from_dict(m) for m in merged["catalog"]),
                decoder=DecoderOptions(dec["loading"], dec["channel_subset"],
                                       PostProcessConfig(**dec["postprocess"]), dec["velocity_states"]),
                output_dir=merged["output_dir"],
            )
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON ({exc})", str(path)) from exc
        return cls.from_dict(doc)


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out
