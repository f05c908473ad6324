"""Reading and writing session directories.

Layout of a session directory::

    session.json          metadata, trial schedule, seed, config echo
    kin_<source>.csv      t,dof0..dof7 at 9 significant digits
    emg.bin               b"EMG1", u32 channels, u32 rate, u64 samples, f32 LE data
    ground_truth.json     simulator log (optional)
"""

from __future__ import annotations

import io
import json
import struct
from pathlib import Path

import numpy as np

from .core import (
    FRAME_RATE,
    N_DOF,
    EmgBlock,
    KinematicStream,
    MovementSpec,
    SessionDataset,
    Source,
    TrialRecord,
    frame_times,
)

EMG_MAGIC = b"EMG1"
_EMG_HEADER = struct.Struct("<4sIIQ")
FORMAT_VERSION = 1


class SessionFormatError(ValueError):
    pass


def dump_json(obj, path: Path) -> None:
    text = json.dumps(obj, indent=1, sort_keys=True, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def write_emg(emg: EmgBlock, path: Path) -> None:
    with open(path, "wb") as fh:
        fh.write(_EMG_HEADER.pack(EMG_MAGIC, emg.channels, emg.sample_rate, emg.n_samples))
        fh.write(np.ascontiguousarray(emg.samples, dtype="<f4").tobytes())


def read_emg(path: Path, t0: float = 0.0) -> EmgBlock:
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(_EMG_HEADER.size)
        if len(head) != _EMG_HEADER.size:
            raise SessionFormatError(f"{path}: truncated header")
        magic, channels, rate, count = _EMG_HEADER.unpack(head)
        if magic != EMG_MAGIC:
            raise SessionFormatError(f"{path}: bad magic {magic!r}")
        data = np.frombuffer(fh.read(), dtype="<f4")
    if data.size != channels * count:
        raise SessionFormatError(f"{path}: expected {channels * count} samples, found {data.size}")
    return EmgBlock(data.reshape(count, channels).astype(np.float32), sample_rate=rate, t0=t0)


def stream_to_csv(stream: KinematicStream) -> str:
    buf = io.StringIO()
    header = "t," + ",".join(f"dof{i}" for i in range(N_DOF))
    table = np.column_stack([stream.t, stream.angles.astype(float)])
    np.savetxt(buf, table, fmt="%.9g", delimiter=",", header=header, comments="")
    return buf.getvalue()


def stream_from_csv(text: str, source: Source, t0: float) -> KinematicStream:
    table = np.loadtxt(io.StringIO(text), delimiter=",", skiprows=1, ndmin=2)
    if table.shape[1] != N_DOF + 1:
        raise SessionFormatError(f"kinematics CSV must have {N_DOF + 1} columns")
    # timestamps are stored at 9 digits; the grid itself is exact
    t = frame_times(len(table), t0)
    if not np.allclose(table[:, 0], t, rtol=1e-8, atol=1e-6):
        raise SessionFormatError("kinematic timestamps are not on the 30 Hz grid")
    return KinematicStream(t, table[:, 1:].astype(np.float32), source)


def save_session(session: SessionDataset, directory, ground_truth: dict | None = None) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    t = session.frame_times
    meta = {
        "format_version": FORMAT_VERSION,
        "participant_id": session.participant_id,
        "seed": session.seed,
        "frame_rate": FRAME_RATE,
        "n_frames": len(t),
        "t0": float(t[0]),
        "baseline_rest_window": list(session.baseline_rest_window),
        "catalog": [m.to_dict() for m in session.catalog],
        "trials": [tr.to_dict() for tr in session.trials],
        "streams": sorted(s.value for s in session.streams),
        "has_emg": session.emg is not None,
        "config": session.config,
    }
    dump_json(meta, d / "session.json")
    for src, stream in session.streams.items():
        (d / f"kin_{src.value}.csv").write_text(stream_to_csv(stream), encoding="utf-8")
    if session.emg is not None:
        write_emg(session.emg, d / "emg.bin")
    if ground_truth is not None:
        dump_json(ground_truth, d / "ground_truth.json")
    return d


def load_session(directory, load_emg: bool = True) -> SessionDataset:
    d = Path(directory)
    meta_path = d / "session.json"
    if not meta_path.is_file():
        raise SessionFormatError(f"{d}: missing session.json")
    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        t0 = float(meta["t0"])
        streams = {}
        for name in meta["streams"]:
            src = Source(name)
            streams[src] = stream_from_csv((d / f"kin_{name}.csv").read_text(encoding="utf-8"), src, t0)
            if len(streams[src]) != meta["n_frames"]:
                raise SessionFormatError(f"{d}: kin_{name}.csv has wrong frame count")
        emg = read_emg(d / "emg.bin", t0=t0) if (load_emg and meta["has_emg"]) else None
        return SessionDataset(
            participant_id=meta["participant_id"],
            seed=int(meta["seed"]),
            catalog=[MovementSpec.from_dict(m) for m in meta["catalog"]],
            trials=[TrialRecord.from_dict(tr) for tr in meta["trials"]],
            streams=streams,
            emg=emg,
            baseline_rest_window=tuple(meta["baseline_rest_window"]),
            config=meta.get("config", {}),
        )
    except SessionFormatError:
        raise
    except FileNotFoundError as exc:
        raise SessionFormatError(f"{d}: missing {Path(exc.filename).name}") from exc
    except (KeyError, ValueError, OSError, json.JSONDecodeError) as exc:
        raise SessionFormatError(f"{d}: corrupt session ({exc})") from exc


def load_ground_truth(directory) -> dict:
    return json.loads((Path(directory) / "ground_truth.json").read_text(encoding="utf-8"))
