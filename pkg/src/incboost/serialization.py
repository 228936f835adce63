"""Ensemble model files.

Layout (big-endian)::

    8 bytes   magic b"INCBOOST"
    u32       format version
    u64       header length
    header    UTF-8 JSON: config, per-round metadata, array directory
    payload   raw array bytes in directory order

The header is written with sorted keys and the payload in a fixed order, so
saving the same ensemble twice produces identical files.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Tuple, Union

import numpy as np

from incboost.boosting import BoostRound, Ensemble
from incboost.network import Network, NetworkSpec, NetworkSpecError, freeze_params
from incboost.training import TrainReport

MAGIC = b"INCBOOST"
FORMAT_VERSION = 1
_PREAMBLE = struct.Struct(">8sIQ")

PathLike = Union[str, Path]


class ModelFormatError(ValueError):
    pass


class ModelVersionError(ModelFormatError):
    pass


class ModelTruncatedError(ModelFormatError):
    pass


class ModelValidationError(ModelFormatError):
    pass


def _report_without_timing(report: TrainReport) -> Dict[str, object]:
    # wall time stays out of model files; repeated saves must match byte for byte
    data = report.to_dict()
    data.pop("wall_time")
    return data


def _round_header(round_: BoostRound, arrays: List[Dict[str, object]]) -> Dict[str, object]:
    return {
        "spec": round_.member.spec.to_dict(),
        "seed": round_.member.seed,
        "beta": round_.beta,
        "pseudo_loss": round_.pseudo_loss,
        "raw_pseudo_loss": round_.raw_pseudo_loss,
        "resample_seed": round_.resample_seed,
        "train_report": _report_without_timing(round_.train_report),
        "arrays": arrays,
    }


def dumps_model(ensemble: Ensemble, config: Optional[Mapping[str, object]] = None) -> bytes:
    payload: List[bytes] = []
    offset = 0
    rounds = []
    for round_ in ensemble.rounds:
        arrays: List[Dict[str, object]] = []
        for layer_index, params in enumerate(round_.member.params):
            for name in sorted(params):
                data = np.ascontiguousarray(params[name])
                raw = data.tobytes()
                arrays.append(
                    {
                        "layer": layer_index,
                        "name": name,
                        "dtype": data.dtype.str,
                        "shape": list(data.shape),
                        "offset": offset,
                        "nbytes": len(raw),
                    }
                )
                payload.append(raw)
                offset += len(raw)
        rounds.append(_round_header(round_, arrays))
    header = {
        "format_version": FORMAT_VERSION,
        "num_classes": ensemble.num_classes,
        "input_shape": list(ensemble.input_shape),
        "config": dict(config or {}),
        "rounds": rounds,
        "payload_bytes": offset,
    }
    encoded = json.dumps(header, sort_keys=True).encode("utf-8")
    return _PREAMBLE.pack(MAGIC, FORMAT_VERSION, len(encoded)) + encoded + b"".join(payload)


def save_model(ensemble: Ensemble, path: PathLike, config: Optional[Mapping[str, object]] = None) -> None:
    Path(path).write_bytes(dumps_model(ensemble, config))


def _member(entry: Mapping[str, object], payload: bytes) -> Network:
    try:
        spec = NetworkSpec.from_dict(entry["spec"])  # type: ignore[arg-type]
    except NetworkSpecError as exc:
        raise ModelValidationError(f"stored network spec is invalid: {exc}") from exc
    params: List[Dict[str, np.ndarray]] = [{} for _ in spec.layers]
    for array in entry["arrays"]:  # type: ignore[union-attr]
        offset, nbytes = int(array["offset"]), int(array["nbytes"])
        if offset + nbytes > len(payload):
            raise ModelTruncatedError("model payload ends before its arrays do")
        dtype = np.dtype(array["dtype"])
        values = np.frombuffer(payload, dtype=dtype, count=nbytes // dtype.itemsize, offset=offset)
        params[int(array["layer"])][str(array["name"])] = values.reshape(array["shape"])
    try:
        return Network(spec=spec, params=freeze_params(params), seed=int(entry["seed"]))  # type: ignore[arg-type]
    except NetworkSpecError as exc:
        raise ModelValidationError(f"stored parameters do not fit their spec: {exc}") from exc


def loads_model(
    raw: bytes,
    expected_classes: Optional[int] = None,
) -> Tuple[Ensemble, Dict[str, object]]:
    """Parse a model file; returns the ensemble and the config stored with it."""

    if len(raw) < _PREAMBLE.size:
        raise ModelTruncatedError("model file is shorter than its preamble")
    magic, version, header_length = _PREAMBLE.unpack_from(raw)
    if magic != MAGIC:
        raise ModelFormatError("not an incboost model file")
    if version != FORMAT_VERSION:
        raise ModelVersionError(
            f"model format version {version} is not supported (expected {FORMAT_VERSION})"
        )
    start = _PREAMBLE.size
    if len(raw) < start + header_length:
        raise ModelTruncatedError("model file ends inside its header")
    try:
        header = json.loads(raw[start:start + header_length].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"model header is unreadable: {exc}") from exc
    payload = raw[start + header_length:]
    if len(payload) < int(header["payload_bytes"]):
        raise ModelTruncatedError(
            f"model payload has {len(payload)} of {header['payload_bytes']} bytes"
        )

    num_classes = int(header["num_classes"])
    if expected_classes is not None and expected_classes != num_classes:
        raise ModelValidationError(
            f"model predicts {num_classes} classes, expected {expected_classes}"
        )
    rounds = []
    for entry in header["rounds"]:
        member = _member(entry, payload)
        if member.num_classes != num_classes:
            raise ModelValidationError(
                f"a member outputs {member.num_classes} classes, the model declares {num_classes}"
            )
        rounds.append(
            BoostRound(
                member=member,
                beta=float(entry["beta"]),
                pseudo_loss=float(entry["pseudo_loss"]),
                train_report=TrainReport.from_dict({**entry["train_report"], "wall_time": 0.0}),
                resample_seed=entry.get("resample_seed"),
                raw_pseudo_loss=entry.get("raw_pseudo_loss"),
            )
        )
    try:
        ensemble = Ensemble(rounds=tuple(rounds), num_classes=num_classes)
    except ValueError as exc:
        raise ModelValidationError(str(exc)) from exc
    return ensemble, dict(header.get("config", {}))


def load_model(
    path: PathLike,
    expected_classes: Optional[int] = None,
) -> Tuple[Ensemble, Dict[str, object]]:
    return loads_model(Path(path).read_bytes(), expected_classes=expected_classes)
