"""Single-file model checkpoints.

Layout: the 8-byte magic ``FCNCDCK1``, an unsigned 64-bit little-endian
header length, a UTF-8 JSON header, then every parameter as row-major
little-endian float64 in header order. The header records the model kind,
its constructor parameters, the dataset shape it was fitted on and the
shape and byte offset of each parameter.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .baselines import BaselineKind, make_baseline
from .model import FCNCD

__all__ = ["save_checkpoint", "load_checkpoint", "read_header", "model_kind", "CheckpointError", "MAGIC"]

MAGIC = b"FCNCDCK1"
_LEN = struct.Struct("<Q")


class CheckpointError(ValueError):
    pass


def model_kind(model) -> str:
    if isinstance(model, FCNCD):
        return "fcncd"
    for kind in BaselineKind:
        if type(model) is type(make_baseline(kind)):
            return kind.value
    raise CheckpointError(f"cannot checkpoint {type(model).__name__}")


def _build(kind: str, config: dict):
    if kind == "fcncd":
        return FCNCD(**config)
    try:
        return make_baseline(kind, **config)
    except ValueError:
        raise CheckpointError(f"unknown model kind {kind!r}") from None


def _jsonable(value):
    if isinstance(value, np.generic):
        return value.item()
    return value


def save_checkpoint(model, path) -> Path:
    """Write a fitted model to ``path``."""
    if not hasattr(model, "params_"):
        raise CheckpointError("model is not fitted")
    names = sorted(model.params_)
    params, offset = [], 0
    for name in names:
        arr = np.ascontiguousarray(model.params_[name], dtype="<f8")
        params.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.nbytes
    header = {
        "kind": model_kind(model),
        "config": {k: _jsonable(v) for k, v in model.get_params().items()},
        "fitted": {
            "n_participants": int(model.n_participants_),
            "n_dims": int(model.n_dims_),
            "n_items": int(model.n_items_),
            "item_dims": [int(k) for k in model.item_dims_],
            "block_type": str(getattr(model.block_type_, "value", model.block_type_)),
            "best_epoch": int(getattr(model, "best_epoch_", 0)),
        },
        "params": params,
        "payload_bytes": offset,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_LEN.pack(len(blob)))
        fh.write(blob)
        for name in names:
            fh.write(np.ascontiguousarray(model.params_[name], dtype="<f8").tobytes())
    return path


def read_header(path) -> tuple[dict, bytes]:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC or len(raw) < 16:
        raise CheckpointError(f"{path}: not a model checkpoint")
    (n,) = _LEN.unpack(raw[8:16])
    try:
        header = json.loads(raw[16:16 + n])
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header ({exc})") from None
    payload = raw[16 + n:]
    if len(payload) != header.get("payload_bytes"):
        raise CheckpointError(f"{path}: payload is {len(payload)} bytes, header says {header.get('payload_bytes')}")
    return header, payload


def load_checkpoint(path):
    """Rebuild the fitted estimator stored at ``path``."""
    from .data import BlockType

    header, payload = read_header(path)
    model = _build(header["kind"], header["config"])
    params = {}
    for spec in header["params"]:
        count = int(np.prod(spec["shape"], dtype=np.int64))
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=spec["offset"])
        params[spec["name"]] = arr.reshape(spec["shape"]).astype(np.float64)
    fitted = header["fitted"]
    model.params_ = params
    model.n_participants_ = fitted["n_participants"]
    model.n_dims_ = fitted["n_dims"]
    model.n_items_ = fitted["n_items"]
    model.item_dims_ = np.asarray(fitted["item_dims"], dtype=np.int64)
    model.block_type_ = BlockType(fitted["block_type"])
    model.best_epoch_ = fitted["best_epoch"]
    model.history_ = []
    return model
