"""Binary model checkpoints.

Layout::

    magic (8 bytes) | version (uint32 LE) | header length (uint64 LE)
    | JSON header | tensor payload | SHA-256 of everything before it

The header records the model kind, hyperparameters, the training seed,
free-form extras and, per tensor, its name, dtype and shape. Tensors are
stored little-endian in header order. The version is checked before the
checksum so a file from another format revision is reported as such rather
than as corruption.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .diffusion import DenoiserModel, schedule_from_betas
from .forecast.ensemble import EnsembleModel, Tree
from .timegan import TimeGanModel

MAGIC = b"LDAUGCK\x00"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<8sIQ")
_DIGEST = 32
_DTYPES = {"float64": "<f8", "int64": "<i8"}


class CheckpointError(ValueError):
    """Unreadable checkpoint."""


class ChecksumError(CheckpointError):
    """Content does not match the stored digest (corrupt or truncated)."""


class VersionError(CheckpointError):
    """Checkpoint written by a different format version."""


@dataclass
class Checkpoint:
    kind: str
    hyperparameters: dict
    tensors: dict
    seed: int = 0
    extra: dict = field(default_factory=dict)
    version: int = FORMAT_VERSION


def _encode(a: np.ndarray) -> tuple[str, bytes]:
    a = np.asarray(a)
    if np.issubdtype(a.dtype, np.floating):
        name = "float64"
    elif np.issubdtype(a.dtype, np.integer) or a.dtype == bool:
        name = "int64"
    else:
        raise CheckpointError(f"cannot store dtype {a.dtype}")
    return name, np.ascontiguousarray(a, dtype=_DTYPES[name]).tobytes()


def dumps(ckpt: Checkpoint) -> bytes:
    entries, chunks = [], []
    for name in sorted(ckpt.tensors):
        arr = np.asarray(ckpt.tensors[name])
        dtype, raw = _encode(arr)
        entries.append({"name": name, "dtype": dtype, "shape": list(arr.shape)})
        chunks.append(raw)
    header = {
        "format_version": ckpt.version,
        "kind": ckpt.kind,
        "hyperparameters": ckpt.hyperparameters,
        "seed": int(ckpt.seed),
        "extra": ckpt.extra,
        "tensors": entries,
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = _PREFIX.pack(MAGIC, ckpt.version, len(head)) + head + b"".join(chunks)
    return body + hashlib.sha256(body).digest()


def loads(blob: bytes) -> Checkpoint:
    if len(blob) < _PREFIX.size + _DIGEST:
        raise ChecksumError("checkpoint truncated")
    magic, version, head_len = _PREFIX.unpack_from(blob)
    if magic != MAGIC:
        raise CheckpointError("not a checkpoint file")
    if version != FORMAT_VERSION:
        raise VersionError(f"checkpoint format version {version}, this build reads {FORMAT_VERSION}")
    body, digest = blob[:-_DIGEST], blob[-_DIGEST:]
    if hashlib.sha256(body).digest() != digest:
        raise ChecksumError("checkpoint checksum mismatch")
    header = json.loads(body[_PREFIX.size : _PREFIX.size + head_len].decode("utf-8"))
    if header.get("format_version") != FORMAT_VERSION:
        raise VersionError(f"header declares format version {header.get('format_version')}")
    offset = _PREFIX.size + head_len
    tensors = {}
    for e in header["tensors"]:
        dt = np.dtype(_DTYPES[e["dtype"]])
        count = int(np.prod(e["shape"], dtype=np.int64))
        end = offset + count * dt.itemsize
        if end > len(body):
            raise ChecksumError("tensor payload shorter than declared")
        arr = np.frombuffer(body[offset:end], dtype=dt).reshape(e["shape"]).astype(dt.newbyteorder("="))
        tensors[e["name"]] = arr
        offset = end
    if offset != len(body):
        raise CheckpointError("trailing bytes after tensor payload")
    return Checkpoint(header["kind"], header["hyperparameters"], tensors, header["seed"], header["extra"], version)


def write_checkpoint(path, ckpt: Checkpoint) -> Path:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(dumps(ckpt))
    os.replace(tmp, path)
    return path


def read_checkpoint(path) -> Checkpoint:
    return loads(Path(path).read_bytes())


# ---------------------------------------------------------------- model adapters


def _diffusion_ckpt(model, schedule, seed, extra):
    if not isinstance(model, DenoiserModel):
        raise TypeError("expected a DenoiserModel")
    if schedule is None:
        raise ValueError("a diffusion checkpoint needs its noise schedule")
    extra = {**extra, "schedule": {"T": schedule.T, "beta": schedule.beta[1:].tolist()}}
    return Checkpoint("diffusion", model.hyperparameters(), dict(model.params), seed, extra)


def _timegan_ckpt(model, seed, extra):
    extra = {**extra, "steps_trained": dict(model.steps_trained)}
    return Checkpoint("timegan", model.hyperparameters(), dict(model.params), seed if seed is not None else model.seed, extra)


def _ensemble_ckpt(model, seed, extra):
    tensors = {"weights": model.weights}
    for i, tree in enumerate(model.trees):
        for f in ("feature", "threshold", "left", "right", "value", "n_samples"):
            tensors[f"tree{i:05d}.{f}"] = getattr(tree, f)
    hyper = {"kind": model.kind, "n_trees": len(model.trees), "n_features": model.n_features, "base_score": model.base_score}
    return Checkpoint("ensemble", hyper, tensors, seed, extra)


def save_model(model, path, schedule=None, seed: int | None = None, extra: dict | None = None) -> Path:
    """Write a diffusion denoiser (with ``schedule``), a TimeGAN or a tree
    ensemble. ``extra`` must be JSON-serializable."""
    extra = dict(extra or {})
    if isinstance(model, DenoiserModel):
        ckpt = _diffusion_ckpt(model, schedule, seed or 0, extra)
    elif isinstance(model, TimeGanModel):
        ckpt = _timegan_ckpt(model, seed, extra)
    elif isinstance(model, EnsembleModel):
        ckpt = _ensemble_ckpt(model, seed or 0, extra)
    else:
        raise TypeError(f"cannot checkpoint {type(model).__name__}")
    return write_checkpoint(path, ckpt)


@dataclass
class LoadedModel:
    kind: str
    model: object
    schedule: object = None
    seed: int = 0
    extra: dict = field(default_factory=dict)


def load_model(path) -> LoadedModel:
    ckpt = read_checkpoint(path)
    if ckpt.kind == "diffusion":
        model = DenoiserModel(params=dict(ckpt.tensors), **ckpt.hyperparameters)
        sched = schedule_from_betas(ckpt.extra["schedule"]["beta"])
        return LoadedModel("diffusion", model, sched, ckpt.seed, ckpt.extra)
    if ckpt.kind == "timegan":
        hp = ckpt.hyperparameters
        model = TimeGanModel(dict(ckpt.tensors), hp["n_channels"], hp["hidden"], hp["seed"], dict(ckpt.extra["steps_trained"]))
        return LoadedModel("timegan", model, None, ckpt.seed, ckpt.extra)
    if ckpt.kind == "ensemble":
        hp = ckpt.hyperparameters
        t = ckpt.tensors
        trees = tuple(
            Tree(*(t[f"tree{i:05d}.{f}"] for f in ("feature", "threshold", "left", "right", "value", "n_samples")))
            for i in range(hp["n_trees"])
        )
        model = EnsembleModel(hp["kind"], trees, t["weights"], hp["base_score"], hp["n_features"])
        return LoadedModel("ensemble", model, None, ckpt.seed, ckpt.extra)
    raise CheckpointError(f"unknown model kind {ckpt.kind!r}")

