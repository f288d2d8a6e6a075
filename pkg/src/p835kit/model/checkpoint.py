"""Checkpoint container: a JSON header followed by little-endian float32
tensor blobs in header order.

Layout::

    b"P835CKPT" | uint32 version | uint64 header length | header JSON | blobs
"""

from __future__ import annotations

import hashlib
import json
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .network import (
    FRONTEND_TENSORS,
    EncoderModel,
    ModelConfig,
    OvrlHead,
    RegressionHead,
    frontend_tensors,
    init_head,
    init_trunk,
    trunk_names,
)

MAGIC = b"P835CKPT"
VERSION = 1
_PREFIX = struct.Struct("<8sIQ")


class CheckpointError(ValueError):
    pass


class ConfigMismatchWarning(UserWarning):
    pass


def tensor_digest(tensors: dict[str, np.ndarray], names=None) -> str:
    h = hashlib.sha256()
    for name in names if names is not None else tensors:
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        h.update(name.encode())
        h.update(str(arr.shape).encode())
        h.update(arr.tobytes())
    return h.hexdigest()


@dataclass(eq=False)
class Checkpoint:
    encoder: EncoderModel
    head: RegressionHead
    freeze_mask: dict[str, bool]
    metadata: dict = field(default_factory=dict)

    @property
    def config(self) -> ModelConfig:
        return self.encoder.config

    def tensors(self) -> dict[str, np.ndarray]:
        out = dict(self.encoder.tensors)
        out["head.weight"] = self.head.weight
        out["head.bias"] = self.head.bias
        return out

    def backbone_digest(self) -> str:
        return tensor_digest(self.encoder.tensors)

    def digest(self) -> str:
        return tensor_digest(self.tensors())

    @property
    def stages(self) -> list[dict]:
        return list(self.metadata.get("stages", []))

    @classmethod
    def from_tensors(cls, config: ModelConfig, tensors: dict[str, np.ndarray], freeze_mask, metadata) -> "Checkpoint":
        enc = {k: v for k, v in tensors.items() if not k.startswith("head.")}
        return cls(
            EncoderModel(config, enc),
            RegressionHead(tensors["head.weight"], tensors["head.bias"]),
            dict(freeze_mask),
            dict(metadata),
        )


def tensor_names(config: ModelConfig) -> list[str]:
    return list(FRONTEND_TENSORS) + trunk_names(config.n_layers) + ["head.weight", "head.bias"]


def init_checkpoint(config: ModelConfig | None = None, seed: int = 0) -> Checkpoint:
    """Freshly initialized predictor; only the front-end is frozen."""
    config = ModelConfig() if config is None else config
    rng = np.random.default_rng(seed)
    tensors = frontend_tensors(config.frontend)
    tensors.update(init_trunk(config, rng))
    weight, bias = init_head(config.embedding_dim, rng)
    tensors["head.weight"], tensors["head.bias"] = weight, bias
    mask = {name: name.startswith("frontend.") for name in tensors}
    meta = {"config_hash": config.hash(), "init_seed": seed, "stages": []}
    return Checkpoint.from_tensors(config, tensors, mask, meta)


# --------------------------------------------------------------------------
# Container I/O
# --------------------------------------------------------------------------

def _write_container(path, header: dict, tensors: dict[str, np.ndarray]) -> None:
    entries = []
    blobs = []
    offset = 0
    for name, arr in tensors.items():
        blob = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        entries.append({"name": name, "shape": list(np.shape(arr)), "offset": offset, "nbytes": len(blob)})
        blobs.append(blob)
        offset += len(blob)
    header = dict(header, format="p835kit-checkpoint", tensors=entries)
    head_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_PREFIX.pack(MAGIC, VERSION, len(head_bytes)))
        fh.write(head_bytes)
        for blob in blobs:
            fh.write(blob)


def _read_container(path) -> tuple[dict, dict[str, np.ndarray]]:
    data = Path(path).read_bytes()
    if len(data) < _PREFIX.size:
        raise CheckpointError(f"{path}: file too short for a checkpoint")
    magic, version, head_len = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: bad magic bytes")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported container version {version}")
    start = _PREFIX.size
    if start + head_len > len(data):
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(data[start:start + head_len].decode("utf-8"))
        entries = header["tensors"]
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise CheckpointError(f"{path}: corrupt header ({exc})") from exc
    body = data[start + head_len:]
    tensors = {}
    expected_end = 0
    for e in entries:
        shape = tuple(e["shape"])
        n = int(np.prod(shape, dtype=np.int64)) * 4
        if e["nbytes"] != n or e["offset"] != expected_end:
            raise CheckpointError(f"{path}: tensor {e['name']} has inconsistent shape/blob length")
        if e["offset"] + n > len(body):
            raise CheckpointError(f"{path}: tensor {e['name']} blob truncated")
        arr = np.frombuffer(body, dtype="<f4", count=n // 4, offset=e["offset"]).reshape(shape)
        tensors[e["name"]] = arr.astype(np.float32)
        expected_end += n
    if expected_end != len(body):
        raise CheckpointError(f"{path}: {len(body) - expected_end} trailing bytes after tensor blobs")
    return header, tensors


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    header = {
        "kind": "predictor",
        "config": ckpt.config.to_dict(),
        "config_hash": ckpt.config.hash(),
        "freeze_mask": ckpt.freeze_mask,
        "metadata": ckpt.metadata,
    }
    _write_container(path, header, ckpt.tensors())


def load_checkpoint(path, expected_config: ModelConfig | None = None) -> Checkpoint:
    header, tensors = _read_container(path)
    if header.get("kind") != "predictor":
        raise CheckpointError(f"{path}: not a predictor checkpoint (kind={header.get('kind')!r})")
    try:
        config = ModelConfig.from_dict(header["config"])
        mask = {k: bool(v) for k, v in header["freeze_mask"].items()}
        metadata = header["metadata"]
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: corrupt header ({exc})") from exc
    missing = set(tensor_names(config)) - set(tensors)
    if missing:
        raise CheckpointError(f"{path}: missing tensors {sorted(missing)}")
    if header.get("config_hash") != config.hash():
        raise CheckpointError(f"{path}: stored config hash does not match stored config")
    if expected_config is not None and expected_config.hash() != config.hash():
        warnings.warn(
            f"{path}: checkpoint config {config.hash()} differs from requested {expected_config.hash()}",
            ConfigMismatchWarning,
            stacklevel=2,
        )
    return Checkpoint.from_tensors(config, tensors, mask, metadata)


def save_ovrl_head(head: OvrlHead, path) -> None:
    header = {"kind": "ovrl_head", "metadata": head.metadata}
    _write_container(path, header, {"ovrl.weight": head.weight, "ovrl.bias": head.bias})


def load_ovrl_head(path) -> OvrlHead:
    header, tensors = _read_container(path)
    if header.get("kind") != "ovrl_head":
        raise CheckpointError(f"{path}: not an OVRL head (kind={header.get('kind')!r})")
    if set(tensors) != {"ovrl.weight", "ovrl.bias"}:
        raise CheckpointError(f"{path}: unexpected tensors {sorted(tensors)}")
    return OvrlHead(tensors["ovrl.weight"], tensors["ovrl.bias"], dict(header.get("metadata", {})))
