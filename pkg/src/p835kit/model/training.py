"""Training protocol: warm-up schedule, MSE regression on random 1 s crops,
best-epoch selection on validation loss, two-stage transfer, OVRL heads."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..audio import AudioClip, center_crop, load_canonical, random_crop
from ..dataset import Manifest
from .checkpoint import Checkpoint, init_checkpoint, tensor_digest
from .network import (
    ModelConfig,
    OvrlHead,
    clamp_score,
    pooled,
    regression_loss_and_grads,
    trunk_names,
)

STAGE_EPOCHS = {"stage1": 20, "stage2": 500, "ovrl": 200}
FREEZE_MODES = ("frontend_only", "all_encoder", "all")
OPTIMIZERS = ("sgd", "adam")
TARGETS = ("sig", "bak")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 3e-5
    warmup_ratio: float = 0.1
    epochs: int = STAGE_EPOCHS["stage1"]
    batch_size: int = 16
    crop_seconds: float = 1.0
    seed: int = 0
    freeze: str = "frontend_only"
    optimizer: str = "sgd"

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.warmup_ratio <= 1.0:
            raise ValueError("warmup_ratio must lie in [0, 1]")
        if self.epochs < 0 or self.batch_size < 1 or self.crop_seconds <= 0:
            raise ValueError("epochs >= 0, batch_size >= 1 and crop_seconds > 0 required")
        if self.freeze not in FREEZE_MODES:
            raise ValueError(f"freeze must be one of {FREEZE_MODES}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")

    @classmethod
    def for_stage(cls, stage: str, **overrides) -> "TrainConfig":
        return cls(epochs=STAGE_EPOCHS[stage], **overrides)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def warmup_steps(total_steps: int, cfg: TrainConfig) -> int:
    return int(math.ceil(cfg.warmup_ratio * total_steps))


def lr_at(step: int, total_steps: int, cfg: TrainConfig) -> float:
    """Linear warm-up from 0 to the peak rate, then linear decay to 0."""
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    warm = warmup_steps(total_steps, cfg)
    if step < warm:
        return cfg.learning_rate * (step / warm)
    if total_steps == warm:
        return cfg.learning_rate if step < total_steps else 0.0
    # ratio first so the peak is exactly the configured rate
    return cfg.learning_rate * ((total_steps - step) / (total_steps - warm))


def mse_loss(preds, targets) -> float:
    preds = np.asarray(preds, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if preds.shape != targets.shape or preds.size == 0:
        raise ValueError(f"length mismatch or empty input: {preds.shape} vs {targets.shape}")
    return float(np.mean((preds - targets) ** 2))


def freeze_mask_for(names, mode: str) -> dict[str, bool]:
    if mode not in FREEZE_MODES:
        raise ValueError(f"freeze must be one of {FREEZE_MODES}")
    if mode == "all":
        return {n: True for n in names}
    if mode == "all_encoder":
        return {n: not n.startswith("head.") for n in names}
    return {n: n.startswith("frontend.") for n in names}


class _Optimizer:
    def __init__(self, kind: str, params: dict[str, np.ndarray]):
        self.kind = kind
        self.t = 0
        if kind == "adam":
            self.m = {k: np.zeros_like(v) for k, v in params.items()}
            self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray], lr: float,
             beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
        if self.kind == "sgd":
            for k in params:
                params[k] -= lr * grads[k]
            return
        self.t += 1
        for k in params:
            g = grads[k]
            self.m[k] = beta1 * self.m[k] + (1 - beta1) * g
            self.v[k] = beta2 * self.v[k] + (1 - beta2) * g * g
            m_hat = self.m[k] / (1 - beta1 ** self.t)
            v_hat = self.v[k] / (1 - beta2 ** self.t)
            params[k] -= lr * m_hat / (np.sqrt(v_hat) + eps)


class ClipStore:
    """Loads manifest audio once per training call."""

    def __init__(self, manifest: Manifest, loader: Callable = load_canonical):
        self.manifest = manifest
        self._loader = loader
        self._clips: dict[str, AudioClip] = {}

    def __getitem__(self, entry) -> AudioClip:
        clip = self._clips.get(entry.id)
        if clip is None:
            clip = self._loader(self.manifest.resolve(entry))
            self._clips[entry.id] = clip
        return clip


def _labeled(manifest: Manifest, target: str, what: str):
    if manifest is None or len(manifest) == 0:
        raise ValueError(f"{what} manifest is empty")
    missing = [e.id for e in manifest if e.label(target) is None]
    if missing:
        raise ValueError(f"{what} entries without a {target} label: {missing[:5]}{'...' if len(missing) > 5 else ''}")
    entries = list(manifest.entries)
    return entries, np.array([e.label(target) for e in entries], dtype=np.float64)


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def _stack_features(encoder, clips) -> np.ndarray:
    return np.stack([encoder.features(c) for c in clips])


def _encoder_params64(ckpt: Checkpoint) -> dict[str, np.ndarray]:
    return {k: v.astype(np.float64) for k, v in ckpt.encoder.trunk_params().items()}


def train_stage(
    init: Checkpoint,
    train: Manifest,
    valid: Manifest,
    target: str,
    cfg: TrainConfig,
    *,
    stage: str = "stage1",
    epoch_log: Callable[[dict], None] | None = None,
    loader: Callable = load_canonical,
) -> Checkpoint:
    """Fine-tune ``init`` on one target; return the best-validation epoch.

    Each step regresses a mini-batch of random ``crop_seconds`` crops with MSE
    (unclamped outputs). Validation uses centered crops and runs after every
    epoch. Tensors frozen by ``cfg.freeze`` (always including the front-end)
    are never written to.
    """
    if target not in TARGETS:
        raise ValueError(f"target must be one of {TARGETS}")
    train_entries, y_train = _labeled(train, target, "training")
    valid_entries, y_valid = _labeled(valid, target, "validation")
    if cfg.epochs == 0:
        return init

    names = list(init.tensors())
    mask = freeze_mask_for(names, cfg.freeze)
    tensors = init.tensors()
    trainable = [n for n in names if not mask[n]]
    n_layers = init.config.n_layers
    params = {n: tensors[n].astype(np.float64) for n in trunk_names(n_layers) + ["head.weight", "head.bias"]}
    opt = _Optimizer(cfg.optimizer, {n: params[n] for n in trainable})

    rng = np.random.default_rng(cfg.seed)
    store = ClipStore(train, loader)
    valid_store = ClipStore(valid, loader)
    encoder = init.encoder
    x_valid = _stack_features(encoder, [center_crop(valid_store[e], cfg.crop_seconds) for e in valid_entries])

    def valid_loss() -> float:
        emb = pooled(params, x_valid, n_layers)
        return mse_loss(emb @ params["head.weight"] + params["head.bias"], y_valid)

    steps_per_epoch = math.ceil(len(train_entries) / cfg.batch_size)
    total = steps_per_epoch * cfg.epochs
    step = 0
    best = None
    for epoch in range(1, cfg.epochs + 1):
        losses = []
        for idx in _batches(len(train_entries), cfg.batch_size, rng):
            crops = [random_crop(store[train_entries[i]], cfg.crop_seconds, rng) for i in idx]
            loss, grads, _ = regression_loss_and_grads(params, _stack_features(encoder, crops), y_train[idx], n_layers)
            opt.step({n: params[n] for n in trainable}, grads, lr_at(step, total, cfg))
            step += 1
            losses.append(loss * len(idx))
        v = valid_loss()
        record = {"epoch": epoch, "train_loss": float(sum(losses) / len(train_entries)), "valid_loss": v}
        if epoch_log is not None:
            epoch_log(record)
        if best is None or v < best[1]:
            best = (epoch, v, {n: params[n].astype(np.float32) for n in trainable})

    best_epoch, best_loss, snapshot = best
    out = dict(tensors)
    out.update(snapshot)
    meta = dict(init.metadata)
    meta["config_hash"] = init.config.hash()
    meta["stages"] = init.stages + [{
        "stage": stage,
        "target": target,
        "epoch": best_epoch,
        "valid_loss": best_loss,
        "epochs": cfg.epochs,
        "seed": cfg.seed,
        "train_config": cfg.to_dict(),
        "n_train": len(train_entries),
        "n_valid": len(valid_entries),
    }]
    return Checkpoint.from_tensors(init.config, out, mask, meta)


def two_stage(
    stage1: tuple[Manifest, Manifest],
    stage2: tuple[Manifest, Manifest],
    target: str,
    cfg1: TrainConfig,
    cfg2: TrainConfig,
    *,
    model_config: ModelConfig | None = None,
    init: Checkpoint | None = None,
    init_seed: int | None = None,
    epoch_log: Callable[[dict], None] | None = None,
    loader: Callable = load_canonical,
) -> Checkpoint:
    """Fine-tune on automatically labeled data, then on subjective labels.

    Both stages freeze only the front-end. ``init`` defaults to a fresh
    model seeded from ``init_seed`` (or ``cfg1.seed``).
    """
    for cfg in (cfg1, cfg2):
        if cfg.freeze != "frontend_only":
            raise ValueError("two-stage training freezes the front-end only")
    if init is None:
        init = init_checkpoint(model_config, cfg1.seed if init_seed is None else init_seed)

    def tagged(stage):
        if epoch_log is None:
            return None
        return lambda rec: epoch_log(dict(rec, stage=stage))

    first = train_stage(init, *stage1, target, cfg1, stage="stage1", epoch_log=tagged("stage1"), loader=loader)
    return train_stage(first, *stage2, target, cfg2, stage="stage2", epoch_log=tagged("stage2"), loader=loader)


# --------------------------------------------------------------------------
# Inference
# --------------------------------------------------------------------------

def encode(encoder, clip: AudioClip) -> np.ndarray:
    """Mean-pooled trunk embedding of a whole clip (float64)."""
    params = {k: v.astype(np.float64) for k, v in encoder.trunk_params().items()}
    return pooled(params, encoder.features(clip), encoder.config.n_layers)


def predict_raw(ckpt: Checkpoint, clip: AudioClip) -> float:
    emb = encode(ckpt.encoder, clip)
    return float(emb @ ckpt.head.weight.astype(np.float64) + float(ckpt.head.bias))


def predict(ckpt: Checkpoint, clip: AudioClip) -> float:
    """Score on the 1-5 scale; clamping happens only here, never in training."""
    return float(clamp_score(predict_raw(ckpt, clip)))


def predict_ovrl_a(sig: float, bak: float) -> float:
    return (sig + bak) / 2


def _ovrl_input(ckpt_sig: Checkpoint, ckpt_bak: Checkpoint, clip: AudioClip) -> np.ndarray:
    return np.concatenate([encode(ckpt_sig.encoder, clip), encode(ckpt_bak.encoder, clip)])


def predict_ovrl_p(ckpt_sig: Checkpoint, ckpt_bak: Checkpoint, head: OvrlHead, clip: AudioClip) -> float:
    x = _ovrl_input(ckpt_sig, ckpt_bak, clip)
    if x.shape[0] != head.weight.shape[0]:
        raise ValueError(
            f"OVRL head expects {head.weight.shape[0]} inputs, backbones give {x.shape[0]}"
        )
    return float(clamp_score(x @ head.weight.astype(np.float64) + float(head.bias)))


def init_ovrl_head(dim: int, seed: int) -> OvrlHead:
    rng = np.random.default_rng(seed)
    weight = (rng.standard_normal(dim) * 0.1 / np.sqrt(dim)).astype(np.float32)
    return OvrlHead(weight, np.asarray(3.0, dtype=np.float32))


def train_ovrl_head(
    ckpt_sig: Checkpoint,
    ckpt_bak: Checkpoint,
    train: Manifest,
    cfg: TrainConfig | None = None,
    *,
    epoch_log: Callable[[dict], None] | None = None,
    loader: Callable = load_canonical,
) -> OvrlHead:
    """Train a one-neuron head on both backbones' pooled embeddings.

    The backbones are used read-only and their regression heads are ignored.
    Inputs are random crops as in stage training; the final epoch is kept.
    """
    cfg = TrainConfig.for_stage("ovrl") if cfg is None else cfg
    entries, y = _labeled(train, "ovrl", "training")
    dim = ckpt_sig.config.embedding_dim + ckpt_bak.config.embedding_dim
    head = init_ovrl_head(dim, cfg.seed)
    meta = {
        "sig_backbone": ckpt_sig.backbone_digest(),
        "bak_backbone": ckpt_bak.backbone_digest(),
        "epochs": cfg.epochs,
        "seed": cfg.seed,
        "train_config": cfg.to_dict(),
    }
    if cfg.epochs == 0:
        head.metadata = meta
        return head

    sig_params = _encoder_params64(ckpt_sig)
    bak_params = _encoder_params64(ckpt_bak)
    w = head.weight.astype(np.float64)
    b = np.asarray(float(head.bias))
    params = {"w": w, "b": b}
    opt = _Optimizer(cfg.optimizer, params)
    rng = np.random.default_rng(cfg.seed)
    store = ClipStore(train, loader)
    steps_per_epoch = math.ceil(len(entries) / cfg.batch_size)
    total = steps_per_epoch * cfg.epochs
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        losses = []
        for idx in _batches(len(entries), cfg.batch_size, rng):
            crops = [random_crop(store[entries[i]], cfg.crop_seconds, rng) for i in idx]
            x = np.concatenate([
                pooled(sig_params, _stack_features(ckpt_sig.encoder, crops), ckpt_sig.config.n_layers),
                pooled(bak_params, _stack_features(ckpt_bak.encoder, crops), ckpt_bak.config.n_layers),
            ], axis=1)
            resid = x @ params["w"] + params["b"] - y[idx]
            d_pred = 2.0 * resid / len(idx)
            grads = {"w": x.T @ d_pred, "b": np.asarray(d_pred.sum())}
            opt.step(params, grads, lr_at(step, total, cfg))
            step += 1
            losses.append(float(np.sum(resid ** 2)))
        if epoch_log is not None:
            epoch_log({"epoch": epoch, "train_loss": sum(losses) / len(entries)})
    return OvrlHead(params["w"].astype(np.float32), np.asarray(params["b"], dtype=np.float32), meta)


def backbone_digests(*ckpts: Checkpoint) -> list[str]:
    return [tensor_digest(c.encoder.tensors) for c in ckpts]
