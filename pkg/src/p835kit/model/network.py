"""Reference encoder: frozen log-mel front-end, per-frame ReLU trunk, mean
pooling, and a linear regression head.

The numerical core works on plain ``{name: ndarray}`` dicts so it can be
driven in float64 by the trainer and by gradient checks alike.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from ..audio import (
    CANONICAL_RATE,
    HOP_SECONDS,
    LOG_FLOOR,
    N_FFT,
    N_MELS,
    WIN_SECONDS,
    AudioClip,
    hann_window,
    log_mel_frames,
    mel_filterbank,
)

SCORE_RANGE = (1.0, 5.0)
FRONTEND_TENSORS = ("frontend.window", "frontend.mel_fb")


@dataclass(frozen=True)
class FrontendConfig:
    sample_rate: int = CANONICAL_RATE
    n_mels: int = N_MELS
    win_seconds: float = WIN_SECONDS
    hop_seconds: float = HOP_SECONDS
    n_fft: int = N_FFT
    log_floor: float = LOG_FLOOR
    # fixed affine map of log-mel values into a range suited to the trunk
    feature_shift: float = -6.0
    feature_scale: float = 0.25

    @property
    def win_samples(self) -> int:
        return int(round(self.win_seconds * self.sample_rate))

    @property
    def hop_samples(self) -> int:
        return int(round(self.hop_seconds * self.sample_rate))


@dataclass(frozen=True)
class ModelConfig:
    frontend: FrontendConfig = field(default_factory=FrontendConfig)
    widths: tuple[int, ...] = (128, 128)

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if not self.widths or min(self.widths) < 1:
            raise ValueError("trunk needs at least one layer of positive width")

    @property
    def embedding_dim(self) -> int:
        return self.widths[-1]

    @property
    def n_layers(self) -> int:
        return len(self.widths)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["widths"] = list(self.widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(FrontendConfig(**d.get("frontend", {})), tuple(d.get("widths", (128, 128))))

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def trunk_names(n_layers: int) -> list[str]:
    names = []
    for i in range(n_layers):
        names += [f"trunk.{i}.weight", f"trunk.{i}.bias"]
    return names


@dataclass(eq=False)
class EncoderModel:
    config: ModelConfig
    tensors: dict[str, np.ndarray]  # frontend.* and trunk.*, float32

    @property
    def embedding_dim(self) -> int:
        return self.config.embedding_dim

    def trunk_params(self) -> dict[str, np.ndarray]:
        return {k: self.tensors[k] for k in trunk_names(self.config.n_layers)}

    def features(self, clip: AudioClip) -> np.ndarray:
        """Front-end output for one clip, shape (T, n_mels), float64."""
        fe = self.config.frontend
        if clip.sample_rate != fe.sample_rate:
            raise ValueError(f"encoder expects {fe.sample_rate} Hz input, got {clip.sample_rate}")
        frames = log_mel_frames(
            clip.samples,
            self.tensors["frontend.window"].astype(np.float64),
            self.tensors["frontend.mel_fb"].astype(np.float64),
            fe.hop_samples,
            fe.n_fft,
            fe.log_floor,
        )
        return (frames - fe.feature_shift) * fe.feature_scale


@dataclass(eq=False)
class RegressionHead:
    weight: np.ndarray  # (D,)
    bias: np.ndarray  # shape ()


@dataclass(eq=False)
class OvrlHead:
    """Single output neuron over concatenated SIG and BAK embeddings."""
    weight: np.ndarray  # (D_sig + D_bak,)
    bias: np.ndarray  # shape ()
    metadata: dict = field(default_factory=dict)


def frontend_tensors(fe: FrontendConfig) -> dict[str, np.ndarray]:
    return {
        "frontend.window": hann_window(fe.win_samples).astype(np.float32),
        "frontend.mel_fb": mel_filterbank(fe.n_mels, fe.n_fft, fe.sample_rate).astype(np.float32),
    }


def init_trunk(config: ModelConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    params = {}
    fan_in = config.frontend.n_mels
    for i, width in enumerate(config.widths):
        params[f"trunk.{i}.weight"] = (rng.standard_normal((fan_in, width)) * np.sqrt(2.0 / fan_in)).astype(np.float32)
        params[f"trunk.{i}.bias"] = np.zeros(width, dtype=np.float32)
        fan_in = width
    return params


def init_head(dim: int, rng: np.random.Generator, bias: float = 3.0) -> tuple[np.ndarray, np.ndarray]:
    weight = (rng.standard_normal(dim) * 0.1 / np.sqrt(dim)).astype(np.float32)
    return weight, np.asarray(bias, dtype=np.float32)


# --------------------------------------------------------------------------
# Numerical core
# --------------------------------------------------------------------------

def trunk_forward(params: dict[str, np.ndarray], frames: np.ndarray, n_layers: int):
    """Per-frame trunk on (..., F) input; returns output and activation cache."""
    h = frames
    cache = [h]
    for i in range(n_layers):
        z = h @ params[f"trunk.{i}.weight"] + params[f"trunk.{i}.bias"]
        h = np.maximum(z, 0.0)
        cache.append(z)
        cache.append(h)
    return h, cache


def pooled(params: dict[str, np.ndarray], frames: np.ndarray, n_layers: int) -> np.ndarray:
    """Mean-pooled trunk output. ``frames`` is (T, F) or (B, T, F)."""
    h, _ = trunk_forward(params, frames, n_layers)
    return h.mean(axis=-2)


def trunk_backward(params, cache, grad_out: np.ndarray, n_layers: int, need_input_grad: bool = False):
    """Backpropagate ``grad_out`` (same shape as trunk output) to trunk params."""
    grads = {}
    g = grad_out
    for i in reversed(range(n_layers)):
        z = cache[1 + 2 * i]
        h_prev = cache[2 * i]
        gz = g * (z > 0.0)
        flat_in = h_prev.reshape(-1, h_prev.shape[-1])
        flat_gz = gz.reshape(-1, gz.shape[-1])
        grads[f"trunk.{i}.weight"] = flat_in.T @ flat_gz
        grads[f"trunk.{i}.bias"] = flat_gz.sum(axis=0)
        if i > 0 or need_input_grad:
            g = gz @ params[f"trunk.{i}.weight"].T
    return grads


def regression_loss_and_grads(
    params: dict[str, np.ndarray], frames: np.ndarray, targets: np.ndarray, n_layers: int
) -> tuple[float, dict[str, np.ndarray], np.ndarray]:
    """MSE of head(mean_pool(trunk(frames))) against ``targets``.

    ``frames`` is (B, T, F). ``params`` holds trunk.* and head.* entries.
    Returns (loss, grads for every trunk/head tensor, unclamped predictions).
    """
    batch, n_frames = frames.shape[0], frames.shape[1]
    h, cache = trunk_forward(params, frames, n_layers)
    emb = h.mean(axis=1)
    preds = emb @ params["head.weight"] + params["head.bias"]
    resid = preds - targets
    loss = float(np.mean(resid ** 2))

    d_pred = 2.0 * resid / batch
    grads = {
        "head.weight": emb.T @ d_pred,
        "head.bias": np.asarray(d_pred.sum()),
    }
    d_emb = d_pred[:, None] * params["head.weight"][None, :]
    d_h = np.broadcast_to(d_emb[:, None, :] / n_frames, h.shape)
    grads.update(trunk_backward(params, cache, d_h, n_layers))
    return loss, grads, preds


def clamp_score(x):
    return np.clip(x, *SCORE_RANGE)
