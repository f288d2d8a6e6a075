"""Signal degradations for building training corpora.

Noise mixing at a controlled SNR, synthetic reverberation, codec-like
distortions, and DSP simulators of enhancement/dereverberation artifacts.
"""

from __future__ import annotations

import shlex
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy import signal

from .audio import (
    CANONICAL_RATE,
    AudioClip,
    active_speech_level,
    peak_normalize,
    read_wav,
    resample,
    rms,
    write_wav,
)

DEFAULT_SNR_LEVELS = (-20, -10, 0, 10, 20, 30, 40, 50)
RT60_RANGE = (0.1, 1.5)
CODEC_VARIANTS = ("mulaw8", "bandlimit3k4", "bitcrush6")
ENHANCE_VARIANTS = ("spectral_subtract", "oversmooth", "clip_distort")
DEGRADATION_TAGS = (
    "none", "additive_noise", "reverb", "enhancement_artifact", "dereverb_artifact", "codec",
)

# -60 dB amplitude decay: ln(1000)
_LN_1000 = 6.908

_STFT_NPERSEG = 512
_STFT_HOP = 128


class SilentSignalError(ValueError):
    pass


class MixResult(NamedTuple):
    mixture: AudioClip
    noise_gain: float
    rescale: float  # applied to both components after mixing (1.0 if no overflow)
    speech: AudioClip  # speech component as present in the mixture
    noise: AudioClip  # scaled noise component as present in the mixture


def _fit_noise(noise: np.ndarray, length: int, offset: int) -> np.ndarray:
    if len(noise) < length:
        return np.resize(noise, length)
    if not 0 <= offset <= len(noise) - length:
        raise ValueError(f"noise offset {offset} outside [0, {len(noise) - length}]")
    return noise[offset:offset + length]


def mix_at_snr(
    speech: AudioClip, noise: AudioClip, snr_db: float, offset: int = 0
) -> MixResult:
    """Add ``noise`` to ``speech`` so that active speech level / noise RMS
    equals ``snr_db``.

    Noise shorter than the speech is tiled; longer noise is cut starting at
    ``offset``. If the sum exceeds full scale, the whole mixture is scaled to
    a 0.99 peak (the speech:noise ratio is untouched).
    """
    if speech.sample_rate != noise.sample_rate:
        raise ValueError(
            f"sample rates differ: speech {speech.sample_rate}, noise {noise.sample_rate}"
        )
    if len(speech) == 0:
        raise SilentSignalError("speech clip is empty")
    segment = _fit_noise(noise.samples, len(speech), offset)
    noise_level = float(np.sqrt(np.mean(segment ** 2)))
    if noise_level == 0.0:
        raise SilentSignalError("noise segment is silent")
    speech_level = active_speech_level(speech)
    if speech_level == 0.0:
        raise SilentSignalError("speech clip is silent")

    gain = speech_level / noise_level * 10.0 ** (-snr_db / 20.0)
    scaled = gain * segment
    mixed, rescale = peak_normalize(speech.samples + scaled)
    if rescale != 1.0:
        speech_part, noise_part = speech.samples * rescale, scaled * rescale
    else:
        speech_part, noise_part = speech.samples, scaled
    rate = speech.sample_rate
    return MixResult(
        AudioClip(mixed, rate), gain, rescale, AudioClip(speech_part, rate), AudioClip(noise_part, rate)
    )


def measured_snr(speech: AudioClip, noise: AudioClip) -> float:
    """SNR in dB between separate speech and noise components."""
    return 20.0 * np.log10(active_speech_level(speech) / rms(noise))


def draw_noise_offset(speech_len: int, noise_len: int, rng: np.random.Generator) -> int:
    return int(rng.integers(0, max(noise_len - speech_len, 0) + 1))


def ladder_mixes(
    speech: AudioClip, noise: AudioClip, levels, rng: np.random.Generator
) -> list[tuple[float, MixResult]]:
    if len(levels) == 0:
        raise ValueError("SNR levels must be non-empty")
    out = []
    for level in levels:
        offset = draw_noise_offset(len(speech), len(noise), rng)
        out.append((level, mix_at_snr(speech, noise, level, offset)))
    return out


def snr_ladder(
    speech: AudioClip,
    noise: AudioClip,
    levels=DEFAULT_SNR_LEVELS,
    rng: np.random.Generator | None = None,
) -> list[tuple[float, AudioClip]]:
    """One mixture per SNR level, each with its own noise-offset draw."""
    rng = np.random.default_rng(0) if rng is None else rng
    return [(level, res.mixture) for level, res in ladder_mixes(speech, noise, levels, rng)]


# --------------------------------------------------------------------------
# Reverberation
# --------------------------------------------------------------------------

def synth_rir(rt60: float, rng: np.random.Generator, sample_rate: int = CANONICAL_RATE) -> AudioClip:
    """Exponentially decaying Gaussian noise with a unit direct path at n=0.

    Length is 1.5 * rt60 seconds; the response is normalized to unit energy.
    """
    lo, hi = RT60_RANGE
    if not lo <= rt60 <= hi:
        raise ValueError(f"rt60 must lie in [{lo}, {hi}] s, got {rt60}")
    length = int(round(1.5 * rt60 * sample_rate))
    n = np.arange(length)
    w = rng.standard_normal(length)
    w[0] = 1.0
    h = w * np.exp(-_LN_1000 * n / (rt60 * sample_rate))
    return AudioClip(h / np.sqrt(np.sum(h ** 2)), sample_rate)


def reverberate(clip: AudioClip, rir: AudioClip) -> AudioClip:
    if clip.sample_rate != rir.sample_rate:
        raise ValueError("clip and RIR sample rates differ")
    if len(clip) == 0:
        return clip
    wet = signal.convolve(clip.samples, rir.samples)[: len(clip)]
    wet, _ = peak_normalize(wet)
    return clip.with_samples(wet)


# --------------------------------------------------------------------------
# Codec stand-ins
# --------------------------------------------------------------------------

def _mulaw8(x: np.ndarray, mu: float = 255.0) -> np.ndarray:
    x = np.clip(x, -1.0, 1.0)
    y = np.sign(x) * np.log1p(mu * np.abs(x)) / np.log1p(mu)
    q = np.round(y * 127.0) / 127.0
    return np.sign(q) * np.expm1(np.abs(q) * np.log1p(mu)) / mu


def _bandlimit(clip: AudioClip, cutoff_hz: float = 3400.0, narrow_rate: int = 8000) -> np.ndarray:
    taps = signal.firwin(255, cutoff_hz, fs=clip.sample_rate, window=("kaiser", 8.0))
    # odd-length symmetric FIR, centered => zero phase
    low = np.convolve(clip.samples, taps, mode="same")
    narrow = resample(clip.with_samples(low), narrow_rate)
    back = resample(narrow, clip.sample_rate).samples
    if len(back) < len(clip):
        back = np.pad(back, (0, len(clip) - len(back)))
    return back[: len(clip)]


def _bitcrush(x: np.ndarray, bits: int = 6) -> np.ndarray:
    half = 2 ** (bits - 1)
    return np.clip(np.round(x * half), -half, half - 1) / half


def codec_degrade(clip: AudioClip, variant: str) -> AudioClip:
    """Lossy round trip through a built-in codec stand-in.

    ``mulaw8``: 8-bit mu-law companding; ``bandlimit3k4``: 3.4 kHz low-pass
    plus an 8 kHz round trip; ``bitcrush6``: uniform 6-bit quantization.
    """
    if variant == "mulaw8":
        out = _mulaw8(clip.samples)
    elif variant == "bandlimit3k4":
        out = _bandlimit(clip)
    elif variant == "bitcrush6":
        out = _bitcrush(clip.samples)
    else:
        raise ValueError(f"unknown codec variant {variant!r}; expected one of {CODEC_VARIANTS}")
    return clip.with_samples(out)


def external_codec(clip: AudioClip, command: str, timeout: float = 120.0) -> AudioClip:
    """Round-trip through an external program.

    ``command`` is a template with ``{input}`` and ``{output}`` placeholders
    (WAV paths). The result is resampled back and trimmed or zero-padded to
    the input length.
    """
    with tempfile.TemporaryDirectory() as tmp:
        src = Path(tmp) / "in.wav"
        dst = Path(tmp) / "out.wav"
        write_wav(clip, src)
        argv = shlex.split(command.format(input=shlex.quote(str(src)), output=shlex.quote(str(dst))))
        proc = subprocess.run(argv, capture_output=True, timeout=timeout)
        if proc.returncode != 0:
            raise RuntimeError(
                f"codec command failed ({proc.returncode}): {proc.stderr.decode(errors='replace')[:500]}"
            )
        back = resample(read_wav(dst), clip.sample_rate).samples
    if len(back) < len(clip):
        back = np.pad(back, (0, len(clip) - len(back)))
    return clip.with_samples(back[: len(clip)])


# --------------------------------------------------------------------------
# Enhancement / dereverberation artifact simulators
# --------------------------------------------------------------------------

def _stft(x: np.ndarray, rate: int):
    _, _, spec = signal.stft(
        x, fs=rate, nperseg=_STFT_NPERSEG, noverlap=_STFT_NPERSEG - _STFT_HOP, boundary="zeros"
    )
    return spec


def _istft(spec: np.ndarray, rate: int, length: int) -> np.ndarray:
    _, x = signal.istft(
        spec, fs=rate, nperseg=_STFT_NPERSEG, noverlap=_STFT_NPERSEG - _STFT_HOP, boundary=True
    )
    if len(x) < length:
        x = np.pad(x, (0, length - len(x)))
    return x[:length]


def _noise_floor(magnitude: np.ndarray, quantile: float = 0.1) -> np.ndarray:
    """Per-bin mean magnitude over the quietest frames."""
    energy = np.sum(magnitude ** 2, axis=0)
    k = max(1, int(np.ceil(quantile * magnitude.shape[1])))
    quiet = np.argsort(energy, kind="stable")[:k]
    return magnitude[:, quiet].mean(axis=1)


def _spectral_subtract(clip: AudioClip, over: float = 1.5) -> np.ndarray:
    spec = _stft(clip.samples, clip.sample_rate)
    mag = np.abs(spec)
    floor = _noise_floor(mag)
    cleaned = np.maximum(mag - over * floor[:, None], 0.0)
    phase = np.exp(1j * np.angle(spec))
    return _istft(cleaned * phase, clip.sample_rate, len(clip))


def _oversmooth(clip: AudioClip, alpha: float = 0.98, band: int = 9, gain_floor: float = 0.1) -> np.ndarray:
    spec = _stft(clip.samples, clip.sample_rate)
    power = np.abs(spec) ** 2
    noise = _noise_floor(np.abs(spec)) ** 2 + 1e-12
    post = power / noise[:, None]
    prior = np.maximum(post - 1.0, 0.0)
    kernel = np.ones(band) / band
    prior = np.apply_along_axis(lambda col: np.convolve(col, kernel, mode="same"), 0, prior)
    smoothed = signal.lfilter([1.0 - alpha], [1.0, -alpha], prior, axis=1)
    gain = np.maximum(smoothed / (1.0 + smoothed), gain_floor)
    return _istft(spec * gain, clip.sample_rate, len(clip))


def _clip_distort(clip: AudioClip, threshold: float = 0.5) -> np.ndarray:
    x = clip.samples
    peak = float(np.max(np.abs(x))) if len(x) else 0.0
    clipped = np.clip(x, -threshold, threshold)
    top = float(np.max(np.abs(clipped))) if len(x) else 0.0
    if top == 0.0:
        return clipped
    return clipped * (peak / top)


def enhance_artifact(clip: AudioClip, variant: str) -> AudioClip:
    """Simulate the artifact class of a speech enhancement system."""
    if variant == "spectral_subtract":
        out = _spectral_subtract(clip)
    elif variant == "oversmooth":
        out = _oversmooth(clip)
    elif variant == "clip_distort":
        out = _clip_distort(clip)
    else:
        raise ValueError(f"unknown artifact variant {variant!r}; expected one of {ENHANCE_VARIANTS}")
    out, _ = peak_normalize(out)
    return clip.with_samples(out)


def dereverb_artifact(clip: AudioClip, rt60: float, late_seconds: float = 0.05, gain_floor: float = 0.05) -> AudioClip:
    """Late-reverberation spectral subtraction with an exponential decay model.

    The late reverberant power at frame t is predicted from the power
    ``late_seconds`` earlier, attenuated by the decay implied by ``rt60``.
    """
    spec = _stft(clip.samples, clip.sample_rate)
    power = np.abs(spec) ** 2
    delay = max(1, int(round(late_seconds * clip.sample_rate / _STFT_HOP)))
    attenuation = np.exp(-2.0 * _LN_1000 / rt60 * delay * _STFT_HOP / clip.sample_rate)
    late = np.zeros_like(power)
    late[:, delay:] = attenuation * power[:, :-delay]
    gain = np.maximum(1.0 - np.sqrt(late / (power + 1e-12)), gain_floor)
    out, _ = peak_normalize(_istft(spec * gain, clip.sample_rate, len(clip)))
    return clip.with_samples(out)


# --------------------------------------------------------------------------
# Tagged degradations
# --------------------------------------------------------------------------

_REQUIRED_PARAMS = {
    "none": set(),
    "additive_noise": {"snr_db"},
    "reverb": {"rt60_seconds"},
    "enhancement_artifact": {"artifact_variant"},
    "dereverb_artifact": {"rt60_seconds"},
    "codec": {"codec_variant"},
}


@dataclass(frozen=True)
class DegradationKind:
    tag: str
    snr_db: float | None = None
    rt60_seconds: float | None = None
    artifact_variant: str | None = None
    codec_variant: str | None = None

    def __post_init__(self):
        if self.tag not in _REQUIRED_PARAMS:
            raise ValueError(f"unknown degradation tag {self.tag!r}")
        given = {
            name for name in ("snr_db", "rt60_seconds", "artifact_variant", "codec_variant")
            if getattr(self, name) is not None
        }
        if given != _REQUIRED_PARAMS[self.tag]:
            raise ValueError(
                f"{self.tag} takes parameters {sorted(_REQUIRED_PARAMS[self.tag])}, got {sorted(given)}"
            )
        if self.artifact_variant is not None and self.artifact_variant not in ENHANCE_VARIANTS:
            raise ValueError(f"unknown artifact variant {self.artifact_variant!r}")
        if self.codec_variant is not None and self.codec_variant not in CODEC_VARIANTS:
            raise ValueError(f"unknown codec variant {self.codec_variant!r}")


def apply_degradation(
    clip: AudioClip,
    kind: DegradationKind,
    rng: np.random.Generator,
    noise: AudioClip | None = None,
) -> AudioClip:
    if kind.tag == "none":
        return clip
    if kind.tag == "additive_noise":
        if noise is None:
            raise ValueError("additive_noise needs a noise clip")
        offset = draw_noise_offset(len(clip), len(noise), rng)
        return mix_at_snr(clip, noise, kind.snr_db, offset).mixture
    if kind.tag == "reverb":
        return reverberate(clip, synth_rir(kind.rt60_seconds, rng, clip.sample_rate))
    if kind.tag == "enhancement_artifact":
        return enhance_artifact(clip, kind.artifact_variant)
    if kind.tag == "dereverb_artifact":
        return dereverb_artifact(clip, kind.rt60_seconds)
    return codec_degrade(clip, kind.codec_variant)
