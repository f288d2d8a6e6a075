"""Audio I/O and signal primitives.

Everything here is a pure function of its inputs. Randomness always comes
from an explicitly passed ``numpy.random.Generator``.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

CANONICAL_RATE = 16000

# log-mel front-end defaults
N_MELS = 64
WIN_SECONDS = 0.025
HOP_SECONDS = 0.010
N_FFT = 512
LOG_FLOOR = 1e-6

# active speech level
ASL_FRAME_SECONDS = 0.025
ASL_THRESHOLD_DB = 40.0

# resampler
KAISER_BETA = 8.0
SINC_HALF_TAPS = 32


class AudioError(Exception):
    """Base class for audio I/O failures."""


class AudioFileMissing(AudioError, FileNotFoundError):
    pass


class MalformedWav(AudioError):
    pass


class UnsupportedEncoding(AudioError):
    pass


@dataclass(frozen=True, eq=False)
class AudioClip:
    samples: np.ndarray  # float64, mono
    sample_rate: int = CANONICAL_RATE

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError(f"expected mono samples, got shape {samples.shape}")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples must be finite")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration_seconds(self) -> float:
        return len(self.samples) / self.sample_rate

    def with_samples(self, samples: np.ndarray) -> "AudioClip":
        return AudioClip(samples, self.sample_rate)


@dataclass(frozen=True)
class FrameMatrix:
    frames: np.ndarray  # (T, F)
    frame_hop_seconds: float

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


# --------------------------------------------------------------------------
# WAV I/O
# --------------------------------------------------------------------------

_WAVE_FORMAT_PCM = 1
_WAVE_FORMAT_FLOAT = 3
_WAVE_FORMAT_EXTENSIBLE = 0xFFFE


def read_wav(path) -> AudioClip:
    """Read a RIFF/WAVE file (16-bit PCM or 32-bit float) as a mono clip.

    Multichannel audio is downmixed by averaging channels.
    """
    path = Path(path)
    if not path.is_file():
        raise AudioFileMissing(f"no such file: {path}")
    data = path.read_bytes()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise MalformedWav(f"{path}: not a RIFF/WAVE file")

    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        chunk_id = data[pos:pos + 4]
        (size,) = struct.unpack("<I", data[pos + 4:pos + 8])
        body = data[pos + 8:pos + 8 + size]
        if chunk_id == b"fmt ":
            if len(body) < 16:
                raise MalformedWav(f"{path}: truncated fmt chunk")
            fmt = struct.unpack("<HHIIHH", body[:16])
            if fmt[0] == _WAVE_FORMAT_EXTENSIBLE and len(body) >= 26:
                (sub_format,) = struct.unpack("<H", body[24:26])
                fmt = (sub_format,) + fmt[1:]
        elif chunk_id == b"data":
            payload = body
        pos += 8 + size + (size & 1)

    if fmt is None:
        raise MalformedWav(f"{path}: missing fmt chunk")
    if payload is None:
        raise MalformedWav(f"{path}: missing data chunk")

    format_tag, channels, rate, _, block_align, bits = fmt
    if channels < 1 or rate < 1:
        raise MalformedWav(f"{path}: invalid channel count or rate")
    if format_tag == _WAVE_FORMAT_PCM and bits == 16:
        dtype, scale = np.dtype("<i2"), 1.0 / 32768.0
    elif format_tag == _WAVE_FORMAT_FLOAT and bits == 32:
        dtype, scale = np.dtype("<f4"), 1.0
    else:
        raise UnsupportedEncoding(
            f"{path}: unsupported encoding (format tag {format_tag}, {bits} bits)"
        )

    n_frames = len(payload) // (dtype.itemsize * channels)
    raw = np.frombuffer(payload[:n_frames * dtype.itemsize * channels], dtype=dtype)
    samples = raw.astype(np.float64).reshape(n_frames, channels) * scale
    if channels > 1:
        samples = samples.mean(axis=1)
    else:
        samples = samples[:, 0]
    return AudioClip(samples, int(rate))


def write_wav(clip: AudioClip, path) -> None:
    """Write ``clip`` as 16-bit PCM mono. Samples outside [-1, 1] saturate."""
    path = Path(path)
    q = np.clip(np.round(clip.samples * 32768.0), -32768, 32767).astype("<i2")
    payload = q.tobytes()
    header = b"RIFF" + struct.pack("<I", 36 + len(payload)) + b"WAVE"
    fmt = b"fmt " + struct.pack(
        "<IHHIIHH", 16, _WAVE_FORMAT_PCM, 1, clip.sample_rate,
        clip.sample_rate * 2, 2, 16,
    )
    data = b"data" + struct.pack("<I", len(payload)) + payload
    try:
        path.write_bytes(header + fmt + data)
    except OSError as exc:
        raise AudioError(f"cannot write {path}: {exc}") from exc


def load_canonical(path) -> AudioClip:
    """read_wav followed by resampling to the canonical rate."""
    return resample(read_wav(path), CANONICAL_RATE)


# --------------------------------------------------------------------------
# Resampling
# --------------------------------------------------------------------------

def _sinc_kernel(u: np.ndarray, cutoff: float, half_width: float) -> np.ndarray:
    ratio = np.clip(u / half_width, -1.0, 1.0)
    window = np.i0(KAISER_BETA * np.sqrt(1.0 - ratio ** 2)) / np.i0(KAISER_BETA)
    window[np.abs(u) >= half_width] = 0.0
    return cutoff * np.sinc(cutoff * u) * window


def resample(clip: AudioClip, target_rate: int, *, chunk: int = 4096) -> AudioClip:
    """Kaiser-windowed sinc interpolation (beta 8, 32 zero crossings per side).

    When downsampling, the kernel is stretched so that its cutoff sits at the
    new Nyquist frequency. Output sample ``m`` sits at input position
    ``m * source_rate / target_rate``.
    """
    if target_rate <= 0:
        raise ValueError(f"target_rate must be positive, got {target_rate}")
    src = clip.sample_rate
    if target_rate == src:
        return clip
    x = clip.samples
    n_out = int(round(len(x) * target_rate / src))
    if n_out == 0 or len(x) == 0:
        return AudioClip(np.zeros(n_out), target_rate)

    cutoff = min(1.0, target_rate / src)
    half_width = SINC_HALF_TAPS / cutoff
    reach = int(np.ceil(half_width))
    offsets = np.arange(-reach + 1, reach + 1)
    g = math.gcd(src, target_rate)
    n_phases = target_rate // g
    # positions are (m * src) / target_rate; the fractional part takes n_phases values
    table = None
    if n_phases <= 4096:
        frac = np.arange(n_phases) / n_phases
        table = _sinc_kernel(frac[:, None] - offsets[None, :], cutoff, half_width)

    out = np.empty(n_out)
    for start in range(0, n_out, chunk):
        m = np.arange(start, min(start + chunk, n_out), dtype=np.int64)
        base = (m * src) // target_rate
        idx = base[:, None] + offsets[None, :]
        if table is not None:
            kernel = table[((m * src) % target_rate) // g]
        else:
            kernel = _sinc_kernel(m[:, None] * (src / target_rate) - idx, cutoff, half_width)
        valid = (idx >= 0) & (idx < len(x))
        gathered = np.where(valid, x[np.clip(idx, 0, len(x) - 1)], 0.0)
        out[start:start + len(m)] = np.sum(gathered * kernel, axis=1)
    return AudioClip(out, target_rate)


# --------------------------------------------------------------------------
# Levels
# --------------------------------------------------------------------------

def rms(clip: AudioClip) -> float:
    if len(clip) == 0:
        raise ValueError("rms of an empty clip")
    return float(np.sqrt(np.mean(clip.samples ** 2)))


def active_speech_level(
    clip: AudioClip,
    frame_seconds: float = ASL_FRAME_SECONDS,
    threshold_db: float = ASL_THRESHOLD_DB,
) -> float:
    """RMS over non-overlapping frames whose energy is within ``threshold_db``
    of the loudest frame. A trailing partial frame counts as a frame.

    The threshold is relative, so the result scales linearly with the clip.
    """
    if len(clip) == 0:
        raise ValueError("active_speech_level of an empty clip")
    x = clip.samples
    size = max(1, int(round(frame_seconds * clip.sample_rate)))
    n_full = len(x) // size
    sums = []
    counts = []
    if n_full:
        blocks = x[:n_full * size].reshape(n_full, size) ** 2
        sums.extend(blocks.sum(axis=1))
        counts.extend([size] * n_full)
    if len(x) % size:
        tail = x[n_full * size:] ** 2
        sums.append(tail.sum())
        counts.append(len(tail))
    sums = np.asarray(sums)
    counts = np.asarray(counts)
    energies = sums / counts
    peak = energies.max()
    if peak <= 0.0:
        return rms(clip)
    active = energies >= peak * 10.0 ** (-threshold_db / 10.0)
    return float(np.sqrt(sums[active].sum() / counts[active].sum()))


# --------------------------------------------------------------------------
# Log-mel front-end
# --------------------------------------------------------------------------

def hann_window(length: int) -> np.ndarray:
    """Periodic Hann window."""
    n = np.arange(length)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / length)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_band_centers(n_mels: int, sample_rate: int, fmin: float = 0.0, fmax: float | None = None) -> np.ndarray:
    fmax = sample_rate / 2.0 if fmax is None else fmax
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    return edges[1:-1]


def mel_filterbank(
    n_mels: int, n_fft: int, sample_rate: int, fmin: float = 0.0, fmax: float | None = None
) -> np.ndarray:
    """Triangular HTK-spaced filters with unit peak, shape (n_fft//2 + 1, n_mels)."""
    fmax = sample_rate / 2.0 if fmax is None else fmax
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    lower, center, upper = edges[:-2], edges[1:-1], edges[2:]
    rising = (freqs[:, None] - lower[None, :]) / (center - lower)[None, :]
    falling = (upper[None, :] - freqs[:, None]) / (upper - center)[None, :]
    return np.maximum(0.0, np.minimum(rising, falling))


def frame_count(n_samples: int, win: int, hop: int) -> int:
    if n_samples < win:
        return 0
    return (n_samples - win) // hop + 1


def log_mel_frames(
    samples: np.ndarray,
    window: np.ndarray,
    filterbank: np.ndarray,
    hop: int,
    n_fft: int = N_FFT,
    floor: float = LOG_FLOOR,
) -> np.ndarray:
    """Core log-mel transform on raw arrays; returns (T, n_mels)."""
    win = len(window)
    n = frame_count(len(samples), win, hop)
    if n == 0:
        raise ValueError(
            f"clip of {len(samples)} samples is shorter than one {win}-sample window"
        )
    idx = np.arange(win)[None, :] + hop * np.arange(n)[:, None]
    frames = samples[idx] * window[None, :]
    magnitude = np.abs(np.fft.rfft(frames, n=n_fft, axis=1))
    return np.log(magnitude @ filterbank + floor)


def log_mel(
    clip: AudioClip,
    n_mels: int = N_MELS,
    win: float = WIN_SECONDS,
    hop: float = HOP_SECONDS,
    n_fft: int = N_FFT,
) -> FrameMatrix:
    win_n = int(round(win * clip.sample_rate))
    hop_n = int(round(hop * clip.sample_rate))
    if win_n > n_fft:
        raise ValueError(f"window of {win_n} samples exceeds n_fft={n_fft}")
    frames = log_mel_frames(
        clip.samples,
        hann_window(win_n),
        mel_filterbank(n_mels, n_fft, clip.sample_rate),
        hop_n,
        n_fft,
    )
    return FrameMatrix(frames, hop_n / clip.sample_rate)


# --------------------------------------------------------------------------
# Cropping
# --------------------------------------------------------------------------

def random_crop(clip: AudioClip, length: float, rng: np.random.Generator) -> AudioClip:
    """Contiguous ``length``-second segment at a uniformly drawn offset.

    Clips shorter than ``length`` are zero-padded at the end. The generator
    is advanced exactly once per call either way.
    """
    if length <= 0:
        raise ValueError(f"crop length must be positive, got {length}")
    n = int(round(length * clip.sample_rate))
    slack = len(clip) - n
    offset = int(rng.integers(0, max(slack, 0) + 1))
    if slack <= 0:
        return clip.with_samples(np.pad(clip.samples, (0, -slack)))
    return clip.with_samples(clip.samples[offset:offset + n])


def center_crop(clip: AudioClip, length: float) -> AudioClip:
    n = int(round(length * clip.sample_rate))
    slack = len(clip) - n
    if slack <= 0:
        return clip.with_samples(np.pad(clip.samples, (0, -slack)))
    start = slack // 2
    return clip.with_samples(clip.samples[start:start + n])


def peak_normalize(samples: np.ndarray, peak: float = 0.99) -> tuple[np.ndarray, float]:
    """Scale down to ``peak`` only if the signal exceeds 1; returns (samples, gain)."""
    top = float(np.max(np.abs(samples))) if len(samples) else 0.0
    if top > 1.0:
        gain = peak / top
        return samples * gain, gain
    return samples, 1.0
