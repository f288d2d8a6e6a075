"""Deterministic stand-in source pools for demos and tests.

Real corpora (LibriSpeech, ASVspoof, ESC-50, ...) are supplied by the user via
pool files. These generators give speech-like and noise-like signals with the
properties the recipes rely on: syllabic bursts separated by pauses, and
stationary or impulsive noise colours grouped into categories.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy import signal

from .audio import CANONICAL_RATE, AudioClip, load_canonical, write_wav
from .dataset import LabeledUtterance, Manifest, SourceEntry, write_pool
from .degrade import draw_noise_offset, mix_at_snr

NOISE_CATEGORIES = ("white", "pink", "brown", "hum", "rain", "fan")


def _harmonic_burst(n: int, f0: float, rate: int, rng, jitter: float, n_harm: int, tilt: float) -> np.ndarray:
    drift = 1.0 + jitter * np.cumsum(rng.standard_normal(n)) / np.sqrt(n)
    phase = 2.0 * np.pi * np.cumsum(f0 * drift) / rate
    out = np.zeros(n)
    for k in range(1, n_harm + 1):
        if k * f0 >= rate / 2 - 200:
            break
        out += rng.uniform(0.3, 1.0) * k ** (-tilt) * np.sin(k * phase + rng.uniform(0, 2 * np.pi))
    return out * np.hanning(n)


def toy_speech(
    duration: float,
    rng: np.random.Generator,
    rate: int = CANONICAL_RATE,
    *,
    spoof_system: int | None = None,
    level: float | None = None,
) -> AudioClip:
    """Voiced syllables with exact-zero gaps.

    ``spoof_system`` switches to a vocoder-like rendering: no pitch jitter, a
    system-specific band limit and a buzzy flat spectral tilt, so spoofed
    speech is separable from natural speech by its spectrum.
    """
    n_total = int(round(duration * rate))
    out = np.zeros(n_total)
    pos = int(rng.integers(0, int(0.1 * rate)))
    base_f0 = rng.uniform(90, 240)
    while pos < n_total:
        syl = int(rng.uniform(0.12, 0.32) * rate)
        seg = min(syl, n_total - pos)
        f0 = base_f0 * rng.uniform(0.85, 1.2)
        if spoof_system is None:
            burst = _harmonic_burst(syl, f0, rate, rng, jitter=0.02, n_harm=40, tilt=1.0)
            noise = signal.lfilter([1.0], [1.0, -0.7], rng.standard_normal(syl)) * 0.05
            burst = burst + noise * np.hanning(syl)
        else:
            burst = _harmonic_burst(syl, f0, rate, rng, jitter=0.0, n_harm=60, tilt=0.3)
        out[pos:pos + seg] = burst[:seg] * rng.uniform(0.5, 1.0)
        gap = rng.uniform(0.03, 0.15) if rng.random() > 0.15 else rng.uniform(0.25, 0.5)
        pos += syl + int(gap * rate)
    if spoof_system is not None:
        cutoff = 3000.0 + 700.0 * (spoof_system % 5)
        sos = signal.butter(6, cutoff, fs=rate, output="sos")
        out = signal.sosfilt(sos, out)
    level = rng.uniform(0.05, 0.2) if level is None else level
    peak = np.max(np.abs(out))
    if peak > 0:
        out = out / np.sqrt(np.mean(out[out != 0] ** 2)) * level
        out *= min(1.0, 0.95 / np.max(np.abs(out)))
    return AudioClip(out, rate)


def toy_noise(category: str, duration: float, rng: np.random.Generator, rate: int = CANONICAL_RATE) -> AudioClip:
    n = int(round(duration * rate))
    white = rng.standard_normal(n)
    if category == "white":
        x = white
    elif category == "pink":
        # Paul Kellet's economy pink filter
        x = signal.lfilter([0.049922035, -0.095993537, 0.050612699, -0.004408786],
                           [1, -2.494956002, 2.017265875, -0.522189400], white)
    elif category == "brown":
        x = signal.lfilter([1.0], [1.0, -0.995], white)
    elif category == "hum":
        t = np.arange(n) / rate
        f = rng.choice([50.0, 60.0])
        x = sum(np.sin(2 * np.pi * k * f * t + rng.uniform(0, 6.3)) / k for k in range(1, 8)) + 0.1 * white
    elif category == "rain":
        drops = (rng.random(n) < 0.002) * rng.standard_normal(n)
        x = signal.lfilter([1.0], [1.0, -0.9], drops) + 0.2 * signal.lfilter([1.0, -0.95], [1.0], white)
    elif category == "fan":
        sos = signal.butter(4, 800.0, fs=rate, output="sos")
        t = np.arange(n) / rate
        x = signal.sosfilt(sos, white) + 0.3 * np.sin(2 * np.pi * rng.uniform(120, 180) * t)
    else:
        raise ValueError(f"unknown toy noise category {category!r}")
    x = x / np.sqrt(np.mean(x ** 2)) * rng.uniform(0.05, 0.2)
    return AudioClip(x, rate)


def write_toy_pools(
    out_dir,
    rng: np.random.Generator,
    *,
    n_natural: int = 6,
    n_spoofed: int = 0,
    n_spoof_systems: int = 2,
    noise_categories=("white", "pink"),
    noises_per_category: int = 1,
    speech_seconds: tuple[float, float] = (2.0, 5.0),
    noise_seconds: float = 6.0,
) -> list[SourceEntry]:
    """Write toy WAV sources under ``out_dir`` plus ``pool.jsonl``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(n_natural):
        clip = toy_speech(rng.uniform(*speech_seconds), rng)
        p = out_dir / f"natural_{i:03d}.wav"
        write_wav(clip, p)
        entries.append(SourceEntry(p.name, "clean_natural", None, clip.duration_seconds))
    for i in range(n_spoofed):
        system = i % n_spoof_systems
        clip = toy_speech(rng.uniform(*speech_seconds), rng, spoof_system=system)
        p = out_dir / f"spoofed_A{system:02d}_{i:03d}.wav"
        write_wav(clip, p)
        entries.append(SourceEntry(p.name, "clean_spoofed", f"A{system:02d}", clip.duration_seconds))
    for cat in noise_categories:
        for j in range(noises_per_category):
            clip = toy_noise(cat, noise_seconds, rng)
            p = out_dir / f"noise_{cat}_{j:02d}.wav"
            write_wav(clip, p)
            entries.append(SourceEntry(p.name, "noise", cat, clip.duration_seconds))
    write_pool(entries, out_dir / "pool.jsonl")
    return [SourceEntry(str(out_dir / e.path), e.kind, e.category, e.duration) for e in entries]


def write_toy_rated_set(
    clean_pool,
    noise_pool,
    out_dir,
    rng: np.random.Generator,
    *,
    count: int = 24,
    snr_range: tuple[float, float] = (-5.0, 40.0),
    duration_range: tuple[float, float] = (2.0, 4.0),
    rating_noise: float = 0.15,
    id_prefix: str = "rated",
) -> Manifest:
    """Small noisy set with simulated listener scores on all three scales.

    Stands in for a subjectively rated target set: BAK rises with SNR along
    a curve flatter than the automatic ladder, SIG drops mildly at low SNR,
    and OVRL tracks their mean. Gaussian rating noise mimics listener spread.
    """
    out_dir = Path(out_dir)
    (out_dir / "audio").mkdir(parents=True, exist_ok=True)
    clean = [e for e in clean_pool if e.kind == "clean_natural"]
    noises = [e for e in noise_pool if e.kind == "noise"]
    if not clean or not noises:
        raise ValueError("rated set needs natural speech and noise sources")
    entries = []
    for i in range(count):
        speech = load_canonical(clean[int(rng.integers(len(clean)))].path)
        noise = load_canonical(noises[int(rng.integers(len(noises)))].path)
        n = min(len(speech.samples), int(rng.uniform(*duration_range) * CANONICAL_RATE))
        speech = speech.with_samples(speech.samples[:n])
        snr = float(rng.uniform(*snr_range))
        offset = draw_noise_offset(n, len(noise.samples), rng)
        mixture = mix_at_snr(speech, noise, snr, offset).mixture
        bak = 1.3 + 0.07 * snr + rng.normal(0, rating_noise)
        sig = 4.2 - 0.03 * max(0.0, 15.0 - snr) + rng.normal(0, rating_noise)
        ovrl = (sig + bak) / 2 + rng.normal(0, rating_noise)
        sig, bak, ovrl = (float(np.clip(round(v, 3), 1.0, 5.0)) for v in (sig, bak, ovrl))
        uid = f"{id_prefix}{i:05d}"
        write_wav(mixture, out_dir / "audio" / f"{uid}.wav")
        entries.append(LabeledUtterance(uid, f"audio/{uid}.wav", "noisy", snr_db=snr, sig=sig, bak=bak, ovrl=ovrl))
    return Manifest(entries, "unsplit", out_dir)
