"""Corpus recipes, automatic labels, manifests, splits and exclusion lists.

Generated utterance ids follow ``<prefix><segment>__<variant>``; everything
before the double underscore names the clean segment an utterance was derived
from and is used to keep sibling variants on one side of a split.
"""

from __future__ import annotations

import json
import logging
import os
import threading
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .audio import CANONICAL_RATE, AudioClip, load_canonical, write_wav
from .degrade import (
    CODEC_VARIANTS,
    DEFAULT_SNR_LEVELS,
    ENHANCE_VARIANTS,
    RT60_RANGE,
    codec_degrade,
    dereverb_artifact,
    draw_noise_offset,
    enhance_artifact,
    external_codec,
    ladder_mixes,
    mix_at_snr,
    reverberate,
    synth_rir,
)

log = logging.getLogger(__name__)

SOURCE_KINDS = ("clean_natural", "clean_spoofed", "noise")
PROVENANCES = (
    "clean", "noisy", "reverbed", "enhanced", "dereverbed", "codec", "spoofed_clean", "spoofed_noisy",
)
NOISY_PROVENANCES = ("noisy", "spoofed_noisy")
SPLITS = ("train", "valid", "eval", "unsplit")
SCORE_FIELDS = ("sig", "bak", "ovrl")
DEFAULT_DURATION_RANGE = (3.0, 19.0)
DEGRADED_KINDS = ("clean", "noisy", "reverbed", "enhanced", "dereverbed", "codec")
PRETRAIN_SNR_RANGE = (-20.0, 50.0)

GROUP_SEPARATOR = "__"


class ManifestError(ValueError):
    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}" if lineno is not None else message)


class PoolError(ValueError):
    pass


class InsufficientPoolError(PoolError):
    pass


# --------------------------------------------------------------------------
# Types
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SourceEntry:
    path: str
    kind: str
    category: str | None = None  # noise category or spoofing-system id
    duration: float | None = None

    def __post_init__(self):
        if self.kind not in SOURCE_KINDS:
            raise PoolError(f"{self.path}: unknown source kind {self.kind!r}")
        if self.kind == "noise" and not self.category:
            raise PoolError(f"{self.path}: noise entries need a category")
        if self.kind == "clean_spoofed" and not self.category:
            raise PoolError(f"{self.path}: spoofed entries need a spoofing-system id")


def read_pool(path) -> list[SourceEntry]:
    """Read source entries from JSON lines; relative paths resolve against
    the pool file's directory."""
    path = Path(path)
    entries = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
            src = Path(row["path"])
            if not src.is_absolute():
                src = path.parent / src
            entries.append(SourceEntry(str(src), row["kind"], row.get("category"), row.get("duration")))
        except (json.JSONDecodeError, KeyError, TypeError, PoolError) as exc:
            raise ManifestError(f"bad pool entry: {exc}", lineno) from exc
    return entries


def write_pool(entries: Iterable[SourceEntry], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in entries:
            row = {"path": e.path, "kind": e.kind}
            if e.category is not None:
                row["category"] = e.category
            if e.duration is not None:
                row["duration"] = e.duration
            fh.write(json.dumps(row) + "\n")


@dataclass(frozen=True)
class LabeledUtterance:
    id: str
    path: str
    provenance: str
    snr_db: float | None = None
    sig: float | None = None
    bak: float | None = None
    ovrl: float | None = None

    def __post_init__(self):
        if not self.id:
            raise ValueError("utterance id must be non-empty")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"{self.id}: unknown provenance {self.provenance!r}")
        if (self.snr_db is not None) != (self.provenance in NOISY_PROVENANCES):
            raise ValueError(
                f"{self.id}: snr_db is required for {NOISY_PROVENANCES} and forbidden otherwise"
            )
        for name in SCORE_FIELDS:
            value = getattr(self, name)
            if value is not None and not 1.0 <= value <= 5.0:
                raise ValueError(f"{self.id}: {name}={value} outside [1, 5]")

    def label(self, target: str) -> float | None:
        return getattr(self, target)

    def to_json(self) -> dict:
        row = {"id": self.id, "path": self.path, "provenance": self.provenance}
        for name in ("snr_db",) + SCORE_FIELDS:
            value = getattr(self, name)
            if value is not None:
                row[name] = value
        return row

    @classmethod
    def from_json(cls, row: dict) -> "LabeledUtterance":
        unknown = set(row) - {"id", "path", "provenance", "snr_db", *SCORE_FIELDS}
        if unknown:
            raise ValueError(f"unknown fields {sorted(unknown)}")
        for name in ("id", "path", "provenance"):
            if name not in row:
                raise ValueError(f"missing required field {name!r}")
        return cls(**row)


@dataclass
class Manifest:
    entries: list[LabeledUtterance]
    split: str = "unsplit"
    root: Path | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValueError(f"unknown split {self.split!r}")
        seen = set()
        for e in self.entries:
            if e.id in seen:
                raise ManifestError(f"duplicate id {e.id!r}")
            seen.add(e.id)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def resolve(self, entry: LabeledUtterance) -> Path:
        p = Path(entry.path)
        if p.is_absolute() or self.root is None:
            return p
        return self.root / p

    def replace(self, entries: list[LabeledUtterance], split: str | None = None) -> "Manifest":
        return Manifest(list(entries), self.split if split is None else split, self.root)

    def with_label(self, target: str) -> list[LabeledUtterance]:
        return [e for e in self.entries if e.label(target) is not None]


def read_manifest(path, split: str = "unsplit") -> Manifest:
    path = Path(path)
    entries = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                if not isinstance(row, dict):
                    raise ValueError("expected a JSON object")
                entry = LabeledUtterance.from_json(row)
            except (ValueError, TypeError) as exc:
                raise ManifestError(str(exc), lineno) from exc
            if entry.id in seen:
                raise ManifestError(f"duplicate id {entry.id!r}", lineno)
            seen.add(entry.id)
            entries.append(entry)
    return Manifest(entries, split, path.parent)


def write_manifest(manifest: Manifest, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in manifest.entries:
            fh.write(json.dumps(e.to_json()) + "\n")


# --------------------------------------------------------------------------
# Labels
# --------------------------------------------------------------------------

def snr_to_bak_label(snr_db: float) -> float:
    """BAK proxy label: 2 + 0.05 * SNR, clamped to the 1-5 scale."""
    return float(min(5.0, max(1.0, 2.0 + 0.05 * snr_db)))


def clean_bak_label() -> float:
    return 5.0


_SIG_LABELS = {
    "clean": 5.0,
    "noisy": 5.0,
    "reverbed": 5.0,
    "spoofed_clean": 1.0,
    "spoofed_noisy": 1.0,
    "enhanced": 1.0,
    "dereverbed": 1.0,
    "codec": None,
}


def sig_label(provenance: str) -> float | None:
    """Natural speech (also noisy or reverberant) scores 5, spoofed or
    processed speech 1. Codec round trips get no label."""
    if provenance not in _SIG_LABELS:
        raise ValueError(f"unknown provenance {provenance!r}")
    return _SIG_LABELS[provenance]


def group_of(utterance_id: str) -> str:
    return utterance_id.split(GROUP_SEPARATOR, 1)[0]


# --------------------------------------------------------------------------
# Segment building
# --------------------------------------------------------------------------

class AudioCache:
    """Loads and resamples source files once; safe to share between threads."""

    def __init__(self, loader: Callable[[str], AudioClip] = load_canonical):
        self._loader = loader
        self._clips: dict[str, AudioClip] = {}
        self._lock = threading.Lock()

    def __call__(self, path: str) -> AudioClip:
        with self._lock:
            clip = self._clips.get(path)
        if clip is None:
            clip = self._loader(path)
            with self._lock:
                self._clips.setdefault(path, clip)
        return clip


def build_clean_segment(
    pool: Sequence[SourceEntry],
    target_duration: float,
    rng: np.random.Generator,
    loader: Callable[[str], AudioClip] = load_canonical,
) -> tuple[AudioClip, str]:
    """Concatenate randomly chosen clips from a single-kind (and, for spoofed
    speech, single-system) pool until ``target_duration`` is reached, then
    truncate."""
    if not pool:
        raise PoolError("empty clean pool")
    kinds = {e.kind for e in pool}
    if len(kinds) != 1 or "noise" in kinds:
        raise PoolError(f"segment pool must hold exactly one clean kind, got {sorted(kinds)}")
    kind = kinds.pop()
    if kind == "clean_spoofed":
        systems = {e.category for e in pool}
        if len(systems) != 1:
            raise PoolError(f"spoofed segment mixes spoofing systems {sorted(systems)}")

    n_target = int(round(target_duration * CANONICAL_RATE))
    pieces = []
    total = 0
    while total < n_target:
        entry = pool[int(rng.integers(len(pool)))]
        clip = loader(entry.path)
        if len(clip) == 0:
            raise PoolError(f"{entry.path}: empty audio")
        pieces.append(clip.samples)
        total += len(clip)
    samples = np.concatenate(pieces)[:n_target]
    provenance = "spoofed_clean" if kind == "clean_spoofed" else "clean"
    return AudioClip(samples, CANONICAL_RATE), provenance


def _clean_groups(pool: Sequence[SourceEntry]) -> list[list[SourceEntry]]:
    natural = [e for e in pool if e.kind == "clean_natural"]
    by_system: dict[str, list[SourceEntry]] = {}
    for e in pool:
        if e.kind == "clean_spoofed":
            by_system.setdefault(e.category, []).append(e)
    groups = [natural] if natural else []
    groups.extend(by_system[s] for s in sorted(by_system))
    return groups


def _noise_categories(noise_pool: Sequence[SourceEntry]) -> dict[str, list[SourceEntry]]:
    cats: dict[str, list[SourceEntry]] = {}
    for e in noise_pool:
        if e.kind != "noise":
            raise PoolError(f"{e.path}: expected a noise entry, got {e.kind}")
        cats.setdefault(e.category, []).append(e)
    return {c: cats[c] for c in sorted(cats)}


def _check_pools(clean_pool, noise_pool, duration_range, loader) -> None:
    if not clean_pool or not any(e.kind != "noise" for e in clean_pool):
        raise InsufficientPoolError("clean pool is empty")
    if not noise_pool:
        raise InsufficientPoolError("noise pool is empty")
    total = 0.0
    for e in clean_pool:
        total += e.duration if e.duration is not None else loader(e.path).duration_seconds
    if total < duration_range[0]:
        raise InsufficientPoolError(
            f"clean pool holds {total:.2f} s, less than the minimum segment of {duration_range[0]} s"
        )


@dataclass(frozen=True)
class _SegmentJob:
    index: int
    group: int
    duration: float
    seed: int


def _plan_segments(
    n_groups: int,
    group_weights: Sequence[float],
    rng: np.random.Generator,
    total_hours: float | None,
    segments: int | None,
    duration_range: tuple[float, float],
) -> list[_SegmentJob]:
    if segments is None and total_hours is None:
        raise ValueError("give either total_hours or segments")
    p = np.asarray(group_weights, dtype=float)
    p = p / p.sum()
    budget = None if segments is not None else total_hours * 3600.0
    jobs = []
    spent = 0.0
    while (segments is not None and len(jobs) < segments) or (budget is not None and spent < budget):
        duration = float(rng.uniform(*duration_range))
        group = int(rng.choice(n_groups, p=p))
        seed = int(rng.integers(2 ** 62))
        jobs.append(_SegmentJob(len(jobs), group, duration, seed))
        spent += duration
    return jobs


def _run_jobs(func, jobs, n_workers: int) -> list:
    if n_workers <= 1:
        return [func(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(func, jobs))


def _level_tag(level: float) -> str:
    return f"snr{level:+g}"


def _generate_ladder_corpus(
    clean_pool, noise_pool, total_hours, snr_levels, rng, out_dir, *,
    segments, duration_range, id_prefix, labeler, keep_components, jobs, loader,
) -> Manifest:
    out_dir = Path(out_dir)
    snr_levels = list(snr_levels)
    if not snr_levels:
        raise ValueError("SNR levels must be non-empty")
    loader = loader or AudioCache()
    _check_pools(clean_pool, noise_pool, duration_range, loader)
    groups = _clean_groups(clean_pool)
    categories = _noise_categories(noise_pool)
    cat_names = list(categories)
    plan = _plan_segments(
        len(groups), [len(g) for g in groups], rng, total_hours, segments, duration_range
    )
    (out_dir / "audio").mkdir(parents=True, exist_ok=True)
    if keep_components:
        (out_dir / "components").mkdir(exist_ok=True)

    def work(job: _SegmentJob) -> list[LabeledUtterance]:
        r = np.random.default_rng(job.seed)
        speech, provenance = build_clean_segment(groups[job.group], job.duration, r, loader)
        noisy_prov = "spoofed_noisy" if provenance == "spoofed_clean" else "noisy"
        # one noise category per generated file
        members = categories[cat_names[int(r.integers(len(cat_names)))]]
        noise = loader(members[int(r.integers(len(members)))].path)
        stem = f"{id_prefix}{job.index:06d}"
        clean_id = f"{stem}{GROUP_SEPARATOR}clean"
        write_wav(speech, out_dir / "audio" / f"{clean_id}.wav")
        rows = [LabeledUtterance(clean_id, f"audio/{clean_id}.wav", provenance, **labeler(provenance, None))]
        for level, res in ladder_mixes(speech, noise, snr_levels, r):
            uid = f"{stem}{GROUP_SEPARATOR}{_level_tag(level)}"
            write_wav(res.mixture, out_dir / "audio" / f"{uid}.wav")
            if keep_components:
                np.savez(out_dir / "components" / f"{uid}.npz",
                         speech=res.speech.samples, noise=res.noise.samples)
            rows.append(LabeledUtterance(
                uid, f"audio/{uid}.wav", noisy_prov, snr_db=float(level), **labeler(noisy_prov, level)
            ))
        return rows

    results = _run_jobs(work, plan, jobs)
    entries = [row for rows in results for row in rows]
    return Manifest(entries, "unsplit", out_dir)


def generate_bak_corpus(
    clean_pool: Sequence[SourceEntry],
    noise_pool: Sequence[SourceEntry],
    total_hours: float | None,
    snr_levels=DEFAULT_SNR_LEVELS,
    rng: np.random.Generator | None = None,
    out_dir=".",
    *,
    segments: int | None = None,
    duration_range: tuple[float, float] = DEFAULT_DURATION_RANGE,
    keep_components: bool = False,
    jobs: int = 1,
    id_prefix: str = "bak",
    loader: Callable[[str], AudioClip] | None = None,
) -> Manifest:
    """Clean segments plus one mixture per SNR level, labeled for BAK.

    Yields ``segments * (1 + len(snr_levels))`` entries. Segment durations are
    uniform over ``duration_range``; ``segments`` overrides ``total_hours``.
    With ``keep_components`` the scaled speech and noise of every mixture are
    stored under ``components/<id>.npz`` for verification.
    """
    rng = np.random.default_rng(0) if rng is None else rng

    def labeler(provenance, level):
        return {"bak": clean_bak_label() if level is None else snr_to_bak_label(level)}

    return _generate_ladder_corpus(
        clean_pool, noise_pool, total_hours, snr_levels, rng, out_dir,
        segments=segments, duration_range=duration_range, id_prefix=id_prefix,
        labeler=labeler, keep_components=keep_components, jobs=jobs, loader=loader,
    )


def generate_sig_corpus(
    clean_pool: Sequence[SourceEntry],
    noise_pool: Sequence[SourceEntry],
    degraded_manifest: Manifest | None,
    rng: np.random.Generator | None = None,
    out_dir=".",
    *,
    total_hours: float | None = None,
    segments: int | None = None,
    snr_levels=DEFAULT_SNR_LEVELS,
    duration_range: tuple[float, float] = DEFAULT_DURATION_RANGE,
    degraded_cap: int | None = None,
    jobs: int = 1,
    id_prefix: str = "sig",
    loader: Callable[[str], AudioClip] | None = None,
) -> Manifest:
    """Natural/spoofed ladder corpus labeled 5/1, merged with degraded data.

    Degraded entries are labeled from their provenance; codec entries are
    dropped. ``degraded_cap`` keeps only the first N degraded entries.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    out_dir = Path(out_dir)

    def labeler(provenance, level):
        return {"sig": sig_label(provenance)}

    generated = _generate_ladder_corpus(
        clean_pool, noise_pool, total_hours, snr_levels, rng, out_dir,
        segments=segments, duration_range=duration_range, id_prefix=id_prefix,
        labeler=labeler, keep_components=False, jobs=jobs, loader=loader,
    )
    entries = list(generated.entries)
    dropped = 0
    if degraded_manifest is not None:
        chosen = degraded_manifest.entries
        if degraded_cap is not None:
            chosen = chosen[:degraded_cap]
        for e in chosen:
            label = sig_label(e.provenance)
            if label is None:
                dropped += 1
                continue
            src = degraded_manifest.resolve(e).resolve()
            rel = os.path.relpath(src, out_dir.resolve())
            entries.append(LabeledUtterance(
                e.id, rel, e.provenance, snr_db=e.snr_db, sig=label, bak=e.bak, ovrl=e.ovrl
            ))
    if dropped:
        log.info("dropped %d codec entries from the SIG corpus", dropped)
    return Manifest(entries, "unsplit", out_dir)


def generate_degraded_corpus(
    clean_pool: Sequence[SourceEntry],
    noise_pool: Sequence[SourceEntry],
    rng: np.random.Generator,
    out_dir,
    *,
    count: int,
    kinds: Sequence[str] = DEGRADED_KINDS,
    duration_range: tuple[float, float] = DEFAULT_DURATION_RANGE,
    snr_range: tuple[float, float] = PRETRAIN_SNR_RANGE,
    codec_command: str | None = None,
    jobs: int = 1,
    id_prefix: str = "dgrd",
    loader: Callable[[str], AudioClip] | None = None,
) -> Manifest:
    """Natural speech put through one degradation family per file.

    File ``i`` gets ``kinds[i % len(kinds)]``. Noise SNRs are uniform in dB
    over ``snr_range``; "enhanced" applies an artifact simulator to a noisy
    mixture and "dereverbed" a dereverberation simulator to a reverberant one.
    Entries carry provenance only; labels are assigned by the consumer.
    """
    unknown = set(kinds) - set(DEGRADED_KINDS)
    if unknown:
        raise ValueError(f"unknown degraded kinds {sorted(unknown)}")
    out_dir = Path(out_dir)
    loader = loader or AudioCache()
    natural = [e for e in clean_pool if e.kind == "clean_natural"]
    if not natural:
        raise InsufficientPoolError("degraded corpus needs natural clean speech")
    _check_pools(natural, noise_pool, duration_range, loader)
    categories = _noise_categories(noise_pool)
    cat_names = list(categories)
    plan = [
        _SegmentJob(i, 0, float(rng.uniform(*duration_range)), int(rng.integers(2 ** 62)))
        for i in range(count)
    ]
    (out_dir / "audio").mkdir(parents=True, exist_ok=True)

    def noisy(speech, r):
        members = categories[cat_names[int(r.integers(len(cat_names)))]]
        noise = loader(members[int(r.integers(len(members)))].path)
        snr = float(r.uniform(*snr_range))
        offset = draw_noise_offset(len(speech), len(noise), r)
        return mix_at_snr(speech, noise, snr, offset).mixture, snr

    def work(job: _SegmentJob) -> LabeledUtterance:
        r = np.random.default_rng(job.seed)
        speech, _ = build_clean_segment(natural, job.duration, r, loader)
        kind = kinds[job.index % len(kinds)]
        snr = None
        if kind == "clean":
            out = speech
        elif kind == "noisy":
            out, snr = noisy(speech, r)
        elif kind == "reverbed":
            out = reverberate(speech, synth_rir(float(r.uniform(*RT60_RANGE)), r))
        elif kind == "enhanced":
            mixture, _ = noisy(speech, r)
            variant = ENHANCE_VARIANTS[int(r.integers(len(ENHANCE_VARIANTS)))]
            if variant == "clip_distort":
                # drive into the clipping threshold
                peak = float(np.max(np.abs(mixture.samples))) or 1.0
                mixture = mixture.with_samples(mixture.samples * (0.95 / peak))
            out = enhance_artifact(mixture, variant)
        elif kind == "dereverbed":
            rt60 = float(r.uniform(*RT60_RANGE))
            out = dereverb_artifact(reverberate(speech, synth_rir(rt60, r)), rt60)
        else:
            if codec_command:
                out = external_codec(speech, codec_command)
            else:
                out = codec_degrade(speech, CODEC_VARIANTS[int(r.integers(len(CODEC_VARIANTS)))])
        uid = f"{id_prefix}{job.index:06d}{GROUP_SEPARATOR}{kind}"
        write_wav(out, out_dir / "audio" / f"{uid}.wav")
        return LabeledUtterance(uid, f"audio/{uid}.wav", kind, snr_db=snr)

    return Manifest(_run_jobs(work, plan, jobs), "unsplit", out_dir)


# --------------------------------------------------------------------------
# Splits and exclusion lists
# --------------------------------------------------------------------------

def split_train_val(
    manifest: Manifest, ratio: float = 0.9, rng: np.random.Generator | None = None
) -> tuple[Manifest, Manifest]:
    """Group-atomic split: all variants of one clean segment share a side."""
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"ratio must lie in (0, 1), got {ratio}")
    rng = np.random.default_rng(0) if rng is None else rng
    groups = list(dict.fromkeys(group_of(e.id) for e in manifest.entries))
    order = rng.permutation(len(groups))
    n_train = int(round(ratio * len(groups)))
    if len(groups) >= 2:
        n_train = min(max(n_train, 1), len(groups) - 1)
    train_groups = {groups[i] for i in order[:n_train]}
    train = [e for e in manifest.entries if group_of(e.id) in train_groups]
    valid = [e for e in manifest.entries if group_of(e.id) not in train_groups]
    return manifest.replace(train, "train"), manifest.replace(valid, "valid")


def _normalize_id(raw: str) -> str:
    raw = raw.strip()
    return raw[:-4] if raw.lower().endswith(".wav") else raw


def read_exclusion_list(path) -> list[str]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [_normalize_id(x) for x in lines if x.strip() and not x.lstrip().startswith("#")]


def vmc2024_exclusion_list(which: str) -> list[str]:
    """CHiME-7 UDASE ids reused in the VMC 2024 Track 3 ``train`` or ``valid`` set."""
    if which not in ("train", "valid"):
        raise ValueError("which must be 'train' or 'valid'")
    text = resources.files("p835kit").joinpath(f"data/vmc2024_{which}_exclude.txt").read_text("utf-8")
    return [_normalize_id(x) for x in text.splitlines() if x.strip() and not x.startswith("#")]


def apply_exclusion_list(manifest: Manifest, ids: Iterable[str]) -> tuple[Manifest, int]:
    """Drop entries whose id (ignoring a ``.wav`` suffix) is listed."""
    banned = {_normalize_id(i) for i in ids}
    kept = [e for e in manifest.entries if _normalize_id(e.id) not in banned]
    return manifest.replace(kept), len(manifest.entries) - len(kept)


def label_histogram(manifest: Manifest, target: str) -> dict[str, int]:
    counts = Counter(e.label(target) for e in manifest.entries if e.label(target) is not None)
    return {f"{k:g}": counts[k] for k in sorted(counts)}


def level_histogram(manifest: Manifest) -> dict[str, int]:
    counts = Counter("clean" if e.snr_db is None else f"{e.snr_db:+g}" for e in manifest.entries)
    return dict(sorted(counts.items()))
