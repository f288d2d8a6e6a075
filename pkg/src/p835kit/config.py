"""Declarative run configuration (JSON or YAML) with up-front validation.

Key set::

    seed: 7                       # mandatory
    run_dir: runs/demo            # default: runs/<config file stem>
    jobs: 1
    model: {widths: [128, 128], frontend: {n_mels: 64, ...}}
    synth:
      pool: sources/pool.jsonl    # SourceEntry JSON lines
      split_ratio: 0.9
      bak: {segments: 6 | hours: 20, levels: [...], duration_range: [3, 19], keep_components: false}
      degraded: {count: 60, kinds: [...], codec_command: "ffmpeg ... {input} ... {output}"}
      sig: {segments | hours, levels, duration_range, degraded_manifest: path, degraded_cap: null}
    train:
      bak: {stage1: {<TrainConfig fields>, train: path, valid: path}, stage2: {...}}
      sig: {stage1: {...}, stage2: {...}}
      ovrl: {<TrainConfig fields>, train: path}

Relative paths resolve against the config file's directory.
"""

from __future__ import annotations

import dataclasses
import json
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .dataset import read_pool
from .model import ModelConfig, TrainConfig
from .model.network import FrontendConfig
from .model.training import STAGE_EPOCHS

_TRAIN_FIELDS = {f.name for f in dataclasses.fields(TrainConfig)}
_TOP_KEYS = {"seed", "run_dir", "jobs", "model", "synth", "train"}
_SYNTH_KEYS = {"pool", "split_ratio", "bak", "sig", "degraded"}
_CORPUS_KEYS = {"segments", "hours", "levels", "duration_range", "keep_components", "degraded_manifest", "degraded_cap"}
_DEGRADED_KEYS = {"count", "kinds", "codec_command", "duration_range"}


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {p}" for p in self.problems))


def derive_rng(seed: int, *names: str) -> np.random.Generator:
    """Independent, stable stream per named task."""
    return np.random.default_rng([seed] + [zlib.crc32(n.encode()) for n in names])


@dataclass
class RunConfig:
    seed: int
    run_dir: Path
    base_dir: Path
    jobs: int = 1
    model: ModelConfig = field(default_factory=ModelConfig)
    synth: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    def path(self, value) -> Path:
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p

    def train_config(self, section: dict, stage: str) -> TrainConfig:
        values = {k: v for k, v in section.items() if k in _TRAIN_FIELDS}
        values.setdefault("epochs", STAGE_EPOCHS[stage])
        values.setdefault("seed", self.seed)
        return TrainConfig(**values)

    def run_path(self, *parts) -> Path:
        return self.run_dir.joinpath(*parts)

    def to_dict(self) -> dict:
        d = dict(self.raw)
        d["seed"] = self.seed
        d["run_dir"] = str(self.run_dir)
        d["jobs"] = self.jobs
        return d


def _read_raw(path: Path) -> dict:
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() in (".yaml", ".yml"):
        data = yaml.safe_load(text)
    else:
        data = json.loads(text)
    if not isinstance(data, dict):
        raise ConfigError([f"{path}: top level must be a mapping"])
    return data


def _check_train_section(section, where: str, problems: list[str]) -> None:
    if not isinstance(section, dict):
        problems.append(f"{where} must be a mapping")
        return
    unknown = set(section) - _TRAIN_FIELDS - {"train", "valid"}
    if unknown:
        problems.append(f"{where}: unknown keys {sorted(unknown)}")
    try:
        TrainConfig(**{k: v for k, v in section.items() if k in _TRAIN_FIELDS})
    except (TypeError, ValueError) as exc:
        problems.append(f"{where}: {exc}")


def load_config(path, *, seed: int | None = None, run_dir=None, jobs: int | None = None,
                require: tuple[str, ...] = ()) -> RunConfig:
    """Load and validate; every problem found is reported in one ConfigError."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError([f"config file not found: {path}"])
    try:
        raw = _read_raw(path)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError([f"{path}: cannot parse ({exc})"]) from exc
    problems: list[str] = []
    base = path.parent.resolve()

    unknown = set(raw) - _TOP_KEYS
    if unknown:
        problems.append(f"unknown top-level keys {sorted(unknown)}")
    seed = raw.get("seed") if seed is None else seed
    if not isinstance(seed, int) or isinstance(seed, bool):
        problems.append("seed is mandatory and must be an integer")
    jobs = raw.get("jobs", 1) if jobs is None else jobs
    if not isinstance(jobs, int) or jobs < 1:
        problems.append("jobs must be a positive integer")

    model_raw = raw.get("model", {}) or {}
    model = ModelConfig()
    try:
        fe = FrontendConfig(**model_raw.get("frontend", {}))
        model = ModelConfig(fe, tuple(model_raw.get("widths", (128, 128))))
    except (TypeError, ValueError) as exc:
        problems.append(f"model: {exc}")

    synth = raw.get("synth", {}) or {}
    if "synth" in require:
        if not synth:
            problems.append("synth section is required")
        unknown = set(synth) - _SYNTH_KEYS
        if unknown:
            problems.append(f"synth: unknown keys {sorted(unknown)}")
        if not any(k in synth for k in ("bak", "sig")):
            problems.append("synth needs a bak and/or sig corpus section")
        pool = synth.get("pool")
        if pool is None:
            problems.append("synth.pool is required")
        else:
            pool_path = Path(pool) if Path(pool).is_absolute() else base / pool
            if not pool_path.is_file():
                problems.append(f"synth.pool not found: {pool_path}")
            else:
                try:
                    for entry in read_pool(pool_path):
                        if not Path(entry.path).is_file():
                            problems.append(f"pool source missing: {entry.path}")
                except ValueError as exc:
                    problems.append(f"synth.pool: {exc}")
        ratio = synth.get("split_ratio", 0.9)
        if not isinstance(ratio, (int, float)) or not 0 < ratio < 1:
            problems.append("synth.split_ratio must lie in (0, 1)")
        for name in ("bak", "sig"):
            section = synth.get(name)
            if section is None:
                continue
            if not isinstance(section, dict):
                problems.append(f"synth.{name} must be a mapping")
                continue
            unknown = set(section) - _CORPUS_KEYS
            if unknown:
                problems.append(f"synth.{name}: unknown keys {sorted(unknown)}")
            if ("segments" in section) == ("hours" in section):
                problems.append(f"synth.{name}: give exactly one of segments or hours")
            if "levels" in section and not section["levels"]:
                problems.append(f"synth.{name}.levels must be non-empty")
            dm = section.get("degraded_manifest")
            if dm is not None and not (Path(dm) if Path(dm).is_absolute() else base / dm).is_file():
                problems.append(f"synth.{name}.degraded_manifest not found: {dm}")
        degraded = synth.get("degraded")
        if degraded is not None:
            if not isinstance(degraded, dict) or not isinstance(degraded.get("count"), int):
                problems.append("synth.degraded needs an integer count")
            else:
                unknown = set(degraded) - _DEGRADED_KEYS
                if unknown:
                    problems.append(f"synth.degraded: unknown keys {sorted(unknown)}")

    train = raw.get("train", {}) or {}
    for target in ("bak", "sig"):
        for stage in ("stage1", "stage2"):
            section = train.get(target, {}).get(stage) if isinstance(train.get(target), dict) else None
            if section is not None:
                _check_train_section(section, f"train.{target}.{stage}", problems)
                for key in ("train", "valid"):
                    if key in section and not (base / section[key]).is_file() and not Path(section[key]).is_file():
                        problems.append(f"train.{target}.{stage}.{key} not found: {section[key]}")
    if "ovrl" in train:
        _check_train_section(train["ovrl"], "train.ovrl", problems)
        tr = train["ovrl"].get("train") if isinstance(train["ovrl"], dict) else None
        if tr is not None and not (Path(tr) if Path(tr).is_absolute() else base / tr).is_file():
            problems.append(f"train.ovrl.train not found: {tr}")

    if problems:
        raise ConfigError(problems)
    rd = run_dir if run_dir is not None else raw.get("run_dir", f"runs/{path.stem}")
    rd = Path(rd) if Path(rd).is_absolute() else (base / rd if run_dir is None else Path(rd).resolve())
    return RunConfig(seed, rd, base, jobs, model, synth, train, raw)
