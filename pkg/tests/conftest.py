import numpy as np
import pytest

from p835kit.synthetic import write_toy_pools


@pytest.fixture(scope="session")
def toy_pool(tmp_path_factory):
    """Six natural clips, four spoofed clips from two systems, two noise categories."""
    out = tmp_path_factory.mktemp("pool")
    entries = write_toy_pools(out, np.random.default_rng(1234), n_natural=6, n_spoofed=4,
                              noise_categories=("white", "pink"), noises_per_category=1)
    return out, entries


@pytest.fixture(scope="session")
def pools(toy_pool):
    _, entries = toy_pool
    natural = [e for e in entries if e.kind == "clean_natural"]
    clean = [e for e in entries if e.kind != "noise"]
    noise = [e for e in entries if e.kind == "noise"]
    return natural, clean, noise


MINI_CONFIG = """\
seed: {seed}
synth:
  pool: pool/pool.jsonl
  bak: {{segments: 6, duration_range: [2, 3]}}
  degraded: {{count: 12, duration_range: [2, 3]}}
  sig: {{segments: 4, duration_range: [2, 3]}}
model: {{widths: [16, 16]}}
train:
  bak:
    stage1: {{epochs: 2, optimizer: adam, learning_rate: 0.001}}
    stage2: {{epochs: 2, optimizer: adam, learning_rate: 0.001, train: rated/train.jsonl, valid: rated/valid.jsonl}}
  sig:
    stage1: {{epochs: 2, optimizer: adam, learning_rate: 0.001}}
    stage2: {{epochs: 2, optimizer: adam, learning_rate: 0.001, train: rated/train.jsonl, valid: rated/valid.jsonl}}
  ovrl: {{epochs: 3, train: rated/train.jsonl}}
"""


def build_mini_workspace(root, seed=11):
    """Toy pool, a rated target set split 16/8, and a mini run config under ``root``."""
    from pathlib import Path

    from p835kit.dataset import Manifest, write_manifest
    from p835kit.synthetic import write_toy_rated_set

    root = Path(root)
    entries = write_toy_pools(root / "pool", np.random.default_rng(seed), n_natural=6, n_spoofed=4)
    rated = write_toy_rated_set(entries, entries, root / "rated", np.random.default_rng(seed + 1), count=24,
                                duration_range=(2.0, 3.0))
    write_manifest(Manifest(rated.entries[:16]), root / "rated" / "train.jsonl")
    write_manifest(Manifest(rated.entries[16:]), root / "rated" / "valid.jsonl")
    write_manifest(rated, root / "rated" / "all.jsonl")
    cfg = root / "mini.yaml"
    cfg.write_text(MINI_CONFIG.format(seed=seed), encoding="utf-8")
    return cfg


@pytest.fixture(scope="session")
def mini_workspace(tmp_path_factory):
    return build_mini_workspace(tmp_path_factory.mktemp("mini"))


_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion; echoed in the terminal summary."""
    def record(number: int, title: str, ok: bool, detail: str = "") -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] #{number:>2} {title}" + (f" ({detail})" if detail else "")
        _ACCEPTANCE[number] = line
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[number])
