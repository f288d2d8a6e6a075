import json
import math
import re

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scipy import signal

from p835kit.audio import AudioClip, active_speech_level, load_canonical, read_wav, rms
from p835kit.dataset import (
    InsufficientPoolError,
    LabeledUtterance,
    Manifest,
    ManifestError,
    PoolError,
    SourceEntry,
    apply_exclusion_list,
    build_clean_segment,
    clean_bak_label,
    generate_bak_corpus,
    generate_degraded_corpus,
    generate_sig_corpus,
    group_of,
    label_histogram,
    read_exclusion_list,
    read_manifest,
    read_pool,
    sig_label,
    snr_to_bak_label,
    split_train_val,
    vmc2024_exclusion_list,
    write_manifest,
)


# ---------------------------------------------------------------- labels

def test_bak_label_examples():
    assert snr_to_bak_label(-20) == 1.0
    assert snr_to_bak_label(50) == 4.5
    assert snr_to_bak_label(0) == 2.0
    assert clean_bak_label() == 5.0
    assert snr_to_bak_label(60) == clean_bak_label()
    assert snr_to_bak_label(-100) == 1.0


@settings(max_examples=200)
@given(st.floats(-200, 200), st.floats(-200, 200))
def test_bak_label_monotone(a, b):
    lo, hi = min(a, b), max(a, b)
    assert snr_to_bak_label(lo) <= snr_to_bak_label(hi)
    assert 1.0 <= snr_to_bak_label(a) <= 5.0


@given(st.floats(-20, 20))
def test_bak_label_symmetry(s):
    assert math.isclose(snr_to_bak_label(s) + snr_to_bak_label(-s), 4.0, rel_tol=0, abs_tol=1e-12)


@given(st.floats(-20, 60))
def test_bak_label_affine_oracle(s):
    assert math.isclose(snr_to_bak_label(s), 2 + s / 20, abs_tol=1e-12)


def test_sig_label_rules():
    for p in ("clean", "noisy", "reverbed"):
        assert sig_label(p) == 5.0
    for p in ("spoofed_clean", "spoofed_noisy", "enhanced", "dereverbed"):
        assert sig_label(p) == 1.0
    assert sig_label("codec") is None
    with pytest.raises(ValueError):
        sig_label("mystery")


# ---------------------------------------------------------------- types and manifests

def test_source_entry_invariants():
    with pytest.raises(PoolError):
        SourceEntry("n.wav", "noise")
    with pytest.raises(PoolError):
        SourceEntry("s.wav", "clean_spoofed")
    with pytest.raises(PoolError):
        SourceEntry("x.wav", "music")
    SourceEntry("c.wav", "clean_natural")


def test_utterance_invariants():
    LabeledUtterance("a", "a.wav", "noisy", snr_db=3.0, bak=2.15)
    with pytest.raises(ValueError):
        LabeledUtterance("a", "a.wav", "noisy")
    with pytest.raises(ValueError):
        LabeledUtterance("a", "a.wav", "clean", snr_db=3.0)
    with pytest.raises(ValueError):
        LabeledUtterance("a", "a.wav", "clean", sig=5.5)
    with pytest.raises(ValueError):
        LabeledUtterance("a", "a.wav", "clean", bak=0.9)
    with pytest.raises(ValueError):
        Manifest([LabeledUtterance("a", "a.wav", "clean")] * 2)


def test_manifest_round_trip(tmp_path):
    m = Manifest([
        LabeledUtterance("a__clean", "audio/a.wav", "clean", bak=5.0),
        LabeledUtterance("a__snr+10", "audio/b.wav", "noisy", snr_db=10.0, bak=2.5),
        LabeledUtterance("z", "/abs/z.wav", "enhanced", sig=1.0, bak=3.2, ovrl=2.1),
    ])
    p = tmp_path / "m.jsonl"
    write_manifest(m, p)
    back = read_manifest(p)
    assert back == m
    rows = [json.loads(line) for line in p.read_text().splitlines()]
    assert rows[0] == {"id": "a__clean", "path": "audio/a.wav", "provenance": "clean", "bak": 5.0}
    assert "sig" not in rows[1] and "snr_db" in rows[1]
    assert back.resolve(back.entries[0]) == tmp_path / "audio/a.wav"


def test_manifest_errors_report_line(tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text('{"id": "a", "path": "a.wav", "provenance": "clean"}\n{"path": "b.wav", "provenance": "clean"}\n')
    with pytest.raises(ManifestError) as exc:
        read_manifest(p)
    assert exc.value.lineno == 2
    p.write_text('{"id": "a", "path": "a.wav", "provenance": "clean", "mos": 3}\n')
    with pytest.raises(ManifestError):
        read_manifest(p)
    p.write_text('{"id": "a", "path": "a.wav", "provenance": "clean"}\n{"id": "a", "path": "b.wav", "provenance": "clean"}\n')
    with pytest.raises(ManifestError) as exc:
        read_manifest(p)
    assert exc.value.lineno == 2
    p.write_text("not json\n")
    with pytest.raises(ManifestError):
        read_manifest(p)


def test_pool_relative_paths(toy_pool):
    out, entries = toy_pool
    back = read_pool(out / "pool.jsonl")
    assert [e.path for e in back] == [e.path for e in entries]


# ---------------------------------------------------------------- segments

def _const_loader(lengths):
    return lambda path: AudioClip(np.full(lengths[path], 0.1), 16000)


def test_segment_prefix():
    pool = [SourceEntry("ten", "clean_natural")]
    loader = lambda p: AudioClip(np.arange(160000) / 160000, 16000)
    seg, prov = build_clean_segment(pool, 4.0, np.random.default_rng(0), loader)
    assert prov == "clean" and len(seg) == 64000
    assert np.array_equal(seg.samples, np.arange(64000) / 160000)


def test_segment_concatenation_count():
    pool = [SourceEntry("three", "clean_natural")]
    calls = []

    def loader(p):
        calls.append(p)
        return AudioClip(np.full(48000, 0.1), 16000)

    seg, _ = build_clean_segment(pool, 19.0, np.random.default_rng(0), loader)
    assert len(calls) == 7 and len(seg) == 19 * 16000


def test_segment_pool_errors():
    loader = _const_loader({"a": 100, "b": 100})
    with pytest.raises(PoolError):
        build_clean_segment([], 1.0, np.random.default_rng(0), loader)
    mixed = [SourceEntry("a", "clean_spoofed", "A01"), SourceEntry("b", "clean_spoofed", "A02")]
    with pytest.raises(PoolError):
        build_clean_segment(mixed, 1.0, np.random.default_rng(0), loader)
    kinds = [SourceEntry("a", "clean_natural"), SourceEntry("b", "clean_spoofed", "A01")]
    with pytest.raises(PoolError):
        build_clean_segment(kinds, 1.0, np.random.default_rng(0), loader)
    seg, prov = build_clean_segment(mixed[:1], 0.01, np.random.default_rng(0), loader)
    assert prov == "spoofed_clean"


# ---------------------------------------------------------------- corpora

@pytest.fixture(scope="module")
def bak_corpus(pools, tmp_path_factory):
    natural, _, noise = pools
    out = tmp_path_factory.mktemp("bak")
    m = generate_bak_corpus(natural, noise, None, rng=np.random.default_rng(5), out_dir=out,
                            segments=6, duration_range=(3.0, 5.0), keep_components=True)
    return out, m


def test_bak_corpus_count_and_labels(bak_corpus):
    out, m = bak_corpus
    assert len(m) == 6 * 9
    groups = {}
    for e in m:
        groups.setdefault(group_of(e.id), []).append(e)
    assert len(groups) == 6
    for members in groups.values():
        labels = sorted(e.bak for e in members)
        assert labels == [1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0]
        clean = [e for e in members if e.provenance == "clean"]
        assert len(clean) == 1 and clean[0].snr_db is None
    for e in m:
        assert (out / e.path).is_file()


def test_bak_corpus_durations_in_range(bak_corpus):
    out, m = bak_corpus
    for e in m:
        if e.provenance == "clean":
            d = len(read_wav(out / e.path)) / 16000
            assert 3.0 <= d <= 5.0


def test_bak_corpus_snr_from_components(bak_corpus):
    out, m = bak_corpus
    for e in m:
        if e.snr_db is None:
            continue
        comp = np.load(out / "components" / f"{e.id}.npz")
        s = AudioClip(comp["speech"], 16000)
        n = AudioClip(comp["noise"], 16000)
        assert abs(20 * np.log10(active_speech_level(s) / rms(n)) - e.snr_db) <= 0.1


def _source_of(component, sources):
    """Index of the source whose window best matches ``component`` (normalized cross-correlation)."""
    scores = []
    for src in sources:
        c = signal.fftconvolve(src, component[::-1], mode="valid")
        energy = signal.fftconvolve(src ** 2, np.ones(len(component)), mode="valid")
        scores.append(np.max(c / np.sqrt(np.maximum(energy, 1e-20) * np.sum(component ** 2))))
    return int(np.argmax(scores)), max(scores)


def test_bak_corpus_one_noise_category(pools, tmp_path):
    natural, _, noise = pools
    sources = [load_canonical(e.path).samples for e in noise]
    m = generate_bak_corpus(natural, noise, None, [0, 10, 20], np.random.default_rng(1), tmp_path,
                            segments=4, duration_range=(3.0, 3.5), keep_components=True)
    used = {}
    for e in m:
        if e.snr_db is None:
            continue
        n = np.load(tmp_path / "components" / f"{e.id}.npz")["noise"]
        idx, score = _source_of(n, sources)
        assert score > 0.999
        used.setdefault(group_of(e.id), set()).add(noise[idx].category)
    assert all(len(c) == 1 for c in used.values())


def test_corpus_deterministic_and_job_independent(pools, tmp_path):
    natural, _, noise = pools
    a = generate_bak_corpus(natural, noise, None, [0, 10], np.random.default_rng(9), tmp_path / "a",
                            segments=3, duration_range=(3.0, 4.0))
    b = generate_bak_corpus(natural, noise, None, [0, 10], np.random.default_rng(9), tmp_path / "b",
                            segments=3, duration_range=(3.0, 4.0), jobs=3)
    assert a.entries == b.entries
    for e in a:
        assert (tmp_path / "a" / e.path).read_bytes() == (tmp_path / "b" / e.path).read_bytes()


def test_single_segment_single_level(pools, tmp_path):
    natural, _, noise = pools
    m = generate_bak_corpus(natural, noise, None, [0], np.random.default_rng(0), tmp_path,
                            segments=1, duration_range=(3.0, 3.0))
    assert sorted(e.bak for e in m) == [2.0, 5.0]


def test_hours_budget(pools, tmp_path):
    natural, _, noise = pools
    m = generate_bak_corpus(natural, noise, 10 / 3600, [0], np.random.default_rng(0), tmp_path,
                            duration_range=(3.0, 3.0))
    # 3 segments reach 9 s, the fourth crosses 10 s
    assert len(m) == 4 * 2


def test_insufficient_pool(pools, tmp_path):
    natural, _, noise = pools
    with pytest.raises(InsufficientPoolError):
        generate_bak_corpus(natural, [], None, [0], np.random.default_rng(0), tmp_path, segments=1)
    with pytest.raises(InsufficientPoolError):
        generate_bak_corpus([], noise, None, [0], np.random.default_rng(0), tmp_path, segments=1)
    tiny = [SourceEntry(natural[0].path, "clean_natural", None, 0.5)]
    with pytest.raises(InsufficientPoolError):
        generate_bak_corpus(tiny, noise, None, [0], np.random.default_rng(0), tmp_path, segments=1)


@pytest.fixture(scope="module")
def degraded(pools, tmp_path_factory):
    natural, _, noise = pools
    out = tmp_path_factory.mktemp("dgrd")
    m = generate_degraded_corpus(natural, noise, np.random.default_rng(3), out, count=12,
                                 duration_range=(2.0, 3.0))
    return m


def test_degraded_kinds(degraded):
    counts = {}
    for e in degraded:
        counts[e.provenance] = counts.get(e.provenance, 0) + 1
        assert (e.snr_db is not None) == (e.provenance == "noisy")
        if e.snr_db is not None:
            assert -20 <= e.snr_db <= 50
    assert counts == {k: 2 for k in ("clean", "noisy", "reverbed", "enhanced", "dereverbed", "codec")}


def test_sig_corpus_drops_codec(pools, degraded, tmp_path):
    _, clean, noise = pools
    m = generate_sig_corpus(clean, noise, degraded, np.random.default_rng(4), tmp_path,
                            segments=4, snr_levels=[0, 20], duration_range=(3.0, 4.0))
    assert all(e.provenance != "codec" for e in m)
    assert set(label_histogram(m, "sig")) <= {"1", "5"}
    assert len(m) == 4 * 3 + 10
    for e in m:
        assert m.resolve(e).is_file()
        if e.provenance.startswith("spoofed"):
            assert e.sig == 1.0
    capped = generate_sig_corpus(clean, noise, degraded, np.random.default_rng(4), tmp_path / "c",
                                 segments=1, snr_levels=[0], duration_range=(3.0, 3.0), degraded_cap=3)
    assert len(capped) == 2 + 3


def test_sig_corpus_all_natural(pools, tmp_path):
    natural, _, noise = pools
    m = generate_sig_corpus(natural, noise, None, np.random.default_rng(0), tmp_path,
                            segments=2, snr_levels=[0], duration_range=(3.0, 3.0))
    assert {e.sig for e in m} == {5.0}


def test_sig_corpus_three_codec_entries(pools, tmp_path):
    natural, _, noise = pools
    d = generate_degraded_corpus(natural, noise, np.random.default_rng(0), tmp_path / "d", count=3,
                                 kinds=("codec",), duration_range=(2.0, 2.0))
    m = generate_sig_corpus(natural, noise, d, np.random.default_rng(0), tmp_path / "s",
                            segments=1, snr_levels=[0], duration_range=(3.0, 3.0))
    assert len(m) == 2 and all(e.provenance != "codec" for e in m)


def test_spoofed_segments_use_one_system(pools, tmp_path):
    _, clean, noise = pools
    m = generate_sig_corpus([e for e in clean if e.kind == "clean_spoofed"], noise, None,
                            np.random.default_rng(0), tmp_path, segments=3, snr_levels=[0],
                            duration_range=(3.0, 3.0))
    assert {e.provenance for e in m} == {"spoofed_clean", "spoofed_noisy"}


# ---------------------------------------------------------------- splits

def _grouped_manifest(n_groups, per_group=3):
    return Manifest([
        LabeledUtterance(f"g{g:03d}__v{i}", f"{g}_{i}.wav", "clean")
        for g in range(n_groups) for i in range(per_group)
    ])


def test_split_ten_groups():
    tr, va = split_train_val(_grouped_manifest(10), 0.9, np.random.default_rng(0))
    assert len({group_of(e.id) for e in tr}) == 9
    assert len({group_of(e.id) for e in va}) == 1
    assert tr.split == "train" and va.split == "valid"


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 40), st.integers(1, 4), st.floats(0.05, 0.95), st.integers(0, 2 ** 32 - 1))
def test_split_partition_property(n_groups, per, ratio, seed):
    m = _grouped_manifest(n_groups, per)
    tr, va = split_train_val(m, ratio, np.random.default_rng(seed))
    ids_tr, ids_va = {e.id for e in tr}, {e.id for e in va}
    assert not ids_tr & ids_va and ids_tr | ids_va == {e.id for e in m}
    assert not {group_of(i) for i in ids_tr} & {group_of(i) for i in ids_va}
    assert abs(len({group_of(i) for i in ids_tr}) - ratio * n_groups) <= 1
    again = split_train_val(m, ratio, np.random.default_rng(seed))
    assert again[0].entries == tr.entries


def test_split_rejects_bad_ratio():
    with pytest.raises(ValueError):
        split_train_val(_grouped_manifest(3), 1.0)


# ---------------------------------------------------------------- exclusion lists

def test_bundled_lists():
    train, valid = vmc2024_exclusion_list("train"), vmc2024_exclusion_list("valid")
    assert len(train) == len(set(train)) == 60
    assert len(valid) == len(set(valid)) == 40
    assert not set(train) & set(valid)
    assert all(re.fullmatch(r"C\d/S\d\d_P\d\d_\d+_output", i) for i in train + valid)
    with pytest.raises(ValueError):
        vmc2024_exclusion_list("test")


def _manifest_with(ids, extra=5):
    rows = [LabeledUtterance(i, f"{i}.wav", "clean") for i in ids]
    rows += [LabeledUtterance(f"other{k}", f"o{k}.wav", "clean") for k in range(extra)]
    return Manifest(rows)


def test_exclusion_counts():
    train, valid = vmc2024_exclusion_list("train"), vmc2024_exclusion_list("valid")
    m = _manifest_with(train + valid)
    m1, n1 = apply_exclusion_list(m, train)
    m2, n2 = apply_exclusion_list(m1, valid)
    assert (n1, n2) == (60, 40) and len(m2) == 5
    same, n = apply_exclusion_list(m, [])
    assert n == 0 and same.entries == m.entries


def test_exclusion_idempotent_and_suffix(tmp_path):
    m = _manifest_with(["C0/a_output", "C1/b_output"])
    p = tmp_path / "ex.txt"
    p.write_text("# header\nC0/a_output.wav\n\n")
    ids = read_exclusion_list(p)
    assert ids == ["C0/a_output"]
    once, n1 = apply_exclusion_list(m, ids)
    twice, n2 = apply_exclusion_list(once, ids)
    assert (n1, n2) == (1, 0) and once.entries == twice.entries
