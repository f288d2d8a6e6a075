import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.io import wavfile

from p835kit.audio import (
    AudioClip,
    AudioFileMissing,
    MalformedWav,
    UnsupportedEncoding,
    active_speech_level,
    center_crop,
    frame_count,
    hann_window,
    load_canonical,
    log_mel,
    mel_band_centers,
    mel_filterbank,
    peak_normalize,
    random_crop,
    read_wav,
    resample,
    rms,
    write_wav,
)


def _clip(x, rate=16000):
    return AudioClip(np.asarray(x, dtype=np.float64), rate)


# ---------------------------------------------------------------- WAV I/O

def test_read_int16_scaling(tmp_path):
    p = tmp_path / "a.wav"
    wavfile.write(p, 16000, np.array([0, 16384, -32768], dtype=np.int16))
    clip = read_wav(p)
    assert clip.sample_rate == 16000
    assert clip.samples.tolist() == [0.0, 0.5, -1.0]


def test_read_one_second(tmp_path):
    p = tmp_path / "a.wav"
    wavfile.write(p, 16000, np.zeros(16000, dtype=np.int16))
    assert len(read_wav(p)) == 16000


def test_stereo_float_downmix(tmp_path):
    p = tmp_path / "s.wav"
    wavfile.write(p, 16000, np.array([[1.0, 0.0]], dtype=np.float32))
    assert read_wav(p).samples.tolist() == [0.5]


def test_write_matches_scipy_reader(tmp_path):
    rng = np.random.default_rng(0)
    x = rng.uniform(-0.9, 0.9, 500)
    p = tmp_path / "w.wav"
    write_wav(_clip(x), p)
    rate, raw = wavfile.read(p)
    assert rate == 16000 and raw.dtype == np.int16
    np.testing.assert_array_equal(raw, np.round(x * 32768).astype(np.int16))


def test_silence_writes_zeros(tmp_path):
    p = tmp_path / "z.wav"
    write_wav(_clip(np.zeros(100)), p)
    assert not wavfile.read(p)[1].any()


def test_round_trip_bound_100_clips(tmp_path):
    rng = np.random.default_rng(1)
    bound = 1 - 1 / 32768
    for i in range(100):
        x = rng.uniform(-bound, bound, int(rng.integers(1, 400)))
        p = tmp_path / f"r{i}.wav"
        write_wav(_clip(x), p)
        assert np.max(np.abs(read_wav(p).samples - x)) <= 1 / 32768


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-1 + 1 / 32768, 1 - 1 / 32768), min_size=1, max_size=64))
def test_round_trip_property(tmp_path_factory, values):
    p = tmp_path_factory.mktemp("rt") / "x.wav"
    write_wav(_clip(values), p)
    assert np.max(np.abs(read_wav(p).samples - np.array(values))) <= 1 / 32768


def test_read_errors_are_distinct(tmp_path):
    with pytest.raises(AudioFileMissing):
        read_wav(tmp_path / "missing.wav")
    bad = tmp_path / "bad.wav"
    bad.write_bytes(b"not a wave file at all")
    with pytest.raises(MalformedWav):
        read_wav(bad)
    p24 = tmp_path / "pcm8.wav"
    wavfile.write(p24, 8000, np.array([0, 128, 255], dtype=np.uint8))
    with pytest.raises(UnsupportedEncoding):
        read_wav(p24)


def test_extensible_header(tmp_path):
    # WAVE_FORMAT_EXTENSIBLE wrapping 16-bit PCM
    payload = np.array([1000, -1000], dtype="<i2").tobytes()
    fmt = struct.pack("<HHIIHH", 0xFFFE, 1, 16000, 32000, 2, 16)
    fmt += struct.pack("<HHI", 22, 16, 0) + struct.pack("<H", 1) + b"\x00" * 14
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt + b"data" + struct.pack("<I", len(payload)) + payload
    p = tmp_path / "ext.wav"
    p.write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)
    np.testing.assert_allclose(read_wav(p).samples, [1000 / 32768, -1000 / 32768])


def test_load_canonical_resamples(tmp_path):
    p = tmp_path / "8k.wav"
    wavfile.write(p, 8000, np.zeros(8000, dtype=np.int16))
    clip = load_canonical(p)
    assert clip.sample_rate == 16000 and len(clip) == 16000


# ---------------------------------------------------------------- resampling

def test_resample_identity():
    c = _clip(np.random.default_rng(0).standard_normal(100))
    assert np.array_equal(resample(c, 16000).samples, c.samples)


def test_resample_length():
    assert len(resample(_clip(np.zeros(8000), 8000), 16000)) == 16000
    assert len(resample(_clip(np.zeros(44100), 44100), 16000)) == 16000


def test_resample_round_trip_sine():
    t = np.arange(16000) / 16000
    x = np.sin(2 * np.pi * 100 * t)
    back = resample(resample(_clip(x), 8000), 16000).samples
    assert np.corrcoef(x, back)[0, 1] >= 0.999


def test_resample_matches_bandlimited_sine():
    # a 1 kHz tone at 16 kHz resampled to 22.05 kHz is the same tone sampled on the new grid
    t_in = np.arange(16000) / 16000
    out = resample(_clip(np.sin(2 * np.pi * 1000 * t_in)), 22050).samples
    t_out = np.arange(len(out)) / 22050
    inner = slice(500, -500)
    np.testing.assert_allclose(out[inner], np.sin(2 * np.pi * 1000 * t_out)[inner], atol=2e-3)


def test_resample_suppresses_alias():
    t = np.arange(16000) / 16000
    down = resample(_clip(np.sin(2 * np.pi * 6000 * t)), 8000).samples
    assert rms(_clip(down[200:-200])) < 0.01


def test_resample_rejects_bad_rate():
    with pytest.raises(ValueError):
        resample(_clip([0.0]), 0)


# ---------------------------------------------------------------- levels

def test_rms_examples():
    assert rms(_clip(np.full(100, 0.5))) == pytest.approx(0.5, abs=1e-15)
    assert rms(_clip(np.zeros(10))) == 0.0
    t = np.arange(16000) / 16000
    assert abs(rms(_clip(np.sin(2 * np.pi * 50 * t))) - 1 / math.sqrt(2)) < 1e-6
    with pytest.raises(ValueError):
        rms(_clip([]))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 500), st.integers(0, 2 ** 32 - 1), st.just(0.0) | st.floats(1e-100, 1e100))
def test_rms_homogeneous(n, seed, alpha):
    c = _clip(np.random.default_rng(seed).uniform(-1, 1, n))
    assert math.isclose(rms(_clip(alpha * c.samples)), alpha * rms(c), rel_tol=1e-12)


def test_asl_examples():
    assert active_speech_level(_clip(np.full(16000, 0.5))) == pytest.approx(0.5, abs=1e-15)
    half = np.concatenate([np.full(8000, 0.5), np.zeros(8000)])
    assert active_speech_level(_clip(half)) == pytest.approx(0.5, abs=1e-15)
    assert active_speech_level(_clip(half)) > rms(_clip(half))
    with pytest.raises(ValueError):
        active_speech_level(_clip([]))


def test_asl_matches_loop_oracle():
    rng = np.random.default_rng(3)
    x = rng.standard_normal(16000 + 123) * np.repeat(rng.uniform(0, 1, 66) ** 4, 250)[:16123]
    frames = [x[i:i + 400] for i in range(0, len(x), 400)]
    energy = [float(np.mean(f ** 2)) for f in frames]
    keep = [f for f, e in zip(frames, energy) if e >= max(energy) * 1e-4]
    expected = math.sqrt(math.fsum(float(np.sum(f ** 2)) for f in keep) / sum(len(f) for f in keep))
    assert active_speech_level(_clip(x)) == pytest.approx(expected, rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 4000), st.integers(1, 20), st.integers(0, 2 ** 32 - 1), st.floats(0.0, 4.0))
def test_asl_at_least_rms_with_quiet_frame(n, n_quiet, seed, power):
    rng = np.random.default_rng(seed)
    voiced = rng.uniform(-1, 1, n) * rng.uniform(0, 1, n) ** power
    x = np.concatenate([voiced, np.zeros(400 * n_quiet)])
    assert active_speech_level(_clip(x)) >= rms(_clip(x)) * (1 - 1e-12)


def test_asl_equals_rms_when_all_active():
    x = np.random.default_rng(5).uniform(0.5, 1.0, 4000)
    assert active_speech_level(_clip(x)) == pytest.approx(rms(_clip(x)), rel=1e-12)


# ---------------------------------------------------------------- log-mel

def test_log_mel_silence():
    m = log_mel(_clip(np.zeros(16000))).frames
    assert np.all(m == np.log(1e-6))


def test_log_mel_frame_count():
    assert log_mel(_clip(np.zeros(16000))).frames.shape == (98, 64)
    assert frame_count(16000, 400, 160) == 98
    with pytest.raises(ValueError):
        log_mel(_clip(np.zeros(399)))


def test_log_mel_tone_at_band_center():
    centers = mel_band_centers(64, 16000)
    t = np.arange(16000) / 16000
    for band in (10, 30, 50):
        m = log_mel(_clip(0.5 * np.sin(2 * np.pi * centers[band] * t))).frames
        assert int(np.argmax(m.mean(axis=0))) == band


def test_log_mel_matches_direct_oracle():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(1600) * 0.1
    got = log_mel(_clip(x)).frames
    # oracle: explicit periodic Hann, explicit DFT, explicit HTK triangles
    n = np.arange(400)
    win = 0.5 * (1 - np.cos(2 * np.pi * n / 400))
    mel = lambda f: 2595 * math.log10(1 + f / 700)
    imel = lambda m: 700 * (10 ** (m / 2595) - 1)
    edges = [imel(mel(8000) * i / 65) for i in range(66)]
    freqs = np.arange(257) * 16000 / 512
    k = np.arange(512)
    for t in range(frame_count(1600, 400, 160)):
        frame = np.zeros(512)
        frame[:400] = x[160 * t:160 * t + 400] * win
        spec = np.abs(np.exp(-2j * np.pi * np.outer(np.arange(257), k) / 512) @ frame)
        for b in (0, 17, 63):
            lo, c, hi = edges[b], edges[b + 1], edges[b + 2]
            tri = np.clip(np.minimum((freqs - lo) / (c - lo), (hi - freqs) / (hi - c)), 0, None)
            assert got[t, b] == pytest.approx(math.log(float(spec @ tri) + 1e-6), abs=1e-9)


def test_filterbank_shape_and_peak():
    fb = mel_filterbank(64, 512, 16000)
    assert fb.shape == (257, 64)
    assert np.all(fb >= 0) and np.all(fb.max(axis=0) <= 1.0)


def test_hann_periodic():
    w = hann_window(8)
    np.testing.assert_allclose(w, 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(8) / 8))


def test_log_mel_deterministic():
    x = np.random.default_rng(9).standard_normal(5000)
    a = log_mel(_clip(x)).frames
    b = log_mel(_clip(x.copy())).frames
    assert a.tobytes() == b.tobytes()


# ---------------------------------------------------------------- cropping

def test_random_crop_examples():
    c = _clip(np.arange(32000, dtype=float))
    assert len(random_crop(c, 1.0, np.random.default_rng(0))) == 16000
    exact = _clip(np.arange(16000, dtype=float))
    assert np.array_equal(random_crop(exact, 1.0, np.random.default_rng(0)).samples, exact.samples)
    a = random_crop(c, 1.0, np.random.default_rng(42)).samples
    b = random_crop(c, 1.0, np.random.default_rng(42)).samples
    assert np.array_equal(a, b)


def test_random_crop_contiguous_and_uniform():
    c = _clip(np.arange(16010, dtype=float))
    rng = np.random.default_rng(0)
    starts = []
    for _ in range(2200):
        s = random_crop(c, 1.0, rng).samples
        assert np.array_equal(np.diff(s), np.ones(15999))
        starts.append(int(s[0]))
    counts = np.bincount(starts, minlength=11)
    assert len(counts) == 11 and counts.min() > 120


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 20000), st.integers(0, 2 ** 32 - 1))
def test_random_crop_pads_short(n, seed):
    x = np.random.default_rng(seed).standard_normal(n)
    out = random_crop(_clip(x), 1.25, np.random.default_rng(seed)).samples
    assert len(out) == 20000
    assert np.array_equal(out[:n], x) and not out[n:].any()


def test_center_crop():
    c = _clip(np.arange(16010, dtype=float))
    assert center_crop(c, 1.0).samples[0] == 5
    assert len(center_crop(_clip(np.ones(10)), 1.0)) == 16000


def test_peak_normalize_only_when_needed():
    x = np.array([0.3, -0.9])
    out, g = peak_normalize(x)
    assert g == 1.0 and out is x
    out, g = peak_normalize(np.array([2.0, -1.0]))
    assert g == pytest.approx(0.495) and np.max(np.abs(out)) == pytest.approx(0.99)
