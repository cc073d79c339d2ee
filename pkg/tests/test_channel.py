"""Data model validation, min-max scaling, and file format round-trips."""

import math

import numpy as np
import pytest

from conftest import make_sample
from terachan import channel
from terachan.channel import (
    FormatError,
    Mpc,
    ChannelSample,
    SampleError,
    Scaler,
    ScalerError,
    denormalize,
    fit_scaler,
    normalize,
    normalize_batch,
    parse_dataset,
    parse_scaler,
    serialize_dataset,
    serialize_scaler,
)


def test_mpc_field_validation():
    with pytest.raises(SampleError):
        Mpc(gain=0.0, phase=0.0, delay=0.0, aoa=0.0)
    with pytest.raises(SampleError):
        Mpc(gain=1e-5, phase=-0.1, delay=0.0, aoa=0.0)
    with pytest.raises(SampleError):
        Mpc(gain=1e-5, phase=0.0, delay=-1e-9, aoa=0.0)
    with pytest.raises(SampleError):
        Mpc(gain=1e-5, phase=0.0, delay=0.0, aoa=180.0)
    with pytest.raises(SampleError):
        Mpc(gain=float("nan"), phase=0.0, delay=0.0, aoa=0.0)


def test_sample_requires_15_sorted_mpcs(rng):
    sample = make_sample(rng)
    with pytest.raises(SampleError, match="15"):
        ChannelSample(mpcs=sample.mpcs[:10], distance=sample.distance)
    shuffled = (sample.mpcs[-1],) + sample.mpcs[1:-1] + (sample.mpcs[0],)
    with pytest.raises(SampleError, match="sorted"):
        ChannelSample(mpcs=shuffled, distance=sample.distance)
    with pytest.raises(SampleError):
        ChannelSample(mpcs=sample.mpcs, distance=-3.0)


def test_scaler_rejects_degenerate_bounds():
    bounds = {f: (0.0, 1.0) for f in channel.FEATURES}
    bounds["delay"] = (5.0, 5.0)
    with pytest.raises(ScalerError, match="delay"):
        Scaler(bounds)


def test_scaler_endpoints_map_to_unit_interval():
    bounds = {f: (-10.0, 30.0) for f in channel.FEATURES}
    s = Scaler(bounds)
    assert s.to01("delay", -10.0) == 0.0
    assert s.to01("delay", 30.0) == 1.0
    assert s.to01("delay", 10.0) == 0.5
    assert s.to01("delay", 99.0) == 1.0      # clips
    assert s.to01("delay", -99.0) == 0.0


def test_fit_scaler_matches_extrema(rng):
    samples = [make_sample(rng) for _ in range(40)]
    scaler = fit_scaler(samples)
    delays = [m.delay for s in samples for m in s.mpcs]
    gains_db = [m.gain_db for s in samples for m in s.mpcs]
    assert scaler.bounds["delay"] == (min(delays), max(delays))
    assert scaler.bounds["gain_db"] == (min(gains_db), max(gains_db))
    assert scaler.bounds["distance"] == (
        min(s.distance for s in samples), max(s.distance for s in samples)
    )


def test_normalized_train_split_spans_unit_interval(rng):
    samples = [make_sample(rng) for _ in range(30)]
    scaler = fit_scaler(samples)
    vecs, conds = normalize_batch(samples, scaler)
    assert vecs.min() >= 0.0 and vecs.max() <= 1.0
    for k in range(4):  # each feature column family attains both endpoints
        cols = vecs[:, k::4]
        assert cols.min() == 0.0 and cols.max() == 1.0
    assert conds.min() == 0.0 and conds.max() == 1.0


def test_normalize_denormalize_roundtrip(rng):
    samples = [make_sample(rng) for _ in range(20)]
    scaler = fit_scaler(samples)
    for s in samples:
        vec, cond = normalize(s, scaler)
        back = denormalize(vec, cond, scaler)
        assert back.distance == pytest.approx(s.distance, rel=1e-9)
        for a, b in zip(s.mpcs, back.mpcs):
            assert b.gain == pytest.approx(a.gain, rel=1e-9)
            assert b.phase == pytest.approx(a.phase, rel=1e-9)
            assert b.delay == pytest.approx(a.delay, rel=1e-9)
            assert b.aoa == pytest.approx(a.aoa, rel=1e-9, abs=1e-12)


def test_denormalize_zeros_hits_feature_minima(rng):
    samples = [make_sample(rng) for _ in range(10)]
    scaler = fit_scaler(samples)
    s = denormalize(np.zeros(60), 0.0, scaler)
    assert s.distance == scaler.bounds["distance"][0]
    for m in s.mpcs:
        assert 20 * math.log10(m.gain) == pytest.approx(scaler.bounds["gain_db"][0], rel=1e-12)
        assert m.delay == scaler.bounds["delay"][0]
        assert m.aoa == scaler.bounds["aoa"][0]


def test_denormalize_clamps_and_sorts(rng):
    samples = [make_sample(rng) for _ in range(10)]
    scaler = fit_scaler(samples)
    vec = rng.uniform(-0.5, 1.5, size=60)   # deliberately out of range
    s = denormalize(vec, 0.3, scaler)
    delays = [m.delay for m in s.mpcs]
    assert delays == sorted(delays)


def test_dataset_roundtrip_exact(rng):
    samples = [make_sample(rng) for _ in range(12)]
    assert parse_dataset(serialize_dataset(samples)) == samples


def test_empty_dataset_roundtrip():
    text = serialize_dataset([])
    assert text.startswith(channel.DATASET_HEADER)
    assert parse_dataset(text) == []


def test_parse_errors_carry_line_numbers(rng):
    text = serialize_dataset([make_sample(rng)])
    truncated = text[: len(text) // 2]
    with pytest.raises(FormatError, match="line 2"):
        parse_dataset(truncated)
    with pytest.raises(FormatError, match="header"):
        parse_dataset("not a dataset\n")
    bad_count = text.splitlines()[0] + "\n" + "3.0;1e-5,0,0,0\n"
    with pytest.raises(FormatError, match="MPC"):
        parse_dataset(bad_count)


def test_scaler_file_roundtrip(rng):
    scaler = fit_scaler([make_sample(rng) for _ in range(8)])
    parsed = parse_scaler(serialize_scaler(scaler))
    assert parsed.bounds == scaler.bounds
    with pytest.raises(FormatError):
        parse_scaler("no header\n")
    with pytest.raises(FormatError, match="missing entry"):
        parse_scaler(channel.SCALER_HEADER + "\ngain_db.min = 1.0\n")
