import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from compatmine.features import (FeatureError, RegionFeature, RegionGeometry, SyntheticSpec, identity_table,
                                 load_features, plan_regions, read_features_binary, read_features_text,
                                 region_count, resized_dims, synth_features, write_features_binary,
                                 write_features_text)


def test_grid_examples():
    assert resized_dims(512, 1024) == (256, 512)
    assert len(plan_regions(512, 1024)) == 65
    assert len(plan_regions(256, 256)) == 25
    g = plan_regions(256, 256)
    assert (g[0].x, g[0].y, g[1].x, g[5].y) == (0, 0, 32, 32)


def test_paper_region_count_is_about_forty():
    # a typical 1:1.4 product photo lands near the reported ~40 windows
    assert 35 <= region_count(256, 358) <= 45


def test_window_too_large():
    with pytest.raises(FeatureError):
        plan_regions(100, 100, window=128, resize=None)


@given(w=st.integers(128, 700), h=st.integers(128, 700), window=st.integers(16, 128), stride=st.integers(1, 64))
def test_grid_formula_and_bounds(w, h, window, stride):
    regs = plan_regions(w, h, window, stride, resize=None)
    assert len(regs) == ((w - window) // stride + 1) * ((h - window) // stride + 1)
    for r in regs:
        assert r.x % stride == 0 and r.y % stride == 0
        assert r.x + r.width <= w and r.y + r.height <= h
    assert [(r.y, r.x) for r in regs] == sorted((r.y, r.x) for r in regs)


def _regions(rng, n, d):
    return [RegionFeature(RegionGeometry(i, 2 * i, 128, 128), rng.normal(size=d)) for i in range(n)]


def test_text_and_binary_load(tmp_path, rng):
    regs = _regions(rng, 2, 4)
    write_features_text(tmp_path / "f.txt", regs)
    write_features_binary(tmp_path / "f.mcf", regs)
    assert load_features(tmp_path / "f.txt", 4) == regs
    back = load_features(tmp_path / "f.mcf", 4)
    assert len(back) == 2
    np.testing.assert_allclose(back[0].activation, regs[0].activation.astype(np.float32))


def test_dimension_mismatch(tmp_path, rng):
    write_features_text(tmp_path / "f.txt", _regions(rng, 1, 3))
    with pytest.raises(FeatureError, match="dim"):
        load_features(tmp_path / "f.txt", 4)
    write_features_binary(tmp_path / "f.mcf", _regions(rng, 1, 3))
    with pytest.raises(FeatureError):
        load_features(tmp_path / "f.mcf", 4)


def test_non_finite_rejected(tmp_path):
    (tmp_path / "f.txt").write_text("dim=2\n0 0 128 128 0.5 NaN\n")
    with pytest.raises(FeatureError, match="finite"):
        read_features_text(tmp_path / "f.txt")
    with pytest.raises(FeatureError):
        write_features_binary(tmp_path / "g.mcf", [RegionFeature(RegionGeometry(0, 0, 1, 1), np.array([np.inf]))])


def test_truncated_binary(tmp_path, rng):
    write_features_binary(tmp_path / "f.mcf", _regions(rng, 3, 4))
    data = (tmp_path / "f.mcf").read_bytes()
    (tmp_path / "t.mcf").write_bytes(data[:-5])
    with pytest.raises(FeatureError, match="truncated"):
        read_features_binary(tmp_path / "t.mcf")
    assert struct.unpack("<II", data[4:12]) == (4, 3)


@given(n=st.integers(1, 6), d=st.integers(1, 9), seed=st.integers(0, 10_000))
def test_round_trip_bytes(tmp_path_factory, n, d, seed):
    tmp = tmp_path_factory.mktemp("rt")
    regs = _regions(np.random.default_rng(seed), n, d)
    for write, read in ((write_features_text, read_features_text), (write_features_binary, read_features_binary)):
        write(tmp / "a", regs, d)
        write(tmp / "b", read(tmp / "a"), d)
        assert (tmp / "a").read_bytes() == (tmp / "b").read_bytes()


def _spec(**kw):
    base = dict(dim=64, classes=("bottoms", "tops"), styles_per_class=3, signature_size=4,
                compat_table=identity_table(("bottoms", "tops"), 3))
    base.update(kw)
    return SyntheticSpec(**base)


def test_noise_free_support():
    spec = _spec(signature_size=3, noise_level=0.0, boost_range=(1.0, 1.0))
    sig = set(spec.signature("tops", 1).tolist())
    for r in synth_features(spec, "tops", 1, 10, seed=3):
        nz = set(np.flatnonzero(r.activation).tolist())
        assert sig < nz and len(nz - sig) == 1


def test_synth_deterministic_and_errors():
    spec = _spec()
    a = synth_features(spec, "tops", 0, 5, seed=9)
    assert a == synth_features(spec, "tops", 0, 5, seed=9)
    with pytest.raises(FeatureError):
        synth_features(spec, "tops", 3, 5, seed=9)
    with pytest.raises(FeatureError):
        synth_features(spec, "hats", 0, 5, seed=9)


def test_top_q_recovers_signature():
    spec = _spec()
    hits = 0
    for trial in range(100):
        style = trial % 3
        v = synth_features(spec, "bottoms", style, 1, seed=trial)[0].activation
        hits += set(np.argsort(-v)[:4].tolist()) == set(spec.signature("bottoms", style).tolist())
    assert hits >= 99


def test_signatures_disjoint_within_class():
    spec = _spec()
    sigs = [set(spec.signature("tops", s).tolist()) for s in range(3)]
    assert not (sigs[0] & sigs[1] or sigs[0] & sigs[2] or sigs[1] & sigs[2])
