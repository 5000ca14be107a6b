"""numba and numpy kernels must agree; integer kernels bit for bit."""
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from compatmine import _accel

needs_numba = pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba not installed")


def _sorted_itemsets(rng, n_items, width, count):
    rows = {tuple(sorted(rng.choice(n_items, size=width, replace=False).tolist())) for _ in range(count)}
    return np.array(sorted(rows), dtype=np.int32).reshape(-1, width)


@needs_numba
@given(st.integers(0, 10_000))
def test_integer_kernels_agree(seed):
    rng = np.random.default_rng(seed)
    n_items, m = int(rng.integers(3, 12)), int(rng.integers(1, 200))
    bits = _accel.pack_bits(rng.random((n_items, m)) < 0.4)
    width = int(rng.integers(1, min(4, n_items) + 1))
    prev = _sorted_itemsets(rng, n_items, width, int(rng.integers(1, 30)))
    assert np.array_equal(_accel.support_counts_numba(bits, prev), _accel.support_counts_numpy(bits, prev))
    assert np.array_equal(_accel.join_level_numba(prev), _accel.join_level_numpy(prev))
    vals = rng.integers(0, 4, size=(int(rng.integers(1, 20)), n_items)).astype(float)
    k = int(rng.integers(1, n_items + 1))
    assert np.array_equal(_accel.topk_rows_numba(vals, k), _accel.topk_rows_numpy(vals, k))
    a = np.unique(rng.integers(0, 50, size=20))
    b = np.unique(rng.integers(0, 50, size=20))
    assert np.array_equal(_accel.intersect_sorted_numba(a, b), _accel.intersect_sorted_numpy(a, b))


@needs_numba
def test_max_responses_agree(rng):
    feats, w, b = rng.normal(size=(30, 16)), rng.normal(size=(40, 16)), rng.normal(size=40)
    best_nb, arg_nb = _accel.max_responses_numba(feats, w, b)
    best_np, arg_np = _accel.max_responses_numpy(feats, w, b)
    np.testing.assert_allclose(best_nb, best_np, rtol=1e-12)
    assert np.array_equal(arg_nb, arg_np)


def test_join_level_prunes():
    prev = np.array([[0, 1], [0, 2], [1, 2], [1, 3]], dtype=np.int32)
    # {1,2,3} needs {2,3}, which is missing
    assert _accel.join_level(prev).tolist() == [[0, 1, 2]]


def test_pack_bits_layout():
    rows = np.zeros((1, 70), dtype=bool)
    rows[0, [0, 65]] = True
    packed = _accel.pack_bits(rows)
    assert packed.shape == (1, 2) and packed[0, 0] == 1 and packed[0, 1] == 2


def test_env_flag_selects_numpy():
    code = "from compatmine import _accel; print(_accel.BACKEND)"
    env = dict(os.environ, COMPATMINE_NO_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
