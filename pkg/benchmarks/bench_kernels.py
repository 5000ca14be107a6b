#!/usr/bin/env python3
"""numba vs numpy timings for the hot kernels, plus an end-to-end mining run.

    python3 benchmarks/bench_kernels.py [--repeat 3]

Each kernel is run once to warm up the JIT before timing; outputs are
compared so a speedup never hides a disagreement.
"""
import argparse
import time

import numpy as np

from compatmine import _accel
from compatmine.miner import MiningConfig, TransactionDb, build_base_matrix, mine_frequent


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    if a.dtype.kind == "f":
        return np.allclose(a, b, rtol=1e-12)
    return np.array_equal(a, b)


def cases(rng):
    n_items, m = 64, 7500
    bits = _accel.pack_bits(rng.random((n_items, m)) < 0.3)
    pairs = np.array([(i, j) for i in range(n_items) for j in range(i + 1, n_items)], dtype=np.int32)
    triples = _accel.join_level_numpy(pairs[:600])
    values = rng.random((7500, 64))
    a = np.unique(rng.integers(0, 200_000, size=50_000))
    b = np.unique(rng.integers(0, 200_000, size=50_000))
    feats, w, bias = rng.normal(size=(40, 256)), rng.normal(size=(4000, 256)), rng.normal(size=4000)
    return [
        ("support_counts", lambda k: k(bits, triples)),
        ("join_level", lambda k: k(pairs)),
        ("topk_rows", lambda k: k(values, 20)),
        ("intersect_sorted", lambda k: k(a, b)),
        ("max_responses", lambda k: k(feats, w, bias)),
    ]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is not available; nothing to compare")
    rng = np.random.default_rng(0)
    print(f"{'kernel':>18}  {'numpy (s)':>10}  {'numba (s)':>10}  {'speedup':>8}  {'agree':>5}")
    print("-" * 60)
    for name, call in cases(rng):
        np_fn = getattr(_accel, name + "_numpy")
        nb_fn = getattr(_accel, name + "_numba")
        call(nb_fn)  # JIT warmup
        t_np, out_np = best_of(lambda: call(np_fn), args.repeat)
        t_nb, out_nb = best_of(lambda: call(nb_fn), args.repeat)
        ok = same(out_np, out_nb)
        print(f"{name:>18}  {t_np:>10.4f}  {t_nb:>10.4f}  {t_np / t_nb:>7.1f}x  {'ok' if ok else 'FAIL':>5}")

    # whole mining step; swaps the module-level kernels the miner calls
    acts = rng.random((7500, 64))
    acts[:, :6] += rng.random((7500, 1)) > 0.5
    db = build_base_matrix(acts, 20)
    cfg = MiningConfig(min_support=0.01, min_len=3, max_len=4)
    results = {}
    for backend in ("numpy", "numba"):
        for name in ("support_counts", "join_level"):
            setattr(_accel, name, getattr(_accel, f"{name}_{backend}"))
        fresh = TransactionDb([t.items for t in db.transactions], db.n_items)
        mine_frequent(fresh, cfg)
        results[backend] = best_of(lambda: mine_frequent(fresh, cfg), args.repeat)
    t_np, r_np = results["numpy"]
    t_nb, r_nb = results["numba"]
    print(f"{'mine_frequent':>18}  {t_np:>10.4f}  {t_nb:>10.4f}  {t_np / t_nb:>7.1f}x  "
          f"{'ok' if r_np == r_nb else 'FAIL':>5}  ({len(r_nb)} itemsets)")


if __name__ == "__main__":
    main()
