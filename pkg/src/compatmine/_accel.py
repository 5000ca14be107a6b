"""Hot numeric kernels.

Every kernel exists twice: a numba ``@njit`` version and a pure-numpy
version with identical semantics.  The numba path is used when numba imports
and ``COMPATMINE_NO_NUMBA`` is unset (or ``0``).  Both variants stay importable
as ``<name>_numpy`` / ``<name>_numba`` so tests and the benchmark can compare
them directly.

Integer kernels (support counting, joins, top-k, intersection) agree bit for
bit between the two paths.  ``max_responses`` agrees to rounding only, since
the dot-product summation order differs.
"""
from __future__ import annotations

import os

import numpy as np

_flag = os.environ.get("COMPATMINE_NO_NUMBA", "").strip().lower()
_DISABLED = _flag not in ("", "0", "false", "no")

try:
    if _DISABLED:
        raise ImportError("numba disabled by COMPATMINE_NO_NUMBA")
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - depends on environment
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA

# rows of candidates processed per numpy chunk; bounds peak memory
_NP_CHUNK = 4096


def pack_bits(rows: np.ndarray) -> np.ndarray:
    """Pack a boolean ``(n_items, m)`` matrix into ``(n_items, ceil(m/64))`` uint64 words."""
    rows = np.ascontiguousarray(rows, dtype=bool)
    n, m = rows.shape
    n_words = max(1, (m + 63) // 64)
    padded = np.zeros((n, n_words * 64), dtype=bool)
    padded[:, :m] = rows
    packed = np.packbits(padded, axis=1, bitorder="little")
    return np.ascontiguousarray(packed).view("<u8").astype(np.uint64, copy=False)


# ----------------------------------------------------------------------
# numpy implementations
# ----------------------------------------------------------------------


def support_counts_numpy(bits: np.ndarray, cands: np.ndarray) -> np.ndarray:
    cands = np.asarray(cands, dtype=np.int64)
    out = np.empty(len(cands), dtype=np.int64)
    for start in range(0, len(cands), _NP_CHUNK):
        block = cands[start:start + _NP_CHUNK]
        acc = bits[block[:, 0]].copy()
        for j in range(1, block.shape[1]):
            np.bitwise_and(acc, bits[block[:, j]], out=acc)
        out[start:start + len(block)] = np.bitwise_count(acc).sum(axis=1, dtype=np.int64)
    return out


def join_level_numpy(prev: np.ndarray) -> np.ndarray:
    prev = np.asarray(prev, dtype=np.int32)
    n, width = prev.shape
    k = width + 1
    if n < 2:
        return np.empty((0, k), dtype=np.int32)
    known = {tuple(r) for r in prev.tolist()}
    out = []
    start = 0
    while start < n:
        stop = start + 1
        while stop < n and np.array_equal(prev[stop, :width - 1], prev[start, :width - 1]):
            stop += 1
        if stop - start > 1:
            group = prev[start:stop]
            ii, jj = np.triu_indices(stop - start, k=1)
            block = np.concatenate([group[ii], group[jj, -1:]], axis=1)
            if width >= 2:
                keep = np.ones(len(block), dtype=bool)
                rows = block.tolist()
                for r, row in enumerate(rows):
                    for drop in range(width - 1):
                        if tuple(row[:drop] + row[drop + 1:]) not in known:
                            keep[r] = False
                            break
                block = block[keep]
            out.append(block)
        start = stop
    if not out:
        return np.empty((0, k), dtype=np.int32)
    return np.ascontiguousarray(np.concatenate(out, axis=0), dtype=np.int32)


def topk_rows_numpy(values: np.ndarray, k: int) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(-values, axis=1, kind="stable")[:, :k]
    return np.sort(order, axis=1).astype(np.int32)


def intersect_sorted_numpy(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.intersect1d(a, b, assume_unique=True).astype(np.int64)


def max_responses_numpy(feats: np.ndarray, weights: np.ndarray, bias: np.ndarray):
    n_el = weights.shape[0]
    best = np.full(n_el, -np.inf)
    arg = np.zeros(n_el, dtype=np.int64)
    for r in range(feats.shape[0]):
        s = weights @ feats[r] + bias
        better = s > best
        best[better] = s[better]
        arg[better] = r
    return best, arg


# ----------------------------------------------------------------------
# numba implementations
# ----------------------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True, inline="always")
    def _popcount64(x):
        x = x - ((x >> np.uint64(1)) & np.uint64(0x5555555555555555))
        x = (x & np.uint64(0x3333333333333333)) + ((x >> np.uint64(2)) & np.uint64(0x3333333333333333))
        x = (x + (x >> np.uint64(4))) & np.uint64(0x0F0F0F0F0F0F0F0F)
        return (x * np.uint64(0x0101010101010101)) >> np.uint64(56)

    @njit(cache=True)
    def _support_counts_nb(bits, cands):
        n_cand, width = cands.shape
        n_words = bits.shape[1]
        out = np.empty(n_cand, dtype=np.int64)
        for c in range(n_cand):
            total = 0
            for w in range(n_words):
                acc = bits[cands[c, 0], w]
                for j in range(1, width):
                    acc &= bits[cands[c, j], w]
                    if acc == 0:
                        break
                total += _popcount64(acc)
            out[c] = total
        return out

    @njit(cache=True)
    def _lex_cmp(prev, row, cand, drop, width):
        # compare prev[row] with cand minus position `drop`
        j = 0
        for p in range(width + 1):
            if p == drop:
                continue
            a = prev[row, j]
            b = cand[p]
            if a < b:
                return -1
            if a > b:
                return 1
            j += 1
        return 0

    @njit(cache=True)
    def _contains(prev, cand, drop):
        lo = 0
        hi = prev.shape[0]
        width = prev.shape[1]
        while lo < hi:
            mid = (lo + hi) // 2
            c = _lex_cmp(prev, mid, cand, drop, width)
            if c == 0:
                return True
            if c < 0:
                lo = mid + 1
            else:
                hi = mid
        return False

    @njit(cache=True)
    def _join_pass(prev, out, fill):
        n, width = prev.shape
        cand = np.empty(width + 1, dtype=np.int32)
        count = 0
        i = 0
        while i < n:
            stop = i + 1
            while stop < n:
                same = True
                for p in range(width - 1):
                    if prev[stop, p] != prev[i, p]:
                        same = False
                        break
                if not same:
                    break
                stop += 1
            for a in range(i, stop):
                for b in range(a + 1, stop):
                    for p in range(width):
                        cand[p] = prev[a, p]
                    cand[width] = prev[b, width - 1]
                    ok = True
                    for drop in range(width - 1):
                        if not _contains(prev, cand, drop):
                            ok = False
                            break
                    if ok:
                        if fill:
                            for p in range(width + 1):
                                out[count, p] = cand[p]
                        count += 1
            i = stop
        return count

    @njit(cache=True)
    def _join_level_nb(prev):
        width = prev.shape[1]
        dummy = np.empty((0, width + 1), dtype=np.int32)
        total = _join_pass(prev, dummy, False)
        out = np.empty((total, width + 1), dtype=np.int32)
        _join_pass(prev, out, True)
        return out

    @njit(cache=True)
    def _topk_rows_nb(values, k):
        m = values.shape[0]
        out = np.empty((m, k), dtype=np.int32)
        for r in range(m):
            order = np.argsort(-values[r], kind="mergesort")
            sel = np.sort(order[:k])
            for j in range(k):
                out[r, j] = sel[j]
        return out

    @njit(cache=True)
    def _intersect_sorted_nb(a, b):
        out = np.empty(min(a.shape[0], b.shape[0]), dtype=np.int64)
        i = 0
        j = 0
        n = 0
        while i < a.shape[0] and j < b.shape[0]:
            if a[i] < b[j]:
                i += 1
            elif a[i] > b[j]:
                j += 1
            else:
                out[n] = a[i]
                n += 1
                i += 1
                j += 1
        return out[:n]

    @njit(cache=True)
    def _max_responses_nb(feats, weights, bias):
        n_reg, d = feats.shape
        n_el = weights.shape[0]
        best = np.full(n_el, -np.inf)
        arg = np.zeros(n_el, dtype=np.int64)
        for r in range(n_reg):
            for e in range(n_el):
                s = 0.0
                for j in range(d):
                    s += weights[e, j] * feats[r, j]
                s += bias[e]
                if s > best[e]:
                    best[e] = s
                    arg[e] = r
        return best, arg

    def support_counts_numba(bits, cands):
        return _support_counts_nb(np.ascontiguousarray(bits, dtype=np.uint64),
                                  np.ascontiguousarray(cands, dtype=np.int32))

    def join_level_numba(prev):
        prev = np.ascontiguousarray(prev, dtype=np.int32)
        if prev.shape[0] < 2:
            return np.empty((0, prev.shape[1] + 1), dtype=np.int32)
        return _join_level_nb(prev)

    def topk_rows_numba(values, k):
        return _topk_rows_nb(np.ascontiguousarray(values, dtype=np.float64), int(k))

    def intersect_sorted_numba(a, b):
        return _intersect_sorted_nb(np.ascontiguousarray(a, dtype=np.int64),
                                    np.ascontiguousarray(b, dtype=np.int64))

    def max_responses_numba(feats, weights, bias):
        return _max_responses_nb(np.ascontiguousarray(feats, dtype=np.float64),
                                 np.ascontiguousarray(weights, dtype=np.float64),
                                 np.ascontiguousarray(bias, dtype=np.float64))


def _pick(name):
    if USE_NUMBA:
        return globals()[name + "_numba"]
    return globals()[name + "_numpy"]


support_counts = _pick("support_counts")
join_level = _pick("join_level")
topk_rows = _pick("topk_rows")
intersect_sorted = _pick("intersect_sorted")
max_responses = _pick("max_responses")

BACKEND = "numba" if USE_NUMBA else "numpy"
