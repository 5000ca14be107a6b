"""Transaction databases, frequent itemsets and association rules.

Support and confidence are kept as exact integer counts so every reported
statistic can be compared to a brute-force count without tolerance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import _accel


class MiningError(ValueError):
    pass


def as_fraction(value) -> Fraction:
    """Exact rational for a threshold; floats go through their decimal repr (0.0005 -> 1/2000)."""
    if isinstance(value, Rational):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(repr(value))
    return Fraction(value)


@dataclass(frozen=True)
class Transaction:
    tid: int
    items: tuple[int, ...]


@dataclass(frozen=True)
class Itemset:
    items: tuple[int, ...]
    count: int
    total: int

    @property
    def support(self) -> Fraction:
        return Fraction(self.count, self.total)

    def __len__(self):
        return len(self.items)


@dataclass(frozen=True)
class Rule:
    antecedent: Itemset
    consequent: Itemset
    joint_count: int

    @property
    def total(self) -> int:
        return self.antecedent.total

    @property
    def support(self) -> Fraction:
        return Fraction(self.joint_count, self.total)

    @property
    def confidence(self) -> Fraction:
        return Fraction(self.joint_count, self.antecedent.count)


@dataclass(frozen=True)
class MiningConfig:
    min_support: Fraction | float = Fraction(1, 100)
    min_confidence: Fraction | float = Fraction(3, 4)
    min_len: int = 3
    max_len: int = 6
    top_k_binarize: int = 20
    consequent_items: tuple[int, ...] | None = None
    cross_group_boundary: int | None = None

    def __post_init__(self):
        if not 1 <= self.min_len <= self.max_len:
            raise MiningError(f"need 1 <= min_len <= max_len, got {self.min_len}, {self.max_len}")
        sup = as_fraction(self.min_support)
        if not 0 < sup <= 1:
            raise MiningError(f"min_support must lie in (0, 1], got {self.min_support}")
        conf = as_fraction(self.min_confidence)
        if not 0 <= conf <= 1:
            raise MiningError(f"min_confidence must lie in [0, 1], got {self.min_confidence}")

    def min_count(self, m: int) -> int:
        """Smallest covering count whose support reaches ``min_support``."""
        return max(1, math.ceil(as_fraction(self.min_support) * m))


class TransactionDb:
    """Immutable list of transactions over items ``0..n_items-1``."""

    def __init__(self, transactions: Iterable[Iterable[int]], n_items: int):
        rows = []
        for tid, items in enumerate(transactions):
            its = tuple(sorted(set(int(i) for i in items)))
            if its and (its[0] < 0 or its[-1] >= n_items):
                raise MiningError(f"transaction {tid} has item outside [0, {n_items})")
            rows.append(Transaction(tid, its))
        self.transactions: tuple[Transaction, ...] = tuple(rows)
        self.n_items = int(n_items)
        self._bits = None

    @classmethod
    def from_item_matrix(cls, items: np.ndarray, n_items: int) -> "TransactionDb":
        """Build from an ``(m, k)`` array of per-transaction item ids."""
        return cls((row for row in np.asarray(items).tolist()), n_items)

    @property
    def m(self) -> int:
        return len(self.transactions)

    def __len__(self):
        return len(self.transactions)

    @property
    def bits(self) -> np.ndarray:
        """Vertical bitsets: row ``i`` has bit ``t`` set iff transaction ``t`` contains item ``i``."""
        if self._bits is None:
            dense = np.zeros((self.n_items, max(self.m, 1)), dtype=bool)
            for t in self.transactions:
                if t.items:
                    dense[list(t.items), t.tid] = True
            self._bits = _accel.pack_bits(dense)
        return self._bits

    def __eq__(self, other):
        if not isinstance(other, TransactionDb):
            return NotImplemented
        return self.n_items == other.n_items and self.transactions == other.transactions

    def __repr__(self):
        return f"TransactionDb(m={self.m}, n_items={self.n_items})"


def binarize_topk(vector, k: int) -> tuple[int, ...]:
    """Indices of the ``k`` largest entries, ties toward the lower index, ascending."""
    vec = np.asarray(vector, dtype=np.float64)
    if k <= 0 or k > vec.shape[0]:
        raise MiningError(f"k={k} outside [1, {vec.shape[0]}]")
    if not np.all(np.isfinite(vec)):
        raise MiningError("cannot binarize non-finite values")
    return tuple(int(i) for i in _accel.topk_rows(vec[None, :], k)[0])


def binarize_rows(matrix: np.ndarray, k: int) -> np.ndarray:
    mat = np.asarray(matrix, dtype=np.float64)
    if k <= 0 or k > mat.shape[1]:
        raise MiningError(f"k={k} outside [1, {mat.shape[1]}]")
    if not np.all(np.isfinite(mat)):
        raise MiningError("cannot binarize non-finite values")
    return _accel.topk_rows(mat, k)


def build_base_matrix(activations: np.ndarray, k: int = 20) -> TransactionDb:
    """One transaction per region row, items = top-k activation indices."""
    acts = np.asarray(activations, dtype=np.float64)
    if acts.ndim != 2 or acts.shape[0] == 0:
        raise MiningError("need a non-empty (regions, d) activation matrix")
    return TransactionDb.from_item_matrix(binarize_rows(acts, k), acts.shape[1])


def _count(db: TransactionDb, items: Iterable[int]) -> int:
    want = set(items)
    return sum(1 for t in db.transactions if want.issubset(t.items))


def support(db: TransactionDb, itemset) -> Fraction:
    items = tuple(itemset.items if isinstance(itemset, Itemset) else itemset)
    if not items:
        raise MiningError("support of the empty itemset is not defined here")
    if any(i < 0 or i >= db.n_items for i in items):
        raise MiningError("item id out of range")
    if db.m == 0:
        raise MiningError("empty database")
    return Fraction(_count(db, items), db.m)


def confidence(db: TransactionDb, antecedent, consequent) -> Fraction:
    x = set(antecedent.items if isinstance(antecedent, Itemset) else antecedent)
    y = set(consequent.items if isinstance(consequent, Itemset) else consequent)
    if not x or not y:
        raise MiningError("antecedent and consequent must be non-empty")
    if x & y:
        raise MiningError("antecedent and consequent must be disjoint")
    sx = support(db, x)
    if sx == 0:
        raise MiningError(f"confidence undefined: antecedent {sorted(x)} never occurs")
    return support(db, x | y) / sx


def _levels(bits: np.ndarray, candidates: np.ndarray, min_count: int, max_len: int):
    """Level-wise Apriori over vertical bitsets; yields ``(itemsets, counts)`` per length."""
    level = candidates.reshape(-1, 1).astype(np.int32)
    length = 1
    while len(level) and length <= max_len:
        counts = _accel.support_counts(bits, level)
        keep = counts >= min_count
        level, counts = level[keep], counts[keep]
        if not len(level):
            break
        yield level, counts
        if length == max_len:
            break
        level = _accel.join_level(level)
        length += 1


def _canonical(itemsets: np.ndarray, counts: np.ndarray, width: int) -> np.ndarray:
    """Order indices by descending count then lexicographic items (-1 padded)."""
    keys = [itemsets[:, j] for j in range(width - 1, -1, -1)]
    return np.lexsort(keys + [-counts])


def _pad(levels, width):
    rows = []
    for arr in levels:
        pad = np.full((arr.shape[0], width), -1, dtype=np.int64)
        pad[:, :arr.shape[1]] = arr
        rows.append(pad)
    return np.concatenate(rows, axis=0) if rows else np.empty((0, width), dtype=np.int64)


def mine_frequent(db: TransactionDb, config: MiningConfig) -> list[Itemset]:
    """All itemsets with ``min_len <= |X| <= max_len`` and support >= ``min_support``."""
    if db.m == 0:
        raise MiningError("cannot mine an empty database")
    min_count = config.min_count(db.m)
    sets, counts = [], []
    for level, cnt in _levels(db.bits, np.arange(db.n_items), min_count, config.max_len):
        if level.shape[1] >= config.min_len:
            sets.append(level)
            counts.append(cnt)
    return _to_itemsets(sets, counts, config.max_len, db.m)


def _to_itemsets(sets, counts, width, m) -> list[Itemset]:
    if not sets:
        return []
    flat = _pad(sets, width)
    cnt = np.concatenate(counts)
    order = _canonical(flat, cnt, width)
    out = []
    for i in order.tolist():
        row = flat[i]
        out.append(Itemset(tuple(int(v) for v in row[row >= 0]), int(cnt[i]), m))
    return out


def mine_rules(db: TransactionDb, config: MiningConfig) -> list[Rule]:
    """All rules ``X => Y`` for the fixed consequent ``Y = config.consequent_items``.

    ``X`` obeys the length bounds, ``supp(X u Y) >= min_support`` and
    ``conf >= min_confidence``.  With ``cross_group_boundary = b`` the
    antecedent must contain an item below ``b`` and an item at or above it.
    """
    if db.m == 0:
        raise MiningError("cannot mine an empty database")
    if not config.consequent_items:
        raise MiningError("mine_rules needs consequent_items")
    cons = tuple(sorted(set(config.consequent_items)))
    if cons[0] < 0 or cons[-1] >= db.n_items:
        raise MiningError(f"consequent item out of range [0, {db.n_items})")
    bits = db.bits
    ybits = bits[cons[0]].copy()
    for c in cons[1:]:
        ybits &= bits[c]
    y_count = int(np.bitwise_count(ybits).sum())
    if y_count == 0:
        return []
    cond = bits & ybits[None, :]
    universe = np.setdiff1d(np.arange(db.n_items), cons)
    min_count = config.min_count(db.m)
    min_conf = as_fraction(config.min_confidence)
    b = config.cross_group_boundary

    sets, joints, ants = [], [], []
    for level, joint in _levels(cond, universe, min_count, config.max_len):
        if level.shape[1] < config.min_len:
            continue
        if b is not None:
            cross = (level.min(axis=1) < b) & (level.max(axis=1) >= b)
            level, joint = level[cross], joint[cross]
        if not len(level):
            continue
        ant = _accel.support_counts(bits, level)
        # joint/ant >= p/q  <=>  joint*q >= p*ant, in exact integers
        p, q = min_conf.numerator, min_conf.denominator
        if max(p, q) < 2**31:
            ok = joint * q >= ant * p
        else:
            ok = np.array([j * q >= a * p for j, a in zip(joint.tolist(), ant.tolist())], dtype=bool)
        sets.append(level[ok])
        joints.append(joint[ok])
        ants.append(ant[ok])
    if not sets:
        return []
    width = config.max_len
    flat = _pad(sets, width)
    joint = np.concatenate(joints)
    ant = np.concatenate(ants)
    order = _canonical(flat, joint, width)
    consequent = Itemset(cons, y_count, db.m)
    out = []
    for i in order.tolist():
        row = flat[i]
        x = Itemset(tuple(int(v) for v in row[row >= 0]), int(ant[i]), db.m)
        out.append(Rule(x, consequent, int(joint[i])))
    return out


# ----------------------------------------------------------------------
# brute-force reference and debug dump
# ----------------------------------------------------------------------


def brute_force_frequent(db: TransactionDb, config: MiningConfig) -> list[Itemset]:
    """Exhaustive enumeration; exponential in ``n_items``, for small verification cases."""
    from itertools import combinations

    min_sup = as_fraction(config.min_support)
    found = []
    for size in range(config.min_len, min(config.max_len, db.n_items) + 1):
        for combo in combinations(range(db.n_items), size):
            cnt = _count(db, combo)
            if Fraction(cnt, db.m) >= min_sup and cnt > 0:
                found.append(Itemset(combo, cnt, db.m))
    found.sort(key=lambda s: (-s.count, s.items))
    return found


def brute_force_rules(db: TransactionDb, config: MiningConfig) -> list[Rule]:
    from itertools import combinations

    cons = tuple(sorted(set(config.consequent_items)))
    min_sup = as_fraction(config.min_support)
    min_conf = as_fraction(config.min_confidence)
    b = config.cross_group_boundary
    y_count = _count(db, cons)
    free = [i for i in range(db.n_items) if i not in cons]
    found = []
    for size in range(config.min_len, min(config.max_len, len(free)) + 1):
        for combo in combinations(free, size):
            if b is not None and not (min(combo) < b <= max(combo)):
                continue
            joint = _count(db, combo + cons)
            if joint == 0 or Fraction(joint, db.m) < min_sup:
                continue
            ant = _count(db, combo)
            if Fraction(joint, ant) >= min_conf:
                found.append(Rule(Itemset(combo, ant, db.m), Itemset(cons, y_count, db.m), joint))
    found.sort(key=lambda r: (-r.joint_count, r.antecedent.items))
    return found


def dump_db(db: TransactionDb, path: str | Path) -> None:
    """One line per transaction, space-separated item ids; header carries ``n_items``."""
    lines = [f"# n_items={db.n_items}\n"]
    lines += [" ".join(map(str, t.items)) + "\n" for t in db.transactions]
    Path(path).write_text("".join(lines))


def load_db(path: str | Path, n_items: int | None = None) -> TransactionDb:
    rows = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("# n_items="):
            n_items = int(line.split("=", 1)[1]) if n_items is None else n_items
            continue
        rows.append([int(v) for v in line.split()])
    if n_items is None:
        n_items = 1 + max((max(r) for r in rows if r), default=-1)
    return TransactionDb(rows, n_items)
