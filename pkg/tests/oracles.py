"""Independent reference implementations used only by the tests.

Nothing here imports the package's mining, LDA or AUC code; each oracle is
the most literal reading of its definition.
"""
from __future__ import annotations

from fractions import Fraction
from itertools import combinations

import numpy as np


def count(transactions, items) -> int:
    want = set(items)
    return sum(1 for t in transactions if want <= set(t))


def frequent(transactions, n_items, min_support, min_len, max_len):
    """[(items, count)] of every itemset meeting the bounds, canonical order."""
    m = len(transactions)
    out = []
    for size in range(min_len, max_len + 1):
        for combo in combinations(range(n_items), size):
            c = count(transactions, combo)
            if c and Fraction(c, m) >= min_support:
                out.append((combo, c))
    out.sort(key=lambda t: (-t[1], t[0]))
    return out


def rules(transactions, n_items, consequent, min_support, min_confidence, min_len, max_len, boundary=None):
    """[(antecedent, antecedent_count, joint_count)] for ``X => consequent``."""
    m = len(transactions)
    cons = tuple(sorted(consequent))
    free = [i for i in range(n_items) if i not in cons]
    out = []
    for size in range(min_len, max_len + 1):
        for combo in combinations(free, size):
            if boundary is not None and not (any(i < boundary for i in combo) and any(i >= boundary for i in combo)):
                continue
            joint = count(transactions, combo + cons)
            if not joint or Fraction(joint, m) < min_support:
                continue
            ant = count(transactions, combo)
            if Fraction(joint, ant) >= min_confidence:
                out.append((combo, ant, joint))
    out.sort(key=lambda t: (-t[2], t[0]))
    return out


def lda_weights(positives, background_rows, lam):
    """Dense ``numpy.linalg.solve`` of ``(Sigma + lam I) w = mu_pos - mu0``."""
    x = np.asarray(background_rows, dtype=np.float64)
    mu0 = x.mean(axis=0)
    sigma = np.cov(x, rowvar=False, ddof=1).reshape(x.shape[1], x.shape[1])
    mu = np.asarray(positives, dtype=np.float64).mean(axis=0)
    a = sigma + lam * np.eye(len(mu0))
    return np.linalg.solve(a, mu - mu0), a, mu - mu0


def pair_count_auc(scores, labels) -> Fraction:
    """Count every (positive, negative) pair; ties score one half."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = Fraction(0)
    for p in pos:
        for n in neg:
            if p > n:
                total += 1
            elif p == n:
                total += Fraction(1, 2)
    return total / (len(pos) * len(neg))


def random_db(rng: np.random.Generator, max_items=10, max_tx=50):
    n_items = int(rng.integers(1, max_items + 1))
    m = int(rng.integers(1, max_tx + 1))
    density = rng.uniform(0.2, 0.8)
    tx = [[i for i in range(n_items) if rng.random() < density] for _ in range(m)]
    return tx, n_items
