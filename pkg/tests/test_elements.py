import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from compatmine.elements import (BackgroundStats, ElementError, LdaError, build_inverted_index, dedup_patterns,
                                 fit_background, read_bank, read_patterns, retrieve_members, score,
                                 select_elements, train_bank, train_lda, write_bank, write_patterns)
from compatmine.miner import Itemset, MiningConfig, TransactionDb, binarize_topk, mine_frequent


def its(*items, count=1, total=10):
    return Itemset(tuple(items), count, total)


def test_dedup():
    assert dedup_patterns([its(1, 2, 3), its(1, 2, 3), its(2, 3, 4)]) == [its(1, 2, 3), its(2, 3, 4)]
    distinct = [its(1), its(2)]
    assert dedup_patterns(distinct) == distinct
    assert dedup_patterns([]) == []


def test_select():
    five = [its(i, count=i + 1) for i in range(5)]
    assert len(select_elements(five, 4000)) == 5
    pats = [its(3, 4, count=5), its(0, 1, count=9), its(1, 2, count=5)]
    assert select_elements(pats, 2) == [its(0, 1, count=9), its(1, 2, count=5)]
    assert select_elements(pats, 0) == []


@given(st.permutations(list(range(8))), st.integers(0, 8))
def test_select_permutation_invariant(perm, cap):
    pats = [its(i, i + 1, count=(i * 7) % 4 + 1) for i in range(8)]
    assert select_elements([pats[i] for i in perm], cap) == select_elements(pats, cap)


def test_inverted_index():
    A, B = 0, 1
    idx = build_inverted_index(TransactionDb([{A, B}, {A}, {B}], 3))
    assert idx[A].tolist() == [0, 1] and idx[B].tolist() == [0, 2]
    assert idx[2].tolist() == []
    db = TransactionDb([{1, 5, 9}, {1, 2}, {1, 5, 7}], 10)
    idx = build_inverted_index(db)
    assert retrieve_members(idx, its(1, 5)).tolist() == [0, 2]
    assert retrieve_members(idx, its(1)).tolist() == [0, 1, 2]
    assert retrieve_members(idx, its(1, 3)).tolist() == []
    assert sum(len(idx[i]) for i in range(10)) == sum(len(t.items) for t in db.transactions)


@given(st.lists(st.sets(st.integers(0, 7)), min_size=1, max_size=30), st.sets(st.integers(0, 7), min_size=1))
def test_retrieve_equals_subset_scan(tx, pattern):
    db = TransactionDb(tx, 8)
    got = retrieve_members(build_inverted_index(db), tuple(sorted(pattern))).tolist()
    assert got == [i for i, t in enumerate(tx) if pattern <= t]


def test_background_examples():
    bg = fit_background([[0.0, 0.0], [2.0, 2.0]])
    assert bg.mean.tolist() == [1.0, 1.0]
    assert bg.covariance.tolist() == [[2.0, 2.0], [2.0, 2.0]]
    assert not fit_background([[1.5, -2.0, 3.0]] * 4).covariance.any()
    with pytest.raises(ElementError):
        fit_background([[1.0, 2.0]])


@given(st.integers(0, 10_000))
def test_background_permutation_bitwise(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(int(rng.integers(2, 30)), int(rng.integers(1, 6))))
    a, b = fit_background(x), fit_background(x[rng.permutation(len(x))])
    assert np.array_equal(a.mean, b.mean) and np.array_equal(a.covariance, b.covariance)
    assert np.array_equal(a.covariance, a.covariance.T)


def test_lda_hand_cases():
    clf = train_lda([[1.0, 0.0]], BackgroundStats(np.zeros(2), np.eye(2), 10), reg_scale=0.0, eps_abs=0.0)
    assert clf.weights.tolist() == [1.0, 0.0] and clf.bias == -0.5
    assert score(clf, [1.0, 0.0]) == 0.5
    bg = BackgroundStats(np.array([0.0, 1.0]), np.diag([2.0, 1.0]), 10)
    clf = train_lda([[2.0, 1.0]], bg, reg_scale=0.0, eps_abs=0.0)
    np.testing.assert_allclose(clf.weights, [1.0, 0.0], atol=1e-15)


def test_lda_singular_reported():
    with pytest.raises(LdaError):
        train_lda([[1.0, 0.0]], BackgroundStats(np.zeros(2), np.zeros((2, 2)), 3), reg_scale=0.0, eps_abs=0.0)


def test_lda_random_against_dense_solve():
    rng = np.random.default_rng(6)
    rows = rng.normal(size=(40, 6))
    pos = rng.normal(loc=1.0, size=(5, 6))
    clf = train_lda(pos, fit_background(rows), 0.01)
    sigma = np.cov(rows, rowvar=False)
    w_ref, _, _ = oracles.lda_weights(pos, rows, 0.01 * np.trace(sigma) / 6 + 1e-8)
    np.testing.assert_allclose(clf.weights, w_ref, rtol=1e-9, atol=1e-12)


@given(st.integers(0, 10_000))
def test_lda_positive_mean_scores_higher(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 8))
    rows = rng.normal(size=(int(rng.integers(2, 20)), d))
    pos = rng.normal(size=(3, d)) + rng.normal(size=d)
    bg = fit_background(rows)
    clf = train_lda(pos, bg)
    mu = pos.mean(axis=0)
    if not np.array_equal(mu, bg.mean):
        assert clf(mu) > clf(bg.mean)
    f1, f2 = rng.normal(size=d), rng.normal(size=d)
    assert score(clf, f1 + f2) + clf.bias == pytest.approx(score(clf, f1) + score(clf, f2))
    assert score(clf, np.zeros(d)) == clf.bias


def test_score_dimension_mismatch():
    clf = train_lda([[1.0, 0.0]], BackgroundStats(np.zeros(2), np.eye(2), 10))
    with pytest.raises(ElementError):
        score(clf, [1.0, 0.0, 0.0])


def _class_regions(rng, n_items=6, regions=5, d=12):
    return [(f"i{j}", rng.random((regions, d))) for j in range(n_items)]


def test_bank_members_contain_pattern(rng):
    item_regions = _class_regions(rng)
    acts = np.vstack([m for _, m in item_regions])
    db = TransactionDb([binarize_topk(r, 4) for r in acts], 12)
    pats = mine_frequent(db, MiningConfig(min_support=0.05, min_len=2, max_len=3))[:20]
    bank = train_bank("c", item_regions, pats, k=4)
    lookup = dict(item_regions)
    assert len(bank) == len(pats)
    for el in bank.elements:
        assert el.member_count == len(el.members) > 0
        for item, r in el.members:
            assert set(el.pattern.items) <= set(binarize_topk(lookup[item][r], 4))


def test_bank_and_patterns_round_trip(tmp_path, rng):
    item_regions = _class_regions(rng)
    pats = [its(0, 1, count=3, total=30), its(2, 5, count=2, total=30), its(10, 11, count=1, total=30)]
    bank = train_bank("c", item_regions, pats, k=6, config={"k_base": 6})
    write_bank(tmp_path / "a.bank", bank)
    back = read_bank(tmp_path / "a.bank")
    write_bank(tmp_path / "b.bank", back)
    assert (tmp_path / "a.bank").read_bytes() == (tmp_path / "b.bank").read_bytes()
    assert np.array_equal(back.weights, bank.weights) and np.array_equal(back.biases, bank.biases)
    write_patterns(tmp_path / "p", "c", pats, {"x": 1})
    assert read_patterns(tmp_path / "p") == ("c", pats)
