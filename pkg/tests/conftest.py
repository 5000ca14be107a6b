import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from compatmine.compat import CompatModel, TopElement
from compatmine.elements import BaseBank, BaseElement, LdaClassifier
from compatmine.features import RegionFeature, RegionGeometry
from compatmine.miner import Itemset, Rule

settings.register_profile("default", deadline=None, max_examples=100,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_bank(rng, cls, n_el, dim):
    elements = []
    for i in range(n_el):
        clf = LdaClassifier(rng.normal(size=dim), float(rng.normal()))
        items = tuple(sorted(rng.choice(dim, size=min(3, dim), replace=False).tolist()))
        elements.append(BaseElement(i, cls, Itemset(items, 1, 1), (), clf, member_count=1))
    return BaseBank(cls, dim, min(3, dim), elements)


def random_model(rng, n_a=None, n_b=None, dim=None, n_top=None):
    """Random banks and top classifiers; enough structure for inference tests."""
    dim = dim or int(rng.integers(2, 9))
    n_a = n_a or int(rng.integers(2, 9))
    n_b = n_b or int(rng.integers(2, 9))
    n_top = n_top or int(rng.integers(1, 6))
    banks = (random_bank(rng, "bottoms", n_a, dim), random_bank(rng, "tops", n_b, dim))
    tops = []
    for i in range(n_top):
        a = int(rng.integers(0, n_a))
        b = n_a + int(rng.integers(0, n_b))
        rule = Rule(Itemset((a, b), 2, 4), Itemset((n_a + n_b,), 2, 4), 2)
        clf = LdaClassifier(rng.normal(size=n_a + n_b), float(rng.normal()))
        tops.append(TopElement(i, ("bottoms", "tops"), rule, clf, 2))
    return CompatModel(("bottoms", "tops"), (n_a, n_b), 1, tops, banks)


def random_regions(rng, n, dim):
    return [RegionFeature(RegionGeometry(32 * i, 0, 128, 128), rng.normal(size=dim)) for i in range(n)]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for key in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[key])
