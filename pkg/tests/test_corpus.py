import pytest
from hypothesis import given
from hypothesis import strategies as st

from compatmine.corpus import (CatalogItem, CompatPair, CorpusError, load_catalog, load_classes, load_pairs,
                               split_dataset, write_catalog, write_pairs)


@pytest.fixture
def catalog(tmp_path):
    p = tmp_path / "catalog.tsv"
    p.write_text("a\tshirts\tf/a.mcf\nb\tjeans\tf/b.mcf\nc\tshirts\tf/c.mcf\n")
    return load_catalog(p, ["shirts", "jeans"])


def test_catalog_parses_three_items(catalog):
    assert [it.item_id for it in catalog] == ["a", "b", "c"]
    assert catalog[1] == CatalogItem("b", "jeans", "f/b.mcf")


def test_empty_catalog(tmp_path):
    p = tmp_path / "c.tsv"
    p.write_text("")
    assert load_catalog(p) == []


def test_duplicate_id_named(tmp_path):
    p = tmp_path / "c.tsv"
    p.write_text("a\tshirts\tx\na\tjeans\ty\n")
    with pytest.raises(CorpusError, match=r":2: duplicate item id 'a'"):
        load_catalog(p)


def test_unknown_class_and_malformed(tmp_path):
    p = tmp_path / "c.tsv"
    p.write_text("a\thats\tx\n")
    with pytest.raises(CorpusError, match="unknown class"):
        load_catalog(p, ["shirts"])
    p.write_text("a\tshirts\n")
    with pytest.raises(CorpusError, match=":1:"):
        load_catalog(p)


def test_classes_file(tmp_path):
    p = tmp_path / "classes.txt"
    p.write_text("# comment\nshirts\n\njeans\n")
    assert load_classes(p) == ("shirts", "jeans")
    p.write_text("shirts\nshirts\n")
    with pytest.raises(CorpusError):
        load_classes(p)


@pytest.mark.parametrize("line,err", [("a,a,1", "self-pair"), ("a,z,0", "unresolved item id 'z'"),
                                      ("a,b,2", "label must be 0 or 1"), ("a,b", "expected")])
def test_pair_errors(tmp_path, catalog, line, err):
    p = tmp_path / "pairs.csv"
    p.write_text(line + "\n")
    with pytest.raises(CorpusError, match=err):
        load_pairs(p, catalog)


def test_pairs_resolve_and_dedupe(tmp_path, catalog):
    p = tmp_path / "pairs.csv"
    p.write_text("# header\na,b,1\nb,a,1\nc,b,0\n")
    assert load_pairs(p, catalog) == [CompatPair("a", "b", 1), CompatPair("c", "b", 0)]
    p.write_text("a,b,1\nb,a,0\n")
    with pytest.raises(CorpusError, match="conflicting"):
        load_pairs(p, catalog)


def test_round_trip(tmp_path, catalog):
    write_catalog(tmp_path / "c2.tsv", catalog)
    assert load_catalog(tmp_path / "c2.tsv") == catalog
    pairs = [CompatPair("a", "b", 1), CompatPair("c", "b", 0)]
    write_pairs(tmp_path / "p.csv", pairs)
    assert load_pairs(tmp_path / "p.csv", catalog) == pairs


def _pairs(n):
    return [CompatPair(f"x{i}", f"y{i}", i % 2) for i in range(n)]


def test_split_examples():
    s = split_dataset(_pairs(10), 0.2, 7)
    assert (len(s.train_pairs), len(s.test_pairs)) == (8, 2)
    assert s == split_dataset(_pairs(10), 0.2, 7)
    s = split_dataset(_pairs(4), 0.5, 1)
    assert (len(s.train_pairs), len(s.test_pairs)) == (2, 2)
    with pytest.raises(CorpusError):
        split_dataset([], 0.2, 0)


@given(n=st.integers(1, 60), frac=st.floats(0.01, 0.99), seed=st.integers(0, 2**32))
def test_split_is_partition(n, frac, seed):
    pairs = _pairs(n)
    s = split_dataset(pairs, frac, seed)
    assert len(s.test_pairs) == round(frac * n)
    assert set(s.train_pairs) | set(s.test_pairs) == set(pairs)
    assert not set(s.train_pairs) & set(s.test_pairs)
