"""Catalog, class set and labeled pair loading."""
from __future__ import annotations

import logging
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

log = logging.getLogger(__name__)


class CorpusError(ValueError):
    """Raised for malformed or inconsistent corpus files."""


@dataclass(frozen=True)
class CatalogItem:
    item_id: str
    class_label: str
    feature_source: str


@dataclass(frozen=True)
class CompatPair:
    item_a: str
    item_b: str
    label: int


@dataclass(frozen=True)
class DatasetSplit:
    train_pairs: tuple[CompatPair, ...]
    test_pairs: tuple[CompatPair, ...]
    seed: int


def load_classes(path: str | Path) -> tuple[str, ...]:
    """Read the declared class set, one name per line (blank lines and ``#`` ignored)."""
    names: list[str] = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line in names:
            raise CorpusError(f"{path}:{lineno}: duplicate class {line!r}")
        names.append(line)
    return tuple(names)


def write_classes(path: str | Path, classes: Iterable[str]) -> None:
    Path(path).write_text("".join(f"{c}\n" for c in classes))


def load_catalog(path: str | Path, classes: Sequence[str] | None = None) -> list[CatalogItem]:
    """Parse a tab-separated catalog file.

    Each non-empty line is ``item_id<TAB>class_label<TAB>feature_file_path``.
    When ``classes`` is given, labels outside it are rejected.
    """
    items: list[CatalogItem] = []
    seen: set[str] = set()
    allowed = set(classes) if classes is not None else None
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        if not raw.strip():
            continue
        fields = raw.split("\t")
        if len(fields) != 3 or not all(f.strip() for f in fields):
            raise CorpusError(f"{path}:{lineno}: expected 3 tab-separated fields, got {raw!r}")
        item_id, label, source = (f.strip() for f in fields)
        if item_id in seen:
            raise CorpusError(f"{path}:{lineno}: duplicate item id {item_id!r}")
        if allowed is not None and label not in allowed:
            raise CorpusError(f"{path}:{lineno}: unknown class {label!r} for item {item_id!r}")
        seen.add(item_id)
        items.append(CatalogItem(item_id, label, source))
    return items


def write_catalog(path: str | Path, items: Iterable[CatalogItem]) -> None:
    Path(path).write_text(
        "".join(f"{it.item_id}\t{it.class_label}\t{it.feature_source}\n" for it in items)
    )


def load_pairs(path: str | Path, catalog: Sequence[CatalogItem]) -> list[CompatPair]:
    """Parse ``item_a,item_b,label`` lines and resolve ids against ``catalog``.

    Exact repeats of a pair (in either order) with the same label are kept once;
    conflicting labels for the same unordered pair are an error.
    """
    known = {it.item_id for it in catalog}
    pairs: list[CompatPair] = []
    labels: dict[frozenset, int] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = [f.strip() for f in line.split(",")]
        if len(fields) != 3:
            raise CorpusError(f"{path}:{lineno}: expected 'item_a,item_b,label', got {raw!r}")
        a, b, lab = fields
        if lab not in ("0", "1"):
            raise CorpusError(f"{path}:{lineno}: label must be 0 or 1, got {lab!r}")
        if a == b:
            raise CorpusError(f"{path}:{lineno}: self-pair {a!r}")
        for ident in (a, b):
            if ident not in known:
                raise CorpusError(f"{path}:{lineno}: unresolved item id {ident!r}")
        key = frozenset((a, b))
        if key in labels:
            if labels[key] != int(lab):
                raise CorpusError(f"{path}:{lineno}: conflicting labels for pair ({a}, {b})")
            log.debug("%s:%d: dropping repeated pair (%s, %s)", path, lineno, a, b)
            continue
        labels[key] = int(lab)
        pairs.append(CompatPair(a, b, int(lab)))
    return pairs


def write_pairs(path: str | Path, pairs: Iterable[CompatPair]) -> None:
    Path(path).write_text("".join(f"{p.item_a},{p.item_b},{p.label}\n" for p in pairs))


def split_dataset(pairs: Sequence[CompatPair], test_fraction: float, seed: int) -> DatasetSplit:
    if not pairs:
        raise CorpusError("cannot split an empty pair list")
    if not 0.0 < test_fraction < 1.0:
        raise CorpusError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    n_test = round(test_fraction * len(pairs))
    order = list(range(len(pairs)))
    random.Random(seed).shuffle(order)
    test_idx = sorted(order[:n_test])
    train_idx = sorted(order[n_test:])
    return DatasetSplit(
        train_pairs=tuple(pairs[i] for i in train_idx),
        test_pairs=tuple(pairs[i] for i in test_idx),
        seed=seed,
    )


def class_index(catalog: Iterable[CatalogItem]) -> dict[str, str]:
    return {it.item_id: it.class_label for it in catalog}
