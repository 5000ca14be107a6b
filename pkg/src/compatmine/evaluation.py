"""ROC/AUC evaluation and the planted-style benchmark corpus."""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .corpus import CatalogItem, CompatPair, DatasetSplit
from .features import RegionFeature, SyntheticSpec, synth_features

# published reference values on the Amazon clothing corpus (mid-level
# elements vs. the image-level siamese baseline); context only
REFERENCE_AUC = {"mid-level elements": 0.655, "image-level baseline": 0.804}


class EvalError(ValueError):
    pass


@dataclass(frozen=True)
class ScoredPair:
    pair: CompatPair
    score: float
    class_pair: tuple[str, str] = ("", "")


@dataclass
class EvalReport:
    auc: float
    positives: int
    negatives: int
    per_pair: dict = field(default_factory=dict)
    skipped: int = 0
    skipped_pairs: dict = field(default_factory=dict)

    def to_text(self) -> str:
        lines = ["# compatibility evaluation"]
        for name, val in REFERENCE_AUC.items():
            lines.append(f"# reference (Amazon, not reproduced here): {name} auc={val}")
        lines.append(f"auc={self.auc!r}")
        lines.append(f"positives={self.positives}")
        lines.append(f"negatives={self.negatives}")
        lines.append(f"skipped={self.skipped}")
        for (ca, cb), (auc, p, n) in sorted(self.per_pair.items()):
            shown = "nan" if auc is None else repr(auc)
            lines.append(f"pair {ca},{cb} auc={shown} positives={p} negatives={n}")
        for (ca, cb), count in sorted(self.skipped_pairs.items()):
            lines.append(f"skipped {ca},{cb} pairs={count}")
        return "\n".join(lines) + "\n"


def _split_scores(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise EvalError("scores and labels differ in length")
    if not np.all(np.isfinite(scores)):
        raise EvalError("scores must be finite")
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    if len(pos) + len(neg) != len(scores):
        raise EvalError("labels must be 0 or 1")
    if not len(pos) or not len(neg):
        raise EvalError("AUC needs at least one positive and one negative")
    return pos, neg


def auc_fraction(scores, labels) -> Fraction:
    """Exact Mann-Whitney AUC: (concordant + ties/2) / (P*N)."""
    pos, neg = _split_scores(scores, labels)
    neg = np.sort(neg)
    below = np.searchsorted(neg, pos, side="left")
    upto = np.searchsorted(neg, pos, side="right")
    twice = int(np.sum(2 * below + (upto - below)))
    return Fraction(twice, 2 * len(pos) * len(neg))


def roc_auc(scored) -> float:
    """AUC from ``ScoredPair`` records, or from a ``(scores, labels)`` tuple."""
    if isinstance(scored, tuple) and len(scored) == 2:
        scores, labels = scored
    else:
        scored = list(scored)
        scores = [s.score for s in scored]
        labels = [s.pair.label for s in scored]
    return float(auc_fraction(scores, labels))


def brute_force_auc(scores, labels) -> float:
    """O(P*N) pair counter used as a reference."""
    pos, neg = _split_scores(scores, labels)
    twice = 0
    for p in pos.tolist():
        for n in neg.tolist():
            twice += 2 if p > n else (1 if p == n else 0)
    return float(Fraction(twice, 2 * len(pos) * len(neg)))


def roc_points(scores, labels) -> list[tuple[float, float, float]]:
    """``(fpr, tpr, threshold)`` for every distinct score, highest threshold first."""
    pos, neg = _split_scores(scores, labels)
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    pts = [(0.0, 0.0, float("inf"))]
    for thr in np.unique(s)[::-1]:
        tp = int(np.sum((s >= thr) & (y == 1)))
        fp = int(np.sum((s >= thr) & (y == 0)))
        pts.append((fp / len(neg), tp / len(pos), float(thr)))
    return pts


def write_roc(path: str | Path, points: Iterable[tuple[float, float, float]]) -> None:
    Path(path).write_text("".join(f"{f!r} {t!r} {thr!r}\n" for f, t, thr in points))


def summarize(scored: Sequence[ScoredPair], skipped: Mapping[tuple[str, str], int] | None = None) -> EvalReport:
    if not scored:
        raise EvalError("no scorable pairs")
    labels = [s.pair.label for s in scored]
    pos = sum(labels)
    neg = len(labels) - pos
    auc = roc_auc(scored)
    per_pair = {}
    groups: dict[tuple[str, str], list[ScoredPair]] = {}
    for s in scored:
        groups.setdefault(s.class_pair, []).append(s)
    for key, group in groups.items():
        p = sum(g.pair.label for g in group)
        n = len(group) - p
        per_pair[key] = (roc_auc(group) if p and n else None, p, n)
    skipped = dict(skipped or {})
    return EvalReport(auc, pos, neg, per_pair, sum(skipped.values()), skipped)


def evaluate(test_pairs: Sequence[CompatPair],
             scorer: Callable[[CompatPair], tuple[float | None, tuple[str, str]]]) -> EvalReport:
    """Score every test pair.

    ``scorer`` returns ``(score, class_pair)``; a ``None`` score marks a pair
    whose class pair has no model, which is counted as skipped.
    """
    scored, skipped = [], {}
    for pair in test_pairs:
        score, cp = scorer(pair)
        if score is None:
            skipped[cp] = skipped.get(cp, 0) + 1
            continue
        scored.append(ScoredPair(pair, float(score), cp))
    return summarize(scored, skipped)


# ----------------------------------------------------------------------
# benchmark generator
# ----------------------------------------------------------------------


@dataclass
class Benchmark:
    catalog: list[CatalogItem]
    features: dict[str, list[RegionFeature]]
    split: DatasetSplit
    styles: dict[str, int]


def generate_benchmark(spec: SyntheticSpec, images_per_class: int, train_pairs: int, test_pairs: int,
                       seed: int, regions_per_image: int = 25) -> Benchmark:
    """Planted corpus: uniform style assignment, labels from ``spec.compat_table``.

    Pairs are drawn across distinct classes; each split holds ``n // 2``
    compatible and ``n - n // 2`` incompatible pairs, no pair repeats.
    """
    if not spec.compat_table:
        raise EvalError("compat_table has no compatible entries")
    if len(spec.classes) < 2:
        raise EvalError("need at least two classes")
    rng = random.Random(seed)
    catalog, features, styles = [], {}, {}
    by_class: dict[str, list[str]] = {}
    for ci, cls in enumerate(spec.classes):
        for i in range(images_per_class):
            item = f"{cls}-{i:05d}"
            style = rng.randrange(spec.styles_per_class)
            catalog.append(CatalogItem(item, cls, f"features/{item}.mcf"))
            styles[item] = style
            by_class.setdefault(cls, []).append(item)
            features[item] = synth_features(spec, cls, style, regions_per_image, seed=seed * 1_000_003 + ci * 100_003 + i)
    class_pairs = [(a, b) for i, a in enumerate(spec.classes) for b in spec.classes[i + 1:]]
    cls_of = {it.item_id: it.class_label for it in catalog}

    def label(a, b):
        return int(spec.compatible((cls_of[a], styles[a]), (cls_of[b], styles[b])))

    used: set[frozenset] = set()

    def draw(n_pos, n_neg):
        out = []
        need = {1: n_pos, 0: n_neg}
        attempts = 0
        while need[0] or need[1]:
            attempts += 1
            if attempts > 200 * (n_pos + n_neg) + 10_000:
                raise EvalError("could not draw enough distinct pairs; enlarge the catalog")
            ca, cb = rng.choice(class_pairs)
            a, b = rng.choice(by_class[ca]), rng.choice(by_class[cb])
            key = frozenset((a, b))
            lab = label(a, b)
            if key in used or not need[lab]:
                continue
            used.add(key)
            need[lab] -= 1
            out.append(CompatPair(a, b, lab))
        return out

    train = draw(train_pairs // 2, train_pairs - train_pairs // 2)
    test = draw(test_pairs // 2, test_pairs - test_pairs // 2)
    return Benchmark(catalog, features, DatasetSplit(tuple(train), tuple(test), seed), styles)
