"""Top-level compatibility elements: pair encoding, rule mining, training and inference."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from . import _accel
from .elements import (BackgroundStats, BaseBank, ElementError, LdaClassifier, LdaSolver,
                       build_inverted_index, fit_background, retrieve_members)
from .features import RegionFeature, stack
from .miner import Itemset, MiningConfig, Rule, TransactionDb, binarize_rows, mine_rules

log = logging.getLogger(__name__)


class CompatError(ValueError):
    pass


class MissingModelError(CompatError):
    """No model exists for the requested class pair."""


def canonical_pair(class_a: str, class_b: str) -> tuple[str, str]:
    return (class_a, class_b) if class_a <= class_b else (class_b, class_a)


@dataclass(frozen=True, eq=False)
class BaseEncoding:
    responses: np.ndarray
    argmax_regions: np.ndarray

    def __len__(self):
        return len(self.responses)


@dataclass(frozen=True, eq=False)
class PairEncoding:
    encoding: np.ndarray
    class_pair: tuple[str, str]
    sizes: tuple[int, int]
    parts: tuple[BaseEncoding, BaseEncoding] | None = None

    def __len__(self):
        return len(self.encoding)


@dataclass(frozen=True, eq=False)
class TopElement:
    element_id: int
    class_pair: tuple[str, str]
    rule: Rule
    classifier: LdaClassifier
    cover_count: int = 0

    @property
    def pattern(self) -> Itemset:
        return self.rule.antecedent


@dataclass(eq=False)
class CompatModel:
    class_pair: tuple[str, str]
    sizes: tuple[int, int]
    k: int
    top_elements: list[TopElement]
    banks: tuple[BaseBank, BaseBank] | None = None
    background: BackgroundStats | None = None
    thresholds: dict = field(default_factory=dict)
    bank_refs: tuple[str, str] = ("", "")
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        self._w = None

    @property
    def weights(self) -> np.ndarray:
        if self._w is None:
            n = sum(self.sizes)
            self._w = (np.vstack([t.classifier.weights for t in self.top_elements])
                       if self.top_elements else np.zeros((0, n)))
            self._b = np.array([t.classifier.bias for t in self.top_elements], dtype=np.float64)
        return self._w

    @property
    def biases(self) -> np.ndarray:
        self.weights
        return self._b


# ----------------------------------------------------------------------
# encoding
# ----------------------------------------------------------------------


def encode_image(regions: Sequence[RegionFeature] | np.ndarray, bank: BaseBank) -> BaseEncoding:
    """Max-pool every bank classifier over the image's regions (first region wins ties)."""
    feats = regions if isinstance(regions, np.ndarray) else stack(regions)
    if feats.shape[0] == 0:
        raise CompatError("cannot encode an image without regions")
    if feats.shape[1] != bank.dim:
        raise CompatError(f"feature dimension {feats.shape[1]} != bank dimension {bank.dim}")
    if len(bank) == 0:
        return BaseEncoding(np.zeros(0), np.zeros(0, dtype=np.int64))
    best, arg = _accel.max_responses(feats, bank.weights, bank.biases)
    return BaseEncoding(best, arg)


def encode_pair(regions_a, regions_b, bank_a: BaseBank, bank_b: BaseBank) -> PairEncoding:
    ea = encode_image(regions_a, bank_a)
    eb = encode_image(regions_b, bank_b)
    enc = np.concatenate([ea.responses, eb.responses])
    return PairEncoding(enc, (bank_a.class_label, bank_b.class_label), (len(ea), len(eb)), (ea, eb))


def pair_vector(enc_a: BaseEncoding, enc_b: BaseEncoding, class_pair, sizes=None) -> PairEncoding:
    sizes = sizes or (len(enc_a), len(enc_b))
    if (len(enc_a), len(enc_b)) != tuple(sizes):
        raise CompatError(f"encoding lengths {(len(enc_a), len(enc_b))} do not match {sizes}")
    return PairEncoding(np.concatenate([enc_a.responses, enc_b.responses]), tuple(class_pair),
                        tuple(sizes), (enc_a, enc_b))


# ----------------------------------------------------------------------
# top-level mining
# ----------------------------------------------------------------------


def label_items(sizes: tuple[int, int]) -> tuple[int, int]:
    """(compatible item, incompatible item) ids appended after both element ranges."""
    n = sizes[0] + sizes[1]
    return n, n + 1


def pair_items(encodings: np.ndarray, labels: np.ndarray, k: int, sizes: tuple[int, int]) -> np.ndarray:
    n_a, n_b = sizes
    if k > min(n_a, n_b):
        raise CompatError(f"k={k} exceeds the smaller element bank ({min(n_a, n_b)})")
    enc = np.asarray(encodings, dtype=np.float64)
    if enc.ndim != 2 or enc.shape[1] != n_a + n_b:
        raise CompatError(f"pair encodings must have {n_a + n_b} columns")
    left = binarize_rows(enc[:, :n_a], k)
    right = binarize_rows(enc[:, n_a:], k) + n_a
    yes, no = label_items(sizes)
    lab = np.where(np.asarray(labels) == 1, yes, no)[:, None]
    return np.concatenate([left, right, lab], axis=1)


def build_pair_matrix(pairs: Sequence[tuple[PairEncoding, int]], k: int, sizes: tuple[int, int]) -> TransactionDb:
    """Per pair: top-k of each side (b side offset by ``N_a``) plus one label item."""
    if not pairs:
        raise CompatError("no pairs to build a transaction matrix from")
    enc = np.vstack([p.encoding for p, _ in pairs])
    labels = np.array([lab for _, lab in pairs])
    return TransactionDb.from_item_matrix(pair_items(enc, labels, k, sizes), sum(sizes) + 2)


def mine_top(db: TransactionDb, sizes: tuple[int, int], min_support=Fraction(1, 2000),
             min_confidence=Fraction(3, 4), min_len: int = 3, max_len: int = 6,
             cap: int = 4000) -> list[Rule]:
    """Cross-class rules ``antecedent => compatible`` ranked by rule support, capped."""
    yes, _ = label_items(sizes)
    config = MiningConfig(min_support=min_support, min_confidence=min_confidence,
                          min_len=min_len, max_len=max_len, consequent_items=(yes,),
                          cross_group_boundary=sizes[0])
    return mine_rules(db, config)[:max(cap, 0)]


def train_top(rules: Sequence[Rule], pairs: Sequence[tuple[PairEncoding, int]], k: int,
              reg_scale: float = 0.01, banks: tuple[BaseBank, BaseBank] | None = None,
              thresholds: dict | None = None, config: dict | None = None) -> CompatModel:
    """One LDA per antecedent, trained on the compatible pairs it covers.

    The background is fit over every pair encoding of the class pair.
    Antecedents that cover no compatible pair are skipped with a warning.
    """
    if not rules:
        raise CompatError("no top-level rules to train")
    if not pairs:
        raise CompatError("no pair encodings")
    class_pair = pairs[0][0].class_pair
    sizes = pairs[0][0].sizes
    db = build_pair_matrix(pairs, k, sizes)
    index = build_inverted_index(db)
    yes, _ = label_items(sizes)
    positives = index[yes]
    enc = np.vstack([p.encoding for p, _ in pairs])
    background = fit_background(enc)
    solver = LdaSolver(background, reg_scale)
    kept, means, covers = [], [], []
    for rule in rules:
        if max(rule.antecedent.items) >= sum(sizes):
            raise CompatError(f"antecedent {rule.antecedent.items} references a label item")
        tids = _accel.intersect_sorted(retrieve_members(index, rule.antecedent), positives)
        if not len(tids):
            log.warning("pair %s: antecedent %s covers no compatible pair, skipped",
                        class_pair, rule.antecedent.items)
            continue
        kept.append(rule)
        covers.append(len(tids))
        means.append(enc[tids].mean(axis=0))
    if not kept:
        raise CompatError("no antecedent covers a compatible pair")
    classifiers = solver.solve_means(np.vstack(means))
    tops = []
    for i, (rule, clf, cov) in enumerate(zip(kept, classifiers, covers)):
        if clf.degenerate:
            log.warning("pair %s: top element %d has a degenerate classifier", class_pair, i)
        tops.append(TopElement(i, class_pair, rule, clf, cov))
    return CompatModel(class_pair, sizes, k, tops, banks, background, dict(thresholds or {}),
                       config=dict(config or {}))


# ----------------------------------------------------------------------
# inference
# ----------------------------------------------------------------------


class PairScore(NamedTuple):
    score: float
    winning_element: int
    pair_encoding: PairEncoding
    swapped: bool = False


def score_encoding(encoding: np.ndarray, model: CompatModel) -> tuple[float, int]:
    """Max top-level response over ``encoding``; lowest element id wins ties."""
    if not model.top_elements:
        raise CompatError("model has no top elements")
    resp = model.weights @ np.asarray(encoding, dtype=np.float64) + model.biases
    win = int(np.argmax(resp))
    return float(resp[win]), win


def top_responses(encoding: np.ndarray, model: CompatModel) -> np.ndarray:
    return model.weights @ np.asarray(encoding, dtype=np.float64) + model.biases


def score_pair(regions_a, regions_b, model: CompatModel, class_a: str | None = None,
               class_b: str | None = None) -> PairScore:
    """Compatibility of two images under ``model``.

    Inputs are taken in the model's class order unless ``class_a``/``class_b``
    say otherwise, in which case a reversed pair is swapped first.
    """
    if model.banks is None:
        raise CompatError("model has no base banks attached")
    swapped = False
    if class_a is not None or class_b is not None:
        given = (class_a, class_b)
        if given == model.class_pair:
            pass
        elif given[::-1] == model.class_pair:
            regions_a, regions_b = regions_b, regions_a
            swapped = True
        else:
            raise CompatError(f"classes {given} do not match model pair {model.class_pair}")
    for regs in (regions_a, regions_b):
        if len(regs) == 0:
            raise CompatError("cannot score an image without regions")
    pe = encode_pair(regions_a, regions_b, *model.banks)
    if len(pe) != sum(model.sizes):
        raise CompatError(f"pair encoding length {len(pe)} != {sum(model.sizes)}")
    pe = PairEncoding(pe.encoding, model.class_pair, model.sizes, pe.parts)
    s, win = score_encoding(pe.encoding, model)
    return PairScore(s, win, pe, swapped)


def _side_report(enc: BaseEncoding, bank: BaseBank, regions, participating: Sequence[int], top_n: int):
    resp = enc.responses
    part = sorted(set(participating), key=lambda e: (-resp[e], e))[:top_n]
    chosen = list(part)
    if len(chosen) < top_n:
        taken = set(chosen)
        rest = [e for e in sorted(range(len(resp)), key=lambda e: (-resp[e], e)) if e not in taken]
        chosen += rest[:top_n - len(chosen)]
    pset = set(participating)
    chosen.sort(key=lambda e: (-resp[e], e not in pset, e))
    out = []
    for e in chosen:
        r = int(enc.argmax_regions[e])
        geom = regions[r].geometry.as_dict() if regions is not None and hasattr(regions[r], "geometry") else None
        out.append({
            "element_id": int(e),
            "response": float(resp[e]),
            "participating": e in pset,
            "pattern": list(bank.elements[e].pattern.items),
            "region_index": r,
            "region": geom,
        })
    return out


def explain_pair(result: PairScore, model: CompatModel, regions_a=None, regions_b=None,
                 top_n: int = 3) -> dict:
    """Per-image base elements behind the winning top element.

    Each side lists ``top_n`` elements: the winning pattern's elements on that
    side by descending response, padded with the side's best remaining
    elements when the pattern has fewer; the list is ordered by response.
    ``regions_a``/``regions_b`` follow the model's class order.
    """
    if top_n <= 0:
        raise CompatError("top_n must be positive")
    if result.swapped:
        regions_a, regions_b = regions_b, regions_a
    n_a = model.sizes[0]
    win = model.top_elements[result.winning_element]
    items = win.pattern.items
    ea, eb = result.pair_encoding.parts
    return {
        "class_pair": list(model.class_pair),
        "score": result.score,
        "winning_element": result.winning_element,
        "winning_pattern": list(items),
        "support": f"{win.rule.joint_count}/{win.rule.total}",
        "confidence": f"{win.rule.joint_count}/{win.rule.antecedent.count}",
        "images": [
            {"class": model.class_pair[0],
             "elements": _side_report(ea, model.banks[0], regions_a, [i for i in items if i < n_a], top_n)},
            {"class": model.class_pair[1],
             "elements": _side_report(eb, model.banks[1], regions_b, [i - n_a for i in items if i >= n_a], top_n)},
        ],
    }


def recommend(query_regions, query_class: str, candidates: Sequence[tuple[str, object]],
              candidate_class: str, model: CompatModel, top_n: int | None = None) -> list[tuple[str, float]]:
    """Rank candidate items of one class by compatibility with the query."""
    if not candidates:
        raise CompatError("no candidates to rank")
    scored = []
    for item_id, regions in candidates:
        res = score_pair(query_regions, regions, model, query_class, candidate_class)
        scored.append((item_id, res.score))
    scored.sort(key=lambda t: (-t[1], t[0]))
    return scored if top_n is None else scored[:top_n]


# ----------------------------------------------------------------------
# file format
# ----------------------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def write_rules(path: str | Path, class_pair, sizes, rules: Sequence[Rule], config: dict | None = None) -> None:
    lines = ["#compatmine-top-rules 1\n", f"pair={class_pair[0]},{class_pair[1]}\n",
             f"sizes={sizes[0]},{sizes[1]}\n", f"count={len(rules)}\n",
             f"config={json.dumps(config or {}, sort_keys=True, separators=(',', ':'))}\n"]
    for r in rules:
        lines.append(f"{r.joint_count} {r.antecedent.count} {r.total} {r.consequent.count} "
                     f"{','.join(map(str, r.consequent.items))}\t{' '.join(map(str, r.antecedent.items))}\n")
    Path(path).write_text("".join(lines))


def read_rules(path: str | Path):
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != "#compatmine-top-rules 1":
        raise CompatError(f"{path}: not a top-level rule file")
    header = dict(l.split("=", 1) for l in lines[1:5])
    pair = tuple(header["pair"].split(","))
    sizes = tuple(int(v) for v in header["sizes"].split(","))
    rules = []
    for line in lines[5:]:
        stats, items = line.split("\t")
        joint, ant, total, ycount, cons = stats.split()
        x = Itemset(tuple(int(v) for v in items.split()), int(ant), int(total))
        y = Itemset(tuple(int(v) for v in cons.split(",")), int(ycount), int(total))
        rules.append(Rule(x, y, int(joint)))
    return pair, sizes, rules


def write_model(path: str | Path, model: CompatModel) -> None:
    """Text model: ``key=value`` header, then per top element a record line and a weights line."""
    th = json.dumps(model.thresholds, sort_keys=True, separators=(",", ":"))
    cfg = json.dumps(model.config, sort_keys=True, separators=(",", ":"))
    lines = [
        "#compatmine-compat-model 1\n",
        f"pair={model.class_pair[0]},{model.class_pair[1]}\n",
        f"sizes={model.sizes[0]},{model.sizes[1]}\n",
        f"k={model.k}\n",
        f"thresholds={th}\n",
        f"banks={model.bank_refs[0]},{model.bank_refs[1]}\n",
        f"count={len(model.top_elements)}\n",
        f"config={cfg}\n",
    ]
    for t in model.top_elements:
        r = t.rule
        lines.append(
            f"top {t.element_id} support={r.joint_count}/{r.total} "
            f"confidence={r.joint_count}/{r.antecedent.count} covers={t.cover_count} "
            f"bias={_fmt(t.classifier.bias)} degenerate={int(t.classifier.degenerate)} "
            f"items={','.join(map(str, r.antecedent.items))}\n"
        )
        lines.append("weights " + " ".join(_fmt(v) for v in t.classifier.weights) + "\n")
    Path(path).write_text("".join(lines))


def read_model(path: str | Path, banks: tuple[BaseBank, BaseBank] | None = None) -> CompatModel:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != "#compatmine-compat-model 1":
        raise CompatError(f"{path}: not a compat model file")
    header = dict(l.split("=", 1) for l in lines[1:8])
    pair = tuple(header["pair"].split(","))
    sizes = tuple(int(v) for v in header["sizes"].split(","))
    count = int(header["count"])
    body = lines[8:]
    if len(body) != 2 * count:
        raise CompatError(f"{path}: expected {count} top elements")
    n = sum(sizes)
    yes = n
    tops = []
    for i in range(count):
        head = body[2 * i].split()
        kv = dict(t.split("=", 1) for t in head[2:])
        joint, total = (int(v) for v in kv["support"].split("/"))
        _, ant = (int(v) for v in kv["confidence"].split("/"))
        items = tuple(int(v) for v in kv["items"].split(","))
        w = np.array([float(v) for v in body[2 * i + 1].split()[1:]], dtype=np.float64)
        if w.shape != (n,):
            raise CompatError(f"{path}: top element {head[1]} has {w.shape[0]} weights, expected {n}")
        rule = Rule(Itemset(items, ant, total), Itemset((yes,), 0, total), joint)
        clf = LdaClassifier(w, float(kv["bias"]), bool(int(kv["degenerate"])))
        tops.append(TopElement(int(head[1]), pair, rule, clf, int(kv["covers"])))
    refs = tuple(header["banks"].split(","))
    if banks is not None:
        if (banks[0].class_label, banks[1].class_label) != pair:
            raise CompatError(f"banks {banks[0].class_label},{banks[1].class_label} do not match pair {pair}")
        if (len(banks[0]), len(banks[1])) != sizes:
            raise CompatError(f"bank sizes {(len(banks[0]), len(banks[1]))} do not match model sizes {sizes}")
    return CompatModel(pair, sizes, int(header["k"]), tops, banks, None,
                       json.loads(header["thresholds"]), refs, json.loads(header["config"]))
