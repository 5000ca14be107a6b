"""Base-level visual elements: pattern dedup/selection, member retrieval, LDA banks."""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg

from . import _accel
from .miner import Itemset, TransactionDb

log = logging.getLogger(__name__)

EPS_ABS = 1e-8
# fixed right-hand-side block size for the batched solve; keeps results
# independent of how elements are sharded across workers
SOLVE_BLOCK = 64


class ElementError(ValueError):
    pass


class LdaError(ElementError):
    """The regularized covariance could not be factorized."""


# ----------------------------------------------------------------------
# patterns and retrieval
# ----------------------------------------------------------------------


def dedup_patterns(patterns: Iterable[Itemset]) -> list[Itemset]:
    seen: set[tuple[int, ...]] = set()
    out = []
    for p in patterns:
        if p.items in seen:
            continue
        seen.add(p.items)
        out.append(p)
    return out


def select_elements(patterns: Iterable[Itemset], cap: int) -> list[Itemset]:
    """Top ``cap`` patterns by descending support, ties by lexicographic items."""
    if cap <= 0:
        return []
    ranked = sorted(patterns, key=lambda p: (-p.support, p.items))
    return ranked[:cap]


class InvertedIndex:
    """Item id -> ascending array of transaction ids containing it."""

    def __init__(self, postings: dict[int, np.ndarray], n_items: int, m: int):
        self.postings = postings
        self.n_items = n_items
        self.m = m

    def __getitem__(self, item: int) -> np.ndarray:
        return self.postings.get(int(item), _EMPTY)

    def __len__(self):
        return len(self.postings)


_EMPTY = np.empty(0, dtype=np.int64)


def build_inverted_index(db: TransactionDb) -> InvertedIndex:
    if db.m == 0:
        raise ElementError("cannot index an empty database")
    items = np.fromiter((i for t in db.transactions for i in t.items), dtype=np.int64)
    tids = np.fromiter((t.tid for t in db.transactions for _ in t.items), dtype=np.int64)
    order = np.lexsort((tids, items))
    items, tids = items[order], tids[order]
    cuts = np.flatnonzero(np.diff(items)) + 1
    postings = {}
    for chunk_items, chunk_tids in zip(np.split(items, cuts), np.split(tids, cuts)):
        if len(chunk_items):
            postings[int(chunk_items[0])] = np.ascontiguousarray(chunk_tids)
    return InvertedIndex(postings, db.n_items, db.m)


def retrieve_members(index: InvertedIndex, pattern) -> np.ndarray:
    """Transaction ids containing every item of ``pattern`` (posting intersection)."""
    items = tuple(pattern.items if isinstance(pattern, Itemset) else pattern)
    if not items:
        raise ElementError("pattern must be non-empty")
    lists = sorted((index[i] for i in items), key=len)
    acc = lists[0]
    for other in lists[1:]:
        if not len(acc):
            break
        acc = _accel.intersect_sorted(acc, other)
    return np.asarray(acc, dtype=np.int64)


# ----------------------------------------------------------------------
# LDA
# ----------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BackgroundStats:
    mean: np.ndarray
    covariance: np.ndarray
    count: int


@dataclass(frozen=True, eq=False)
class LdaClassifier:
    weights: np.ndarray
    bias: float
    degenerate: bool = False

    def __call__(self, feature) -> float:
        return score(self, feature)


def fit_background(features) -> BackgroundStats:
    """Sample mean and (n-1)-normalized covariance.

    Rows are sorted lexicographically first, so the result is bitwise
    independent of input order; the covariance is mirrored to be exactly
    symmetric.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ElementError("background statistics need at least 2 samples")
    x = x[np.lexsort(x.T[::-1])]
    mean = x.mean(axis=0)
    xc = x - mean
    cov = (xc.T @ xc) / (x.shape[0] - 1)
    upper = np.triu(cov)
    cov = upper + np.triu(upper, 1).T
    return BackgroundStats(mean, cov, x.shape[0])


class LdaSolver:
    """Factorizes ``Sigma + lambda*I`` once and solves for many positive means.

    ``lambda = reg_scale * trace(Sigma) / d + eps_abs``.
    """

    def __init__(self, background: BackgroundStats, reg_scale: float = 0.01, eps_abs: float = EPS_ABS):
        cov = background.covariance
        d = cov.shape[0]
        self.background = background
        self.reg = reg_scale * float(np.trace(cov)) / d + eps_abs
        self.system = cov + self.reg * np.eye(d)
        try:
            self._factor = scipy.linalg.cho_factor(self.system, lower=False, check_finite=True)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise LdaError(f"regularized covariance is not positive definite: {exc}") from None

    @property
    def dim(self) -> int:
        return self.system.shape[0]

    def solve_means(self, pos_means: np.ndarray) -> list[LdaClassifier]:
        """One classifier per row of ``pos_means``."""
        pos_means = np.atleast_2d(np.asarray(pos_means, dtype=np.float64))
        if pos_means.shape[1] != self.dim:
            raise ElementError(f"positive dimension {pos_means.shape[1]} != background {self.dim}")
        mu0 = self.background.mean
        rhs = (pos_means - mu0).T
        out = []
        for start in range(0, rhs.shape[1], SOLVE_BLOCK):
            block = np.zeros((self.dim, SOLVE_BLOCK))
            width = min(SOLVE_BLOCK, rhs.shape[1] - start)
            block[:, :width] = rhs[:, start:start + width]
            w_block = scipy.linalg.cho_solve(self._factor, block)
            for j in range(width):
                out.append(self._finish(w_block[:, j], block[:, j], pos_means[start + j]))
        return out

    def _finish(self, w, diff, mu_pos) -> LdaClassifier:
        norm = float(np.linalg.norm(diff))
        resid = float(np.linalg.norm(self.system @ w - diff))
        if resid > 1e-9 * norm:
            # one step of iterative refinement
            w = w + scipy.linalg.cho_solve(self._factor, diff - self.system @ w)
            resid = float(np.linalg.norm(self.system @ w - diff))
            if resid > 1e-9 * norm:
                log.warning("LDA solve residual %.3g exceeds 1e-9*|diff| (%.3g)", resid, 1e-9 * norm)
        if not np.all(np.isfinite(w)):
            raise LdaError("LDA solve produced non-finite weights")
        bias = -float(w @ (mu_pos + self.background.mean)) / 2.0
        degenerate = norm <= 1e-12 * max(1.0, float(np.linalg.norm(self.background.mean)))
        return LdaClassifier(np.ascontiguousarray(w), bias, degenerate)

    def fit(self, positives) -> LdaClassifier:
        pos = np.atleast_2d(np.asarray(positives, dtype=np.float64))
        if pos.shape[0] < 1:
            raise ElementError("need at least one positive")
        return self.solve_means(pos.mean(axis=0)[None, :])[0]


def train_lda(positives, background: BackgroundStats, reg_scale: float = 0.01,
              eps_abs: float = EPS_ABS) -> LdaClassifier:
    """Whitened-mean LDA: ``(Sigma + lambda I) w = mu_pos - mu0``, midpoint bias."""
    return LdaSolver(background, reg_scale, eps_abs).fit(positives)


def score(classifier: LdaClassifier, feature) -> float:
    f = np.asarray(feature, dtype=np.float64)
    if f.shape != classifier.weights.shape:
        raise ElementError(f"feature dimension {f.shape} != classifier {classifier.weights.shape}")
    return float(classifier.weights @ f) + classifier.bias


# ----------------------------------------------------------------------
# banks
# ----------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BaseElement:
    element_id: int
    class_label: str
    pattern: Itemset
    members: tuple[tuple[str, int], ...]
    classifier: LdaClassifier
    member_count: int = 0

    def __post_init__(self):
        if not self.member_count:
            object.__setattr__(self, "member_count", len(self.members))


@dataclass(eq=False)
class BaseBank:
    """All base elements of one class plus the settings they were trained with."""

    class_label: str
    dim: int
    k: int
    elements: list[BaseElement]
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        self._w = None

    def __len__(self):
        return len(self.elements)

    @property
    def classifiers(self) -> list[LdaClassifier]:
        return [e.classifier for e in self.elements]

    @property
    def weights(self) -> np.ndarray:
        if self._w is None:
            if self.elements:
                self._w = np.vstack([e.classifier.weights for e in self.elements])
            else:
                self._w = np.zeros((0, self.dim))
            self._b = np.array([e.classifier.bias for e in self.elements], dtype=np.float64)
        return self._w

    @property
    def biases(self) -> np.ndarray:
        self.weights
        return self._b


def base_transactions(item_regions: Sequence[tuple[str, np.ndarray]], k: int):
    """Stack all regions of a class and binarize them.

    Returns ``(db, activations, refs)`` where ``refs[t] = (item_id, region_index)``.
    """
    acts, refs = [], []
    for item_id, mat in item_regions:
        mat = np.asarray(mat, dtype=np.float64)
        acts.append(mat)
        refs.extend((item_id, r) for r in range(mat.shape[0]))
    if not acts:
        raise ElementError("no regions for this class")
    activations = np.vstack(acts)
    from .miner import build_base_matrix

    return build_base_matrix(activations, k), activations, refs


def train_bank(class_label: str, item_regions: Sequence[tuple[str, np.ndarray]],
               patterns: Sequence[Itemset], k: int, reg_scale: float = 0.01,
               background: BackgroundStats | None = None, config: dict | None = None) -> BaseBank:
    """Retrieve each pattern's covering patches and train its classifier.

    ``background`` defaults to statistics over every patch of the class.
    Patterns without any covering patch are dropped with a warning.
    """
    db, activations, refs = base_transactions(item_regions, k)
    index = build_inverted_index(db)
    if background is None:
        background = fit_background(activations)
    solver = LdaSolver(background, reg_scale)
    kept, members, means = [], [], []
    for p in patterns:
        tids = retrieve_members(index, p)
        if not len(tids):
            log.warning("class %s: pattern %s covers no patch, skipped", class_label, p.items)
            continue
        kept.append(p)
        members.append(tuple(refs[t] for t in tids.tolist()))
        means.append(activations[tids].mean(axis=0))
    classifiers = solver.solve_means(np.vstack(means)) if means else []
    elements = [
        BaseElement(i, class_label, p, mem, clf)
        for i, (p, mem, clf) in enumerate(zip(kept, members, classifiers))
    ]
    return BaseBank(class_label, activations.shape[1], k, elements, dict(config or {}))


# ----------------------------------------------------------------------
# file formats
# ----------------------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def _canon_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def write_patterns(path: str | Path, class_label: str, patterns: Sequence[Itemset], config: dict | None = None) -> None:
    """Mined base patterns: ``count/total<TAB>space-separated items`` per line."""
    lines = ["#compatmine-patterns 1\n", f"class={class_label}\n", f"count={len(patterns)}\n",
             f"config={_canon_json(config or {})}\n"]
    lines += [f"{p.count}/{p.total}\t{' '.join(map(str, p.items))}\n" for p in patterns]
    Path(path).write_text("".join(lines))


def read_patterns(path: str | Path) -> tuple[str, list[Itemset]]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != "#compatmine-patterns 1":
        raise ElementError(f"{path}: not a pattern file")
    header = dict(l.split("=", 1) for l in lines[1:4])
    out = []
    for line in lines[4:]:
        frac, items = line.split("\t")
        num, den = frac.split("/")
        out.append(Itemset(tuple(int(v) for v in items.split()), int(num), int(den)))
    if len(out) != int(header["count"]):
        raise ElementError(f"{path}: expected {header['count']} patterns, found {len(out)}")
    return header["class"], out


def write_bank(path: str | Path, bank: BaseBank) -> None:
    """Self-describing text bank.

    Header lines ``key=value`` (class, d, k, count, config), then per element
    an ``element`` line (id, support as count/total, member count, bias,
    pattern items) followed by a ``weights`` line of ``d`` values.
    """
    lines = [
        "#compatmine-base-bank 1\n",
        f"class={bank.class_label}\n",
        f"d={bank.dim}\n",
        f"k={bank.k}\n",
        f"count={len(bank.elements)}\n",
        f"config={_canon_json(bank.config)}\n",
    ]
    for e in bank.elements:
        p = e.pattern
        lines.append(
            f"element {e.element_id} support={p.count}/{p.total} members={e.member_count} "
            f"bias={_fmt(e.classifier.bias)} degenerate={int(e.classifier.degenerate)} "
            f"items={','.join(map(str, p.items))}\n"
        )
        lines.append("weights " + " ".join(_fmt(v) for v in e.classifier.weights) + "\n")
    Path(path).write_text("".join(lines))


def _kv(tokens: Iterable[str]) -> dict[str, str]:
    return dict(t.split("=", 1) for t in tokens)


def read_bank(path: str | Path) -> BaseBank:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != "#compatmine-base-bank 1":
        raise ElementError(f"{path}: not a base bank file")
    header = dict(l.split("=", 1) for l in lines[1:6])
    dim, k, count = int(header["d"]), int(header["k"]), int(header["count"])
    body = lines[6:]
    if len(body) != 2 * count:
        raise ElementError(f"{path}: expected {count} elements")
    elements = []
    for i in range(count):
        head = body[2 * i].split()
        if head[0] != "element":
            raise ElementError(f"{path}: malformed element record {body[2 * i]!r}")
        kv = _kv(head[2:])
        num, den = kv["support"].split("/")
        items = tuple(int(v) for v in kv["items"].split(","))
        weights = np.array([float(v) for v in body[2 * i + 1].split()[1:]], dtype=np.float64)
        if weights.shape != (dim,):
            raise ElementError(f"{path}: element {head[1]} has {weights.shape[0]} weights, expected {dim}")
        clf = LdaClassifier(weights, float(kv["bias"]), bool(int(kv["degenerate"])))
        elements.append(BaseElement(int(head[1]), header["class"], Itemset(items, int(num), int(den)),
                                    (), clf, int(kv["members"])))
    return BaseBank(header["class"], dim, k, elements, json.loads(header["config"]))


def file_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
