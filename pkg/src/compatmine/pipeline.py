"""File-backed pipeline stages shared by the CLI and the end-to-end tests.

Layout under the output directory::

    base/<class>.patterns     mined, deduped, capped base patterns
    base/<class>.bank         trained base-level classifiers
    encodings/<class>.mce     max-pooled base responses for every catalog item
    top/<a>__<b>.rules        mined cross-class rules
    top/<a>__<b>.model        trained top-level classifiers
    eval/report.txt, eval/roc.txt
"""
from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from . import compat, elements, features, miner
from .compat import BaseEncoding, CompatModel, MissingModelError, PairEncoding, canonical_pair
from .config import PipelineConfig, parse_ratio
from .corpus import CompatPair, DatasetSplit, load_catalog, load_classes, load_pairs, split_dataset
from .elements import BaseBank
from .evaluation import EvalReport, evaluate, roc_points, write_roc
from .parallel import pmap

log = logging.getLogger(__name__)

ENC_MAGIC = b"MCE1"
EVAL_CHUNK = 64


class PipelineError(RuntimeError):
    pass


def write_encodings(path: Path, items: Sequence[tuple[str, BaseEncoding]], n_elements: int) -> None:
    """Binary: magic ``MCE1``, u32 item count, u32 N, then per item u32 id length,
    utf-8 id, N little-endian f64 responses, N u32 argmax region indices."""
    chunks = [ENC_MAGIC, struct.pack("<II", len(items), n_elements)]
    for item_id, enc in items:
        raw = item_id.encode()
        chunks.append(struct.pack("<I", len(raw)))
        chunks.append(raw)
        chunks.append(np.asarray(enc.responses, dtype="<f8").tobytes())
        chunks.append(np.asarray(enc.argmax_regions, dtype="<u4").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def read_encodings(path: Path) -> dict[str, BaseEncoding]:
    data = Path(path).read_bytes()
    if data[:4] != ENC_MAGIC:
        raise PipelineError(f"{path}: not an encoding file")
    count, n = struct.unpack_from("<II", data, 4)
    off = 12
    out = {}
    for _ in range(count):
        (ln,) = struct.unpack_from("<I", data, off)
        off += 4
        item_id = data[off:off + ln].decode()
        off += ln
        resp = np.frombuffer(data, dtype="<f8", count=n, offset=off).astype(np.float64)
        off += 8 * n
        arg = np.frombuffer(data, dtype="<u4", count=n, offset=off).astype(np.int64)
        off += 4 * n
        out[item_id] = BaseEncoding(resp, arg)
    if off != len(data):
        raise PipelineError(f"{path}: trailing or truncated data")
    return out


@dataclass(frozen=True)
class _Job:
    config: PipelineConfig
    out: Path
    stage: str
    args: tuple


def _run_job(job: _Job):
    ws = Workspace(job.config, job.out)
    return getattr(ws, job.stage)(*job.args)


class Workspace:
    def __init__(self, config: PipelineConfig, out: str | Path):
        self.config = config
        self.out = Path(out)
        self._features: dict[str, list] = {}

    # ---------------- inputs ----------------

    @cached_property
    def classes(self) -> tuple[str, ...]:
        return load_classes(self.config.path("classes_file"))

    @cached_property
    def catalog(self):
        return load_catalog(self.config.path("catalog"), self.classes)

    @cached_property
    def class_of(self) -> dict[str, str]:
        return {it.item_id: it.class_label for it in self.catalog}

    def items_of(self, cls: str) -> list[str]:
        self._check_class(cls)
        return [it.item_id for it in self.catalog if it.class_label == cls]

    @cached_property
    def _by_id(self):
        return {it.item_id: it for it in self.catalog}

    def regions(self, item_id: str):
        if item_id not in self._features:
            item = self._by_id.get(item_id)
            if item is None:
                raise PipelineError(f"unknown item {item_id!r}")
            path = Path(item.feature_source)
            if not path.is_absolute():
                path = self.config.path("catalog").parent / path
            self._features[item_id] = features.load_features(path, self.config.feature_dim)
        return self._features[item_id]

    def activations(self, item_id: str) -> np.ndarray:
        return features.stack(self.regions(item_id))

    @cached_property
    def split(self):
        cfg = self.config
        if cfg.train_pairs and cfg.test_pairs:
            train = load_pairs(cfg.path("train_pairs"), self.catalog)
            test = load_pairs(cfg.path("test_pairs"), self.catalog)
            overlap = {frozenset((p.item_a, p.item_b)) for p in train} & {frozenset((p.item_a, p.item_b)) for p in test}
            if overlap:
                raise PipelineError(f"{len(overlap)} pairs appear in both train and test files")
            return DatasetSplit(tuple(train), tuple(test), cfg.seed)
        return split_dataset(load_pairs(cfg.path("pairs"), self.catalog), cfg.test_fraction, cfg.seed)

    def _check_class(self, cls: str):
        if cls not in self.classes:
            raise PipelineError(f"unknown class {cls!r}; declared classes: {', '.join(self.classes)}")

    def orient(self, pair: CompatPair) -> tuple[tuple[str, str], str, str]:
        """Canonical class pair and the two item ids in that order."""
        ca, cb = self.class_of[pair.item_a], self.class_of[pair.item_b]
        cp = canonical_pair(ca, cb)
        a, b = pair.item_a, pair.item_b
        if ca != cp[0] or (ca == cb and a > b):
            a, b = b, a
        return cp, a, b

    # ---------------- paths ----------------

    def patterns_path(self, cls):
        return self.out / "base" / f"{cls}.patterns"

    def bank_path(self, cls):
        return self.out / "base" / f"{cls}.bank"

    def encodings_path(self, cls):
        return self.out / "encodings" / f"{cls}.mce"

    def rules_path(self, cp):
        return self.out / "top" / f"{cp[0]}__{cp[1]}.rules"

    def model_path(self, cp):
        return self.out / "top" / f"{cp[0]}__{cp[1]}.model"

    def _need(self, path: Path, hint: str) -> Path:
        if not path.exists():
            raise MissingModelError(f"missing {path}; run `{hint}` first")
        return path

    # ---------------- base level ----------------

    def mine_base(self, cls: str) -> Path:
        cfg = self.config
        self._check_class(cls)
        regions = [self.activations(i) for i in self.items_of(cls)]
        if not regions:
            raise PipelineError(f"class {cls!r} has no catalog items")
        db = miner.build_base_matrix(np.vstack(regions), cfg.k_base)
        mcfg = miner.MiningConfig(min_support=parse_ratio(cfg.base_min_support), min_len=cfg.base_min_len,
                                  max_len=cfg.base_max_len, top_k_binarize=cfg.k_base)
        found = miner.mine_frequent(db, mcfg)
        picked = elements.select_elements(elements.dedup_patterns(found), cfg.base_cap)
        log.info("class %s: %d transactions, %d frequent patterns, %d kept", cls, db.m, len(found), len(picked))
        path = self.patterns_path(cls)
        path.parent.mkdir(parents=True, exist_ok=True)
        elements.write_patterns(path, cls, picked, cfg.echo())
        return path

    def _global_background(self):
        acts = [self.activations(it.item_id) for it in self.catalog]
        return elements.fit_background(np.vstack(acts))

    def train_base(self, cls: str) -> Path:
        cfg = self.config
        self._check_class(cls)
        label, patterns = elements.read_patterns(self._need(self.patterns_path(cls), f"mine-base {cls}"))
        item_regions = [(i, self.activations(i)) for i in self.items_of(cls)]
        background = self._global_background() if cfg.lda_background == "global" else None
        bank = elements.train_bank(cls, item_regions, patterns, cfg.k_base, cfg.reg_scale, background, cfg.echo())
        log.info("class %s: %d base elements trained", cls, len(bank))
        path = self.bank_path(cls)
        elements.write_bank(path, bank)
        return path

    def bank(self, cls: str) -> BaseBank:
        self._check_class(cls)
        return elements.read_bank(self._need(self.bank_path(cls), f"train-base {cls}"))

    def encode(self, cls: str) -> Path:
        bank = self.bank(cls)
        encs = [(i, compat.encode_image(self.activations(i), bank)) for i in self.items_of(cls)]
        path = self.encodings_path(cls)
        path.parent.mkdir(parents=True, exist_ok=True)
        write_encodings(path, encs, len(bank))
        log.info("class %s: encoded %d items over %d elements", cls, len(encs), len(bank))
        return path

    def encodings(self, cls: str) -> dict[str, BaseEncoding]:
        return read_encodings(self._need(self.encodings_path(cls), "encode"))

    # ---------------- top level ----------------

    def train_pairs_by_class(self) -> dict[tuple[str, str], list[tuple[str, str, int]]]:
        groups: dict[tuple[str, str], list[tuple[str, str, int]]] = {}
        for p in self.split.train_pairs:
            cp, a, b = self.orient(p)
            groups.setdefault(cp, []).append((a, b, p.label))
        return groups

    def top_cap(self, cp) -> int:
        """Share of the global top-level budget proportional to the pair's training volume."""
        groups = self.train_pairs_by_class()
        total = sum(len(v) for v in groups.values())
        share = len(groups.get(cp, ()))
        return max(1, (self.config.top_cap * share) // total) if share else 0

    def _pair_encodings(self, cp) -> list[tuple[PairEncoding, int]]:
        rows = self.train_pairs_by_class().get(cp)
        if not rows:
            raise PipelineError(f"no training pairs for classes {cp}")
        enc_a = self.encodings(cp[0])
        enc_b = enc_a if cp[1] == cp[0] else self.encodings(cp[1])
        sizes = (len(next(iter(enc_a.values()))), len(next(iter(enc_b.values()))))
        return [(compat.pair_vector(enc_a[a], enc_b[b], cp, sizes), lab) for a, b, lab in rows]

    def _pair_arg(self, class_a: str, class_b: str) -> tuple[str, str]:
        self._check_class(class_a)
        self._check_class(class_b)
        return canonical_pair(class_a, class_b)

    def mine_top(self, class_a: str, class_b: str) -> Path:
        cfg = self.config
        cp = self._pair_arg(class_a, class_b)
        pairs = self._pair_encodings(cp)
        sizes = pairs[0][0].sizes
        db = compat.build_pair_matrix(pairs, cfg.k_top, sizes)
        rules = compat.mine_top(db, sizes, parse_ratio(cfg.top_min_support), parse_ratio(cfg.top_min_confidence),
                                cfg.top_min_len, cfg.top_max_len, self.top_cap(cp))
        log.info("pair %s: %d transactions, %d rules kept", cp, db.m, len(rules))
        path = self.rules_path(cp)
        path.parent.mkdir(parents=True, exist_ok=True)
        compat.write_rules(path, cp, sizes, rules, cfg.echo())
        return path

    def train_top(self, class_a: str, class_b: str) -> Path:
        cfg = self.config
        cp = self._pair_arg(class_a, class_b)
        _, sizes, rules = compat.read_rules(self._need(self.rules_path(cp), f"mine-top {cp[0]} {cp[1]}"))
        if not rules:
            raise PipelineError(f"no top-level rules were mined for {cp}; nothing to train")
        pairs = self._pair_encodings(cp)
        thresholds = {"min_support": cfg.top_min_support, "min_confidence": cfg.top_min_confidence,
                      "min_len": cfg.top_min_len, "max_len": cfg.top_max_len}
        model = compat.train_top(rules, pairs, cfg.k_top, cfg.reg_scale, thresholds=thresholds, config=cfg.echo())
        model.bank_refs = tuple(elements.file_digest(self.bank_path(c))[:16] for c in cp)
        path = self.model_path(cp)
        compat.write_model(path, model)
        log.info("pair %s: %d top elements trained", cp, len(model.top_elements))
        return path

    def model(self, class_a: str, class_b: str) -> CompatModel:
        cp = self._pair_arg(class_a, class_b)
        path = self.model_path(cp)
        if not path.exists():
            raise MissingModelError(f"no compatibility model for {cp[0]},{cp[1]} (expected {path}); run train-top first")
        banks = (self.bank(cp[0]), self.bank(cp[1]))
        model = compat.read_model(path, banks)
        digests = tuple(elements.file_digest(self.bank_path(c))[:16] for c in cp)
        if model.bank_refs != digests:
            raise PipelineError(f"{path} was trained against different base banks; rerun train-top")
        return model

    # ---------------- inference ----------------

    def score(self, item_a: str, item_b: str) -> tuple[compat.PairScore, CompatModel]:
        ca, cb = self._item_class(item_a), self._item_class(item_b)
        model = self.model(ca, cb)
        res = compat.score_pair(self.regions(item_a), self.regions(item_b), model, ca, cb)
        return res, model

    def explain(self, item_a: str, item_b: str, top_n: int = 3) -> dict:
        res, model = self.score(item_a, item_b)
        ra, rb = self.regions(item_a), self.regions(item_b)
        report = compat.explain_pair(res, model, ra, rb, top_n)
        ids = (item_b, item_a) if res.swapped else (item_a, item_b)
        for side, ident in zip(report["images"], ids):
            side["item_id"] = ident
        return report

    def recommend(self, item: str, cls: str, top_n: int | None = None) -> list[tuple[str, float]]:
        qc = self._item_class(item)
        model = self.model(qc, cls)
        cands = [(i, self.regions(i)) for i in self.items_of(cls) if i != item]
        return compat.recommend(self.regions(item), qc, cands, cls, model, top_n)

    def _item_class(self, item_id: str) -> str:
        try:
            return self.class_of[item_id]
        except KeyError:
            raise PipelineError(f"unknown item {item_id!r}") from None

    def score_chunk(self, pairs: Sequence[CompatPair]) -> list[tuple[float | None, tuple[str, str]]]:
        models: dict = {}
        out = []
        for p in pairs:
            cp, a, b = self.orient(p)
            if cp not in models:
                models[cp] = self.model(*cp) if self.model_path(cp).exists() else None
            model = models[cp]
            if model is None:
                out.append((None, cp))
                continue
            res = compat.score_pair(self.regions(a), self.regions(b), model)
            out.append((res.score, cp))
        return out

    def evaluate(self) -> EvalReport:
        test = list(self.split.test_pairs)
        chunks = [tuple(test[i:i + EVAL_CHUNK]) for i in range(0, len(test), EVAL_CHUNK)]
        results = self.fan_out("score_chunk", [(c,) for c in chunks])
        flat = iter([r for chunk in results for r in chunk])
        report = evaluate(test, lambda _p: next(flat))
        ev = self.out / "eval"
        ev.mkdir(parents=True, exist_ok=True)
        (ev / "report.txt").write_text(report.to_text())
        scored = [(s, p.label) for (s, _), p in zip((r for chunk in results for r in chunk), test) if s is not None]
        write_roc(ev / "roc.txt", roc_points([s for s, _ in scored], [l for _, l in scored]))
        return report

    # ---------------- fan-out ----------------

    def fan_out(self, stage: str, arg_list: Sequence[tuple]) -> list:
        jobs = [_Job(self.config, self.out, stage, tuple(a)) for a in arg_list]
        if self.config.workers <= 1:
            return [getattr(self, stage)(*j.args) for j in jobs]
        return pmap(_run_job, jobs, self.config.workers)
