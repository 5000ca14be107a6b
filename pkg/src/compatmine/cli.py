"""Command-line frontend.

Typical run::

    compatmine synth --out data
    compatmine --config data/config.json --out run mine-base
    compatmine --config data/config.json --out run train-base
    compatmine --config data/config.json --out run encode
    compatmine --config data/config.json --out run mine-top bottoms tops
    compatmine --config data/config.json --out run train-top bottoms tops
    compatmine --config data/config.json --out run eval
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import corpus, features
from .compat import CompatError, MissingModelError
from .config import ConfigError, PipelineConfig
from .corpus import CorpusError
from .elements import ElementError
from .evaluation import EvalError, generate_benchmark
from .features import FeatureError, SyntheticSpec, identity_table
from .miner import MiningError
from .pipeline import PipelineError, Workspace

log = logging.getLogger("compatmine")

EXIT_ERROR = 1
EXIT_MISSING = 3


def _global_options(p: argparse.ArgumentParser, suppress: bool) -> None:
    # accepted before or after the subcommand; subparser copies must not clobber
    # values given before it, hence SUPPRESS defaults there
    def d(value):
        return argparse.SUPPRESS if suppress else value

    p.add_argument("--config", type=Path, default=d(None), help="pipeline config (JSON)")
    p.add_argument("--out", type=Path, default=d(Path("run")), help="artifact directory")
    p.add_argument("--workers", type=int, default=d(None),
                   help="worker processes (output is identical for any count)")
    p.add_argument("--seed", type=int, default=d(None), help="override the config seed")
    p.add_argument("--set", action="append", default=d([]), metavar="KEY=VALUE",
                   help="override any config field (JSON value), repeatable")
    p.add_argument("-q", "--quiet", action="store_true", default=d(False))


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="compatmine", description=__doc__.splitlines()[0])
    _global_options(p, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_options(common, suppress=True)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, **kw):
        return sub.add_parser(name, parents=[common], **kw)

    s = add("mine-base", help="mine base-level patterns per class")
    s.add_argument("classes", nargs="*", help="classes (default: all)")
    s = add("train-base", help="train base-level classifiers per class")
    s.add_argument("classes", nargs="*")
    s = add("encode", help="max-pool base responses for catalog items")
    s.add_argument("classes", nargs="*")
    for name, help_ in (("mine-top", "mine cross-class compatibility rules"),
                        ("train-top", "train top-level classifiers")):
        s = add(name, help=help_)
        s.add_argument("class_a", nargs="?")
        s.add_argument("class_b", nargs="?")
    s = add("score", help="compatibility score of two items")
    s.add_argument("item_a")
    s.add_argument("item_b")
    s = add("explain", help="elements behind a compatibility score (JSON)")
    s.add_argument("item_a")
    s.add_argument("item_b")
    s.add_argument("--top-n", type=int, default=3)
    s.add_argument("--output", type=Path, help="write the report here instead of stdout")
    s = add("recommend", help="rank items of a class against a query item")
    s.add_argument("item")
    s.add_argument("cls", metavar="class")
    s.add_argument("--top-n", type=int, default=10)
    add("eval", help="AUC on the test pairs")

    s = add("synth", help="write a planted-style benchmark corpus")
    s.add_argument("--classes", default="bottoms,tops")
    s.add_argument("--styles", type=int, default=3)
    s.add_argument("--dim", type=int, default=64)
    s.add_argument("--signature", type=int, default=4)
    s.add_argument("--images", type=int, default=300, help="images per class")
    s.add_argument("--regions", type=int, default=25, help="regions per image")
    s.add_argument("--train-pairs", type=int, default=2000)
    s.add_argument("--test-pairs", type=int, default=500)
    s.add_argument("--noise", type=float, default=0.1)
    s.add_argument("--boost", type=float, nargs=2, default=(0.5, 1.0))
    s.add_argument("--format", choices=("binary", "text"), default="binary")
    return p


def _overrides(args) -> dict:
    out = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value
    if args.workers is not None:
        out["workers"] = args.workers
    if args.seed is not None:
        out["seed"] = args.seed
    return out


def _synth(args) -> int:
    out = args.out
    classes = tuple(c.strip() for c in args.classes.split(",") if c.strip())
    seed = 0 if args.seed is None else args.seed
    spec = SyntheticSpec(dim=args.dim, classes=classes, styles_per_class=args.styles,
                         signature_size=args.signature, boost_range=tuple(args.boost),
                         noise_level=args.noise, compat_table=identity_table(classes, args.styles), seed=seed)
    bench = generate_benchmark(spec, args.images, args.train_pairs, args.test_pairs, seed, args.regions)
    (out / "features").mkdir(parents=True, exist_ok=True)
    writer = features.write_features_binary if args.format == "binary" else features.write_features_text
    for item in bench.catalog:
        writer(out / item.feature_source, bench.features[item.item_id], args.dim)
    corpus.write_classes(out / "classes.txt", classes)
    corpus.write_catalog(out / "catalog.tsv", bench.catalog)
    corpus.write_pairs(out / "train_pairs.csv", bench.split.train_pairs)
    corpus.write_pairs(out / "test_pairs.csv", bench.split.test_pairs)
    (out / "styles.tsv").write_text("".join(f"{k}\t{v}\n" for k, v in sorted(bench.styles.items())))
    # both k scaled to the small synthetic dimension: q signature entries plus the
    # spike give q + 1 base elements per style, and the top level keeps one style's worth
    cfg = PipelineConfig(train_pairs="train_pairs.csv", test_pairs="test_pairs.csv", feature_dim=args.dim,
                         k_base=args.signature + 1, k_top=args.signature + 1, seed=seed)
    cfg.dump(out / "config.json")
    print(f"wrote {len(bench.catalog)} items, {len(bench.split.train_pairs)} train / "
          f"{len(bench.split.test_pairs)} test pairs to {out}")
    return 0


def _class_pairs(ws: Workspace, a, b):
    if a and b:
        return [(a, b)]
    if a or b:
        raise PipelineError("give both classes or neither")
    return sorted(ws.train_pairs_by_class())


def run_command(argv: list[str] | None = None) -> int:
    parser = _parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True)
    try:
        if args.command == "synth":
            return _synth(args)
        if args.config is None:
            raise ConfigError("--config is required for this command")
        cfg = PipelineConfig.load(args.config, _overrides(args))
        ws = Workspace(cfg, args.out)
        cmd = args.command
        if cmd in ("mine-base", "train-base", "encode"):
            stage = {"mine-base": "mine_base", "train-base": "train_base", "encode": "encode"}[cmd]
            classes = args.classes or list(ws.classes)
            for c in classes:
                ws._check_class(c)
            for path in ws.fan_out(stage, [(c,) for c in classes]):
                print(path)
        elif cmd in ("mine-top", "train-top"):
            stage = cmd.replace("-", "_")
            for path in ws.fan_out(stage, _class_pairs(ws, args.class_a, args.class_b)):
                print(path)
        elif cmd == "score":
            res, model = ws.score(args.item_a, args.item_b)
            print(f"{res.score!r}\tpair={','.join(model.class_pair)}\twinner={res.winning_element}")
        elif cmd == "explain":
            text = json.dumps(ws.explain(args.item_a, args.item_b, args.top_n), indent=2) + "\n"
            if args.output:
                args.output.write_text(text)
            else:
                sys.stdout.write(text)
        elif cmd == "recommend":
            for item, s in ws.recommend(args.item, args.cls, args.top_n):
                print(f"{item}\t{s!r}")
        elif cmd == "eval":
            report = ws.evaluate()
            sys.stdout.write(report.to_text())
        return 0
    except MissingModelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (ConfigError, CorpusError, FeatureError, MiningError, ElementError, CompatError,
            EvalError, PipelineError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
