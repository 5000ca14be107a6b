"""Pipeline configuration: one JSON file plus command-line overrides."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from fractions import Fraction
from pathlib import Path

from .miner import as_fraction


class ConfigError(ValueError):
    pass


@dataclass
class PipelineConfig:
    # data files, relative to the config file's directory
    classes_file: str = "classes.txt"
    catalog: str = "catalog.tsv"
    pairs: str | None = None
    train_pairs: str | None = None
    test_pairs: str | None = None
    test_fraction: float = 0.2

    feature_dim: int | None = None
    window: int = 128
    stride: int = 32
    resize: int = 256

    k_base: int = 20
    k_top: int = 10
    base_min_len: int = 3
    base_max_len: int = 6
    top_min_len: int = 3
    top_max_len: int = 6
    base_min_support: str = "0.01"
    top_min_support: str = "0.0005"
    top_min_confidence: str = "0.75"
    base_cap: int = 4000
    top_cap: int = 4000

    reg_scale: float = 0.01
    lda_background: str = "class"
    seed: int = 0
    workers: int = 1

    base_dir: Path = field(default=Path("."), repr=False, compare=False)

    def __post_init__(self):
        for name in ("base_min_support", "top_min_support", "top_min_confidence"):
            value = getattr(self, name)
            try:
                frac = parse_ratio(value)
            except (ValueError, ZeroDivisionError):
                raise ConfigError(f"{name}: cannot parse {value!r} as a ratio") from None
            setattr(self, name, str(value))
            if not 0 <= frac <= 1:
                raise ConfigError(f"{name} must lie in [0, 1], got {value}")
        if parse_ratio(self.base_min_support) == 0 or parse_ratio(self.top_min_support) == 0:
            raise ConfigError("minimum support must be positive")
        for lo, hi in (("base_min_len", "base_max_len"), ("top_min_len", "top_max_len")):
            if not 1 <= getattr(self, lo) <= getattr(self, hi):
                raise ConfigError(f"need 1 <= {lo} <= {hi}")
        for name in ("k_base", "k_top", "window", "stride", "resize", "workers"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.base_cap < 0 or self.top_cap < 0:
            raise ConfigError("element caps must be non-negative")
        if self.lda_background not in ("class", "global"):
            raise ConfigError("lda_background must be 'class' or 'global'")
        if self.reg_scale < 0:
            raise ConfigError("reg_scale must be non-negative")
        if self.pairs is None and (self.train_pairs is None or self.test_pairs is None):
            raise ConfigError("give either 'pairs' or both 'train_pairs' and 'test_pairs'")
        if not 0 < self.test_fraction < 1:
            raise ConfigError("test_fraction must lie in (0, 1)")

    def path(self, name: str) -> Path:
        value = getattr(self, name)
        if value is None:
            raise ConfigError(f"config has no {name!r}")
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p

    def echo(self) -> dict:
        """Settings recorded in every artifact; ``workers`` only affects wall-clock time."""
        out = {f.name: getattr(self, f.name) for f in fields(self) if f.name not in ("base_dir", "workers")}
        return out

    @classmethod
    def load(cls, path: str | Path, overrides: dict | None = None) -> "PipelineConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
        known = {f.name for f in fields(cls)} - {"base_dir"}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
        return cls(**raw, base_dir=path.resolve().parent)

    def dump(self, path: str | Path) -> None:
        data = self.echo()
        Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def parse_ratio(value) -> Fraction:
    """``"0.0005"``, ``"1/2000"``, ``0.75`` -> exact fraction."""
    if isinstance(value, str):
        return Fraction(value.strip())
    return as_fraction(value)
