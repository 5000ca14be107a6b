"""Region geometry, feature files and the planted-style synthetic generator."""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

MAGIC = b"MCF1"


class FeatureError(ValueError):
    """Raised for malformed feature files or invalid geometry."""


@dataclass(frozen=True)
class RegionGeometry:
    x: int
    y: int
    width: int
    height: int

    def as_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "width": self.width, "height": self.height}


@dataclass(frozen=True, eq=False)
class RegionFeature:
    geometry: RegionGeometry
    activation: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, RegionFeature):
            return NotImplemented
        return self.geometry == other.geometry and np.array_equal(self.activation, other.activation)

    __hash__ = None


def resized_dims(width: int, height: int, target: int = 256) -> tuple[int, int]:
    """Scale so the smaller side equals ``target``; the other side is floored."""
    if width <= 0 or height <= 0:
        raise FeatureError(f"image dimensions must be positive, got {width}x{height}")
    if width <= height:
        return target, (height * target) // width
    return (width * target) // height, target


def plan_regions(image_width: int, image_height: int, window: int = 128, stride: int = 32,
                 resize: int | None = 256) -> list[RegionGeometry]:
    """Sliding-window grid over the resized image, row-major.

    With ``resize=None`` the given dimensions are used as-is.
    """
    if window <= 0 or stride <= 0:
        raise FeatureError("window and stride must be positive")
    w, h = (image_width, image_height) if resize is None else resized_dims(image_width, image_height, resize)
    if window > w or window > h:
        raise FeatureError(f"window {window} larger than resized image {w}x{h}")
    return [
        RegionGeometry(x, y, window, window)
        for y in range(0, h - window + 1, stride)
        for x in range(0, w - window + 1, stride)
    ]


def region_count(image_width: int, image_height: int, window: int = 128, stride: int = 32,
                 resize: int | None = 256) -> int:
    w, h = (image_width, image_height) if resize is None else resized_dims(image_width, image_height, resize)
    return ((w - window) // stride + 1) * ((h - window) // stride + 1)


# ----------------------------------------------------------------------
# feature files
# ----------------------------------------------------------------------


def _check_values(vec: np.ndarray, where: str) -> None:
    if not np.all(np.isfinite(vec)):
        raise FeatureError(f"{where}: non-finite activation value")


def write_features_text(path: str | Path, regions: Sequence[RegionFeature], dim: int | None = None) -> None:
    dim = _infer_dim(regions, dim)
    lines = [f"dim={dim}\n"]
    for reg in regions:
        g = reg.geometry
        vals = " ".join(repr(float(v)) for v in reg.activation)
        lines.append(f"{g.x} {g.y} {g.width} {g.height} {vals}\n")
    Path(path).write_text("".join(lines))


def read_features_text(path: str | Path, expected_dim: int | None = None) -> list[RegionFeature]:
    text = Path(path).read_text().splitlines()
    if not text or not text[0].startswith("dim="):
        raise FeatureError(f"{path}: missing 'dim=<d>' header")
    try:
        dim = int(text[0][4:])
    except ValueError:
        raise FeatureError(f"{path}: bad header {text[0]!r}") from None
    if expected_dim is not None and dim != expected_dim:
        raise FeatureError(f"{path}: dimension {dim} does not match expected {expected_dim}")
    out = []
    for lineno, line in enumerate(text[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 4 + dim:
            raise FeatureError(f"{path}:{lineno}: expected {dim} values, got {len(parts) - 4}")
        try:
            x, y, w, h = (int(p) for p in parts[:4])
            vec = np.array([float(p) for p in parts[4:]], dtype=np.float64)
        except ValueError as exc:
            raise FeatureError(f"{path}:{lineno}: {exc}") from None
        _check_values(vec, f"{path}:{lineno}")
        out.append(RegionFeature(RegionGeometry(x, y, w, h), vec))
    return out


def write_features_binary(path: str | Path, regions: Sequence[RegionFeature], dim: int | None = None) -> None:
    dim = _infer_dim(regions, dim)
    chunks = [MAGIC, struct.pack("<II", dim, len(regions))]
    for reg in regions:
        g = reg.geometry
        chunks.append(struct.pack("<4I", g.x, g.y, g.width, g.height))
        chunks.append(np.asarray(reg.activation, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def read_features_binary(path: str | Path, expected_dim: int | None = None) -> list[RegionFeature]:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise FeatureError(f"{path}: bad magic {data[:4]!r}")
    if len(data) < 12:
        raise FeatureError(f"{path}: truncated header")
    dim, count = struct.unpack_from("<II", data, 4)
    if expected_dim is not None and dim != expected_dim:
        raise FeatureError(f"{path}: dimension {dim} does not match expected {expected_dim}")
    rec = 16 + 4 * dim
    if len(data) != 12 + rec * count:
        raise FeatureError(f"{path}: truncated file ({len(data)} bytes, expected {12 + rec * count})")
    out = []
    for i in range(count):
        off = 12 + i * rec
        x, y, w, h = struct.unpack_from("<4I", data, off)
        vec = np.frombuffer(data, dtype="<f4", count=dim, offset=off + 16).astype(np.float64)
        _check_values(vec, f"{path}: region {i}")
        out.append(RegionFeature(RegionGeometry(x, y, w, h), vec))
    return out


def load_features(path: str | Path, expected_dim: int | None = None) -> list[RegionFeature]:
    """Read either encoding, chosen by the leading magic bytes."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == MAGIC:
        return read_features_binary(path, expected_dim)
    return read_features_text(path, expected_dim)


def _infer_dim(regions: Sequence[RegionFeature], dim: int | None) -> int:
    if dim is None:
        if not regions:
            raise FeatureError("cannot infer dimension of an empty region list")
        dim = len(regions[0].activation)
    for reg in regions:
        if len(reg.activation) != dim:
            raise FeatureError(f"region dimension {len(reg.activation)} != {dim}")
        _check_values(np.asarray(reg.activation), "write")
    return dim


def stack(regions: Sequence[RegionFeature]) -> np.ndarray:
    """Activations as a ``(n_regions, d)`` float64 matrix."""
    if not regions:
        return np.empty((0, 0))
    return np.vstack([np.asarray(r.activation, dtype=np.float64) for r in regions])


# ----------------------------------------------------------------------
# synthetic generator
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticSpec:
    """Planted-style corpus description.

    Each (class, style) owns ``signature_size`` feature indices; signatures of
    one class are pairwise disjoint.  ``compat_table`` holds the compatible
    unordered ``((class, style), (class, style))`` pairs; anything absent is
    incompatible.
    """

    dim: int
    classes: tuple[str, ...]
    styles_per_class: int
    signature_size: int
    boost_range: tuple[float, float] = (0.5, 1.0)
    noise_level: float = 0.1
    compat_table: frozenset = field(default_factory=frozenset)
    seed: int = 0

    def __post_init__(self):
        if self.signature_size >= self.dim:
            raise FeatureError("signature_size must be smaller than dim")
        if self.styles_per_class * self.signature_size > self.dim:
            raise FeatureError("not enough dimensions for disjoint signatures")
        lo, hi = self.boost_range
        if lo > hi:
            raise FeatureError(f"bad boost_range {self.boost_range}")
        for pair in self.compat_table:
            for cls, style in pair:
                if cls not in self.classes or not 0 <= style < self.styles_per_class:
                    raise FeatureError(f"compat_table entry references unknown style {(cls, style)}")

    def signature(self, class_label: str, style: int) -> np.ndarray:
        """Sorted signature indices of ``(class_label, style)``."""
        if class_label not in self.classes:
            raise FeatureError(f"unknown class {class_label!r}")
        if not 0 <= style < self.styles_per_class:
            raise FeatureError(f"style {style} out of range for {self.styles_per_class} styles")
        ci = self.classes.index(class_label)
        perm = np.random.default_rng([self.seed, 7919, ci]).permutation(self.dim)
        q = self.signature_size
        return np.sort(perm[style * q:(style + 1) * q])

    def compatible(self, a: tuple[str, int], b: tuple[str, int]) -> bool:
        return frozenset((a, b)) in self.compat_table


def identity_table(classes: Sequence[str], styles: int) -> frozenset:
    """Style ``s`` of any class is compatible with style ``s`` of every other class."""
    entries = set()
    for i, ca in enumerate(classes):
        for cb in classes[i + 1:]:
            for s in range(styles):
                entries.add(frozenset(((ca, s), (cb, s))))
    return frozenset(entries)


def synth_features(spec: SyntheticSpec, class_label: str, style: int, regions: int, seed: int,
                   window: int = 128, stride: int = 32) -> list[RegionFeature]:
    """Generate ``regions`` planted feature vectors for one image.

    Each vector is uniform noise in ``[0, noise_level)``, plus a boost drawn
    from ``boost_range`` at every signature index, plus one distractor spike
    at a random non-signature index.  The spike height sits halfway between
    the noise ceiling and the lowest boost, so it always outranks the noise
    but never a signature entry.
    """
    sig = spec.signature(class_label, style)
    if regions <= 0:
        raise FeatureError("regions must be positive")
    rng = np.random.default_rng([seed, spec.seed])
    d = spec.dim
    lo, hi = spec.boost_range
    spike = 0.5 * (spec.noise_level + lo)
    others = np.setdiff1d(np.arange(d), sig)
    cols = 5
    rows = math.ceil(regions / cols)
    geoms = plan_regions(window + stride * (cols - 1), window + stride * (rows - 1),
                         window, stride, resize=None)[:regions]
    out = []
    for g in geoms:
        vec = rng.uniform(0.0, 1.0, d) * spec.noise_level
        vec[sig] += rng.uniform(lo, hi, len(sig)) if hi > lo else lo
        vec[others[rng.integers(len(others))]] += spike
        out.append(RegionFeature(g, vec))
    return out
