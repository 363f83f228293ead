"""Synthetic multi-domain images: the class fixes a binary motif, the domain fixes its style.

A domain's style is a per-channel affine map (gain, bias) plus iid texture
noise and an optional box blur, i.e. exactly the kind of channel-statistics
change AdaIN manipulates. Corruptions are severity-indexed perturbations
applied on top of a rendered dataset.
"""

from __future__ import annotations

import json
import os
import zlib
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.ndimage import gaussian_filter, uniform_filter

from .checkpoint import tensor_from_json, tensor_to_json
from .errors import ConfigError, InputError

BAR_WIDTH = 3

MOTIFS = ("vertical_bars", "horizontal_bars", "diagonal_bars", "cross", "rings", "checkers")

SEVERITY_TABLE = {
    # noise standard deviation
    "gaussian_noise": (0.05, 0.1, 0.2, 0.35, 0.5),
    # gaussian blur sigma in pixels
    "blur": (0.5, 0.75, 1.0, 1.5, 2.0),
    # contrast gain around the per-image channel mean; smaller is stronger
    "contrast": (0.75, 0.6, 0.45, 0.3, 0.2),
}


def motif(name: str, height: int, width: int) -> np.ndarray:
    """Binary H x W template for one class."""
    r, c = np.mgrid[0:height, 0:width]
    w = BAR_WIDTH
    if name == "vertical_bars":
        t = (c // w) % 2 == 0
    elif name == "horizontal_bars":
        t = (r // w) % 2 == 0
    elif name == "checkers":
        t = ((r // w) + (c // w)) % 2 == 0
    elif name == "diagonal_bars":
        t = ((r + c) // w) % 2 == 0
    elif name == "rings":
        radius = np.hypot(r - (height - 1) / 2, c - (width - 1) / 2)
        t = (np.floor(radius / w) % 2) == 0
    elif name == "cross":
        mid_r, mid_c = height // 2, width // 2
        t = (np.abs(r - mid_r + 0.5) < 2) | (np.abs(c - mid_c + 0.5) < 2)
    else:
        raise ConfigError(f"unknown motif {name!r}")
    return t.astype(np.float64)


def templates(n_classes: int, height: int, width: int) -> np.ndarray:
    if n_classes > len(MOTIFS):
        raise ConfigError(f"{n_classes} classes requested but only {len(MOTIFS)} motifs exist")
    return np.stack([motif(MOTIFS[k], height, width) for k in range(n_classes)])


@dataclass(frozen=True)
class DomainSpec:
    domain_id: str
    gain: tuple[float, ...]
    bias: tuple[float, ...]
    noise: float = 0.1
    blur: int = 1
    jitter: float = 0.0
    n_classes: int = 5
    shape: tuple[int, int, int] = (3, 16, 16)

    def __post_init__(self):
        c = self.shape[0]
        if len(self.gain) != c or len(self.bias) != c:
            raise ConfigError(f"domain {self.domain_id}: gain/bias need {c} entries")
        if any(g <= 0 for g in self.gain):
            raise ConfigError(f"domain {self.domain_id}: gains must be positive")
        if self.blur < 1 or self.blur % 2 == 0:
            raise ConfigError(f"domain {self.domain_id}: blur width must be odd and >= 1")
        if self.noise < 0 or self.jitter < 0:
            raise ConfigError(f"domain {self.domain_id}: noise and jitter must be non-negative")


@dataclass(frozen=True)
class CorruptionSpec:
    kind: str
    severity: int

    def __post_init__(self):
        if self.kind not in SEVERITY_TABLE:
            raise ConfigError(f"unknown corruption kind {self.kind!r}; choose from {sorted(SEVERITY_TABLE)}")
        if self.severity not in range(1, 6):
            raise ConfigError(f"severity must be 1..5, got {self.severity}")

    @property
    def magnitude(self) -> float:
        return SEVERITY_TABLE[self.kind][self.severity - 1]


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    domains: list[str]
    ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.ids:
            self.ids = [f"{d}-{i:05d}" for i, d in enumerate(self.domains)]

    def __len__(self) -> int:
        return len(self.y)

    def subset(self, index) -> "Dataset":
        index = np.asarray(index)
        return Dataset(self.X[index], self.y[index], [self.domains[i] for i in index], [self.ids[i] for i in index])

    @classmethod
    def concat(cls, parts: list["Dataset"]) -> "Dataset":
        if not parts:
            raise InputError("nothing to concatenate")
        return cls(
            np.concatenate([p.X for p in parts]),
            np.concatenate([p.y for p in parts]),
            [d for p in parts for d in p.domains],
            [i for p in parts for i in p.ids],
        )


def _box_blur(X: np.ndarray, width: int) -> np.ndarray:
    if width == 1:
        return X
    return uniform_filter(X, size=(1, 1, width, width), mode="nearest")


def render(spec: DomainSpec, labels: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    c, h, w = spec.shape
    base = templates(spec.n_classes, h, w)[labels][:, None]  # N, 1, H, W
    n = len(labels)
    # per-image style jitter around the domain's nominal gain and bias
    gain = np.asarray(spec.gain)[None, :] * (1 + spec.jitter * rng.standard_normal((n, c)))
    bias = np.asarray(spec.bias)[None, :] + spec.jitter * rng.standard_normal((n, c))
    X = np.abs(gain)[:, :, None, None] * base + bias[:, :, None, None]
    X = X + spec.noise * rng.standard_normal(X.shape)
    return _box_blur(X, spec.blur)


def generate_domain(spec: DomainSpec, samples_per_class: int, seed: int) -> Dataset:
    """Render ``samples_per_class`` images of every class in the domain's style."""
    if samples_per_class < 1:
        raise InputError("samples_per_class must be >= 1")
    labels = np.repeat(np.arange(spec.n_classes), samples_per_class)
    rng = np.random.default_rng(np.random.SeedSequence([seed, _stable_hash(spec.domain_id)]))
    X = render(spec, labels, rng)
    return Dataset(X, labels, [spec.domain_id] * len(labels))


def _stable_hash(text: str) -> int:
    return zlib.crc32(text.encode("utf-8"))


def apply_contrast(X: np.ndarray, gain: float) -> np.ndarray:
    mean = X.mean(axis=(2, 3), keepdims=True)
    return (X - mean) * gain + mean


def corrupt(data: Dataset, spec: CorruptionSpec, seed: int) -> Dataset:
    """Severity-indexed perturbation; labels are preserved."""
    m = spec.magnitude
    if spec.kind == "gaussian_noise":
        rng = np.random.default_rng(np.random.SeedSequence([seed, spec.severity, 7]))
        X = data.X + m * rng.standard_normal(data.X.shape)
    elif spec.kind == "blur":
        X = gaussian_filter(data.X, sigma=(0, 0, m, m), mode="nearest")
    else:
        X = apply_contrast(data.X, m)
    tag = f"{spec.kind}{spec.severity}"
    return Dataset(X, data.y.copy(), [f"{d}+{tag}" for d in data.domains], [f"{i}+{tag}" for i in data.ids])


SOURCE_SPECS = (
    DomainSpec("S1", gain=(1.0, 0.8, 0.6), bias=(0.0, 0.1, 0.2), noise=0.1, blur=1, jitter=0.1),
    DomainSpec("S2", gain=(0.6, 1.0, 0.8), bias=(0.2, 0.0, 0.1), noise=0.15, blur=1, jitter=0.1),
    DomainSpec("S3", gain=(0.8, 0.6, 1.0), bias=(0.1, 0.2, 0.0), noise=0.1, blur=3, jitter=0.1),
)
TARGET_SPEC = DomainSpec("T", gain=(1.4, 0.3, 0.5), bias=(-0.2, 0.7, 0.6), noise=0.1, blur=1, jitter=0.1)
TARGET_STYLE_SPEC = replace(TARGET_SPEC, domain_id="T_style", gain=(0.3, 1.7, 0.45), bias=(0.7, -0.4, 0.5))


@dataclass
class Suite:
    sources: list[Dataset]
    source_test: Dataset
    variants: dict[str, Dataset]
    seed: int

    @property
    def pooled_sources(self) -> Dataset:
        return Dataset.concat(self.sources)

    @property
    def target(self) -> Dataset:
        return self.variants["original"]


VARIANTS = ("original", "styled", "c3", "c5")


def standard_suite(seed: int, samples_per_class: int = 40, test_per_class: int = 30,
                   corruption: str = "gaussian_noise") -> Suite:
    """Source domains S1..S3, held-out source test data, and the target variants.

    ``variants`` maps original / styled / c3 / c5 to the unseen domain T, T
    restyled with unseen parameters, and T corrupted at severities 3 and 5.
    """
    sources = [generate_domain(s, samples_per_class, seed) for s in SOURCE_SPECS]
    held_out = Dataset.concat([generate_domain(s, max(1, test_per_class // len(SOURCE_SPECS)), seed + 10_000)
                               for s in SOURCE_SPECS])
    target = generate_domain(TARGET_SPEC, test_per_class, seed)
    # same noise draw as T so the two differ only in style parameters
    styled_rng = np.random.default_rng(np.random.SeedSequence([seed, _stable_hash(TARGET_SPEC.domain_id)]))
    styled_X = render(TARGET_STYLE_SPEC, target.y, styled_rng)
    styled = Dataset(styled_X, target.y.copy(), ["T_style"] * len(target), [f"T_style-{i:05d}" for i in range(len(target))])
    variants = {
        "original": target,
        "styled": styled,
        "c3": corrupt(target, CorruptionSpec(corruption, 3), seed),
        "c5": corrupt(target, CorruptionSpec(corruption, 5), seed),
    }
    return Suite(sources, held_out, variants, seed)


def export_dataset(data: Dataset, directory: str | os.PathLike) -> None:
    """Write one JSON tensor file per image plus ``manifest.json``."""
    os.makedirs(os.path.join(directory, "images"), exist_ok=True)
    for ident, x in zip(data.ids, data.X):
        with open(os.path.join(directory, "images", f"{ident}.json"), "w") as fh:
            json.dump(tensor_to_json(x), fh)
    manifest = {
        "ids": list(data.ids),
        "labels": [int(v) for v in data.y],
        "domains": list(data.domains),
        "shape": list(data.X.shape[1:]),
    }
    with open(os.path.join(directory, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=1)


def load_dataset(directory: str | os.PathLike) -> Dataset:
    path = os.path.join(directory, "manifest.json")
    if not os.path.exists(path):
        raise InputError(f"no dataset manifest at {path}")
    with open(path) as fh:
        manifest = json.load(fh)
    images = []
    for ident in manifest["ids"]:
        with open(os.path.join(directory, "images", f"{ident}.json")) as fh:
            images.append(tensor_from_json(json.load(fh)))
    shape = tuple(manifest["shape"])
    X = np.stack(images) if images else np.zeros((0, *shape))
    return Dataset(X, np.asarray(manifest["labels"], dtype=np.int64), list(manifest["domains"]), list(manifest["ids"]))
