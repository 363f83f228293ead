"""Style-smoothed prediction with abstention, and the max-softmax baseline.

``tt_nss`` restyles a test image into n styles drawn uniformly with
replacement from a bank of source images, counts the base classifier's votes
and predicts the top class unless its vote share falls below ``alpha``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .errors import CapabilityError, ConfigError, InputError
from .models import has_softmax
from .validation import check_image, check_images

ABSTAIN = -1


@dataclass
class StyleBank:
    """Pooled source images used as the empirical style distribution."""

    images: np.ndarray
    domains: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.images = check_images(self.images, allow_empty=True)
        if self.images.shape[0] == 0:
            raise InputError("style bank is empty")
        if not self.domains:
            self.domains = ["source"] * len(self.images)
        if len(self.domains) != len(self.images):
            raise InputError("one domain tag per style image required")
        self._stats_cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def __len__(self) -> int:
        return self.images.shape[0]

    @classmethod
    def from_datasets(cls, datasets) -> "StyleBank":
        return cls(np.concatenate([d.X for d in datasets]), [t for d in datasets for t in d.domains])

    def stats_for(self, stylizer) -> tuple[np.ndarray, np.ndarray] | None:
        """Cached final-stage style statistics, when the stylizer exposes them."""
        if not hasattr(stylizer, "style_stats"):
            return None
        key = id(stylizer)
        if key not in self._stats_cache:
            self._stats_cache[key] = stylizer.style_stats(self.images)
        return self._stats_cache[key]


@dataclass(frozen=True)
class SmoothingConfig:
    n: int = 10
    alpha: float = 0.5
    seed: int = 0
    enumerate: bool = False

    def __post_init__(self):
        if int(self.n) < 1:
            raise ConfigError(f"n must be >= 1, got {self.n}")
        if not 0.0 <= float(self.alpha) <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")


@dataclass(frozen=True)
class Verdict:
    """Outcome of one abstaining prediction.

    ``label`` is the top class (kept for abstentions too, for abstained-sample
    accuracy); ``predicted`` tells whether it was returned.
    """

    predicted: bool
    label: int
    consensus: float
    counts: tuple[int, ...]

    @property
    def abstained(self) -> bool:
        return not self.predicted

    @property
    def n(self) -> int:
        return int(sum(self.counts))

    def to_json(self, sample_id) -> dict:
        return {
            "sample_id": sample_id,
            "verdict": "predict" if self.predicted else "abstain",
            "class": int(self.label) if self.predicted else None,
            "consensus": float(self.consensus),
            "counts": [int(c) for c in self.counts],
        }


def decide(counts, alpha: float) -> Verdict:
    """Top class with the lowest-index tie-break; abstain iff n_max / n < alpha."""
    counts = np.asarray(counts, dtype=np.int64)
    n = int(counts.sum())
    if n < 1:
        raise InputError("empty vote histogram")
    c_max = int(np.argmax(counts))
    consensus = counts[c_max] / n
    return Verdict(not consensus < alpha, c_max, float(consensus), tuple(int(c) for c in counts))


def _n_classes(f, n_classes: int | None) -> int:
    if n_classes is not None:
        return int(n_classes)
    classes = getattr(f, "classes_", None)
    if classes is None:
        raise InputError("n_classes is required for a classifier without classes_")
    return len(classes)


def _style_indices(rng_seed, bank_size: int, n: int, enumerate_bank: bool) -> np.ndarray:
    if enumerate_bank:
        return np.arange(bank_size)
    return np.random.default_rng(rng_seed).integers(0, bank_size, size=n)


def _stylize(stylizer, contents: np.ndarray, bank: StyleBank, style_idx: np.ndarray) -> np.ndarray:
    stats = bank.stats_for(stylizer)
    if stats is not None and hasattr(stylizer, "transform_with_stats"):
        return stylizer.transform_with_stats(contents, stats[0][style_idx], stats[1][style_idx])
    return stylizer.transform(contents, bank.images[style_idx])


def consensus_profile(x, f, stylizer, bank: StyleBank, n: int, seed=0, enumerate_bank: bool = False,
                      n_classes: int | None = None) -> np.ndarray:
    """Vote histogram of f over n restylings of one image.

    ``enumerate_bank`` replaces sampling by one pass over the whole bank (n is
    then the bank size).
    """
    if len(bank) == 0:
        raise InputError("style bank is empty")
    if int(n) < 1:
        raise ConfigError(f"n must be >= 1, got {n}")
    x = check_image(x)
    n_classes = _n_classes(f, n_classes)
    idx = _style_indices(seed, len(bank), int(n), enumerate_bank)
    stylized = _stylize(stylizer, np.repeat(x[None], len(idx), axis=0), bank, idx)
    labels = np.asarray(f.predict(stylized), dtype=np.int64)
    return np.bincount(labels, minlength=n_classes)


def tt_nss(x, f, stylizer, bank: StyleBank, cfg: SmoothingConfig, n_classes: int | None = None) -> Verdict:
    """Predict-or-abstain by majority vote over random restylings."""
    counts = consensus_profile(x, f, stylizer, bank, cfg.n, cfg.seed, cfg.enumerate, n_classes)
    return decide(counts, cfg.alpha)


def sample_seed(seed: int, index: int) -> np.random.SeedSequence:
    """Per-sample stream so batch evaluation draws the same styles in any order."""
    return np.random.SeedSequence([int(seed), int(index)])


def consensus_profiles(X, f, stylizer, bank: StyleBank, n: int, seed: int = 0, enumerate_bank: bool = False,
                       n_classes: int | None = None, chunk: int = 1024) -> np.ndarray:
    """N x K vote histograms; sample i uses the style stream ``sample_seed(seed, i)``."""
    X = check_images(X)
    if int(n) < 1:
        raise ConfigError(f"n must be >= 1, got {n}")
    n_classes = _n_classes(f, n_classes)
    per = len(bank) if enumerate_bank else int(n)
    style_idx = np.concatenate([_style_indices(sample_seed(seed, i), len(bank), per, enumerate_bank)
                                for i in range(X.shape[0])])
    content_idx = np.repeat(np.arange(X.shape[0]), per)
    labels = np.empty(len(style_idx), dtype=np.int64)
    stats = bank.stats_for(stylizer)
    # encode each test image once when the stylizer can decode from cached features
    feats = stylizer.content_features(X) if stats is not None and hasattr(stylizer, "decode_with_stats") else None
    for start in range(0, len(style_idx), chunk):
        sl = slice(start, start + chunk)
        if feats is None:
            stylized = _stylize(stylizer, X[content_idx[sl]], bank, style_idx[sl])
        else:
            stylized = stylizer.decode_with_stats(feats[content_idx[sl]], stats[0][style_idx[sl]],
                                                  stats[1][style_idx[sl]])
        labels[sl] = np.asarray(f.predict(stylized), dtype=np.int64)
    counts = np.zeros((X.shape[0], n_classes), dtype=np.int64)
    np.add.at(counts, (content_idx, labels), 1)
    return counts


def confidence_abstain(x, f, threshold: float) -> Verdict:
    """Predict the argmax on the raw image unless its softmax falls below ``threshold``.

    A single query; ``counts`` is the one-hot vote of that query and
    ``consensus`` the max softmax.
    """
    if not has_softmax(f):
        raise CapabilityError(f"{type(f).__name__} exposes labels only; confidence abstention needs a softmax")
    x = check_image(x)
    proba = np.asarray(f.predict_proba(x[None]))[0]
    label = int(np.argmax(proba))
    counts = [0] * len(proba)
    counts[label] = 1
    conf = float(proba[label])
    return Verdict(not conf < threshold, label, conf, tuple(counts))


def write_verdicts(path, sample_ids, verdicts) -> None:
    """JSON lines: sample_id, verdict, class, consensus, counts."""
    with open(path, "w") as fh:
        for sid, v in zip(sample_ids, verdicts):
            fh.write(json.dumps(v.to_json(sid), sort_keys=True) + "\n")


def read_verdicts(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


class StyleSmoothedClassifier(ClassifierMixin, BaseEstimator):
    """Abstaining classifier wrapping a black-box base classifier.

    ``fit(X)`` stores X as the style bank. ``predict`` returns ``abstain_label``
    on abstentions; ``decision_function`` returns the consensus n_max / n.

    Parameters
    ----------
    classifier : object with ``predict`` (and ``classes_`` or ``n_classes``)
    stylizer : fitted AdaINStylizer
    n_styles : int
    alpha : float in [0, 1]
    enumerate_styles : bool
        Use the whole bank once instead of sampling n styles.
    """

    def __init__(self, classifier, stylizer, n_styles=10, alpha=0.5, random_state=0,
                 enumerate_styles=False, n_classes=None, abstain_label=ABSTAIN):
        self.classifier = classifier
        self.stylizer = stylizer
        self.n_styles = n_styles
        self.alpha = alpha
        self.random_state = random_state
        self.enumerate_styles = enumerate_styles
        self.n_classes = n_classes
        self.abstain_label = abstain_label

    def fit(self, X, y=None, domains=None):
        SmoothingConfig(self.n_styles, self.alpha, self.random_state, self.enumerate_styles)
        self.bank_ = StyleBank(X, list(domains) if domains is not None else [])
        self.classes_ = np.arange(_n_classes(self.classifier, self.n_classes))
        return self

    def vote_counts(self, X) -> np.ndarray:
        check_is_fitted(self, "bank_")
        return consensus_profiles(X, self.classifier, self.stylizer, self.bank_, self.n_styles,
                                  self.random_state, self.enumerate_styles, len(self.classes_))

    def verdicts(self, X) -> list[Verdict]:
        return [decide(c, self.alpha) for c in self.vote_counts(X)]

    def decision_function(self, X) -> np.ndarray:
        counts = self.vote_counts(X)
        return counts.max(axis=1) / counts.sum(axis=1)

    def predict(self, X) -> np.ndarray:
        return np.array([v.label if v.predicted else self.abstain_label for v in self.verdicts(X)])


class ConfidenceAbstainer(ClassifierMixin, BaseEstimator):
    """Max-softmax thresholding on the unmodified input."""

    def __init__(self, classifier, threshold=0.5, abstain_label=ABSTAIN):
        self.classifier = classifier
        self.threshold = threshold
        self.abstain_label = abstain_label

    def fit(self, X=None, y=None):
        if not has_softmax(self.classifier):
            raise CapabilityError("confidence abstention needs a classifier with predict_proba")
        self.classes_ = np.asarray(getattr(self.classifier, "classes_", np.arange(2)))
        return self

    def predict_proba(self, X) -> np.ndarray:
        check_is_fitted(self, "classes_")
        return np.asarray(self.classifier.predict_proba(check_images(X)))

    def decision_function(self, X) -> np.ndarray:
        return self.predict_proba(X).max(axis=1)

    def verdicts(self, X) -> list[Verdict]:
        proba = self.predict_proba(X)
        out = []
        for p in proba:
            label = int(np.argmax(p))
            counts = [0] * len(p)
            counts[label] = 1
            out.append(Verdict(not p[label] < self.threshold, label, float(p[label]), tuple(counts)))
        return out

    def predict(self, X) -> np.ndarray:
        return np.array([v.label if v.predicted else self.abstain_label for v in self.verdicts(X)])
