"""Per-seed experiment pipeline shared by the CLI and the acceptance suite.

A run for one seed builds the synthetic suite, fits the stylizer on pooled
source images, trains the ERM and NSS classifiers and exposes helpers to
score every (classifier, abstainer, variant) cell.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .config import validate
from .datagen import Suite, standard_suite
from .evaluation import ScoredPrediction, score_predictions
from .models import ToyClassifier
from .nss import NSSClassifier
from .smoothing import StyleBank, consensus_profile
from .stylizer import AdaINStylizer

METHODS = ("erm", "nss")
ABSTAINERS = ("tt-nss", "confidence")


def make_suite(cfg: dict, seed: int) -> Suite:
    d = cfg["data"]
    return standard_suite(seed, d["samples_per_class"], d["test_per_class"], d["corruption"])


def make_stylizer(cfg: dict, seed: int) -> AdaINStylizer:
    s = cfg["stylizer"]
    return AdaINStylizer(encoder_steps=s["encoder_steps"], encoder_lr=s["encoder_lr"],
                         decoder_steps=s["decoder_steps"], decoder_lr=s["decoder_lr"],
                         style_weight=s["style_weight"], batch_size=s["batch_size"], random_state=seed)


def make_classifier(cfg: dict, method: str, seed: int, stylizer: AdaINStylizer | None = None) -> ToyClassifier:
    c = cfg["classifier"]
    common = dict(n_filters=c["n_filters"], steps=c["steps"], learning_rate=c["learning_rate"],
                  batch_size=c["batch_size"], random_state=seed)
    if method == "erm":
        return ToyClassifier(**common)
    if method == "nss":
        n = cfg["nss"]
        return NSSClassifier(stylizer=stylizer, k=n["k"], w_aug=n["w_aug"], w_cons=n["w_cons"], **common)
    raise ValueError(f"unknown method {method!r}")


@dataclass
class SeedRun:
    seed: int
    suite: Suite
    stylizer: AdaINStylizer
    classifiers: dict[str, ToyClassifier]
    bank: StyleBank
    timings: dict[str, float] = field(default_factory=dict)

    def scored(self, method: str, abstainer: str, variant: str, n_styles: int) -> list[ScoredPrediction]:
        data = self.suite.variants[variant]
        return score_predictions(abstainer, data.X, data.y, data.ids, self.classifiers[method],
                                 self.stylizer, self.bank, n_styles, self.seed)


def run_seed(seed: int, cfg: dict | None = None) -> SeedRun:
    cfg = validate(cfg or {})
    timings = {}
    t0 = time.perf_counter()
    suite = make_suite(cfg, seed)
    pooled = suite.pooled_sources
    stylizer = make_stylizer(cfg, seed).fit(pooled.X)
    t1 = time.perf_counter()
    classifiers = {}
    for method in METHODS:
        start = time.perf_counter()
        classifiers[method] = make_classifier(cfg, method, seed, stylizer).fit(pooled.X, pooled.y)
        timings[f"train_{method}_s"] = time.perf_counter() - start
    timings["train_stylizer_s"] = t1 - t0
    return SeedRun(seed, suite, stylizer, classifiers, StyleBank.from_datasets(suite.sources), timings)


def per_sample_seconds(X, f, stylizer, bank: StyleBank, n: int, seed: int = 0) -> float:
    """Mean wall time of one tt_nss vote (n restylings plus n queries) per sample."""
    X = np.asarray(X)
    start = time.perf_counter()
    for i, x in enumerate(X):
        consensus_profile(x, f, stylizer, bank, n, np.random.SeedSequence([seed, i]))
    return (time.perf_counter() - start) / max(len(X), 1)
