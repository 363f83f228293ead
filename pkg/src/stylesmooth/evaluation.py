"""Accuracy-versus-abstention curves and the experiments built on them.

A curve sweeps the abstention threshold over the distinct observed scores:
at threshold a, samples scoring below a are abstained and accuracy is taken
over the rest. The area integrates accuracy over the abstained fraction
with the trapezoid rule, holding the last accuracy constant up to 1.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .smoothing import StyleBank, consensus_profiles

AUC_CONVENTION = (
    "trapezoid over abstained fraction; accuracy held constant from the largest "
    "achievable abstained fraction up to 1.0"
)


@dataclass(frozen=True)
class ScoredPrediction:
    sample_id: str
    label: int
    predicted: int
    score: float

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise InputError(f"score must lie in [0, 1], got {self.score}")

    @property
    def correct(self) -> bool:
        return self.label == self.predicted


@dataclass
class RiskCoverageCurve:
    thresholds: np.ndarray
    abstain_fraction: np.ndarray
    accuracy: np.ndarray
    n_kept: np.ndarray
    auc: float

    def rows(self):
        for t, a, acc, k in zip(self.thresholds, self.abstain_fraction, self.accuracy, self.n_kept):
            yield float(t), float(a), float(acc), int(k)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["threshold", "abstain_fraction", "accuracy", "n_kept"])
            for t, a, acc, k in self.rows():
                writer.writerow([repr(t), repr(a), repr(acc), k])


def auc_from_points(abstain_fraction, accuracy) -> float:
    """Trapezoid area of (abstain, accuracy) points plus the constant extension to 1."""
    x = np.asarray(abstain_fraction, dtype=np.float64)
    y = np.asarray(accuracy, dtype=np.float64)
    if x.size == 0 or x.shape != y.shape:
        raise InputError("need matching, non-empty abstain/accuracy arrays")
    if x[0] != 0.0 or np.any(np.diff(x) <= 0) or x[-1] > 1.0:
        raise InputError("abstain fractions must start at 0 and increase strictly up to at most 1")
    area = float(np.sum(np.diff(x) * (y[1:] + y[:-1]) / 2.0))
    return area + float(y[-1]) * (1.0 - float(x[-1]))


def build_curve(preds: list[ScoredPrediction]) -> RiskCoverageCurve:
    if not preds:
        raise InputError("build_curve needs at least one prediction")
    scores = np.array([p.score for p in preds])
    correct = np.array([p.correct for p in preds], dtype=np.float64)
    order = np.argsort(scores, kind="stable")
    scores, correct = scores[order], correct[order]
    n = len(scores)
    thresholds = np.unique(scores)
    # abstained at threshold a = number of scores strictly below a
    first = np.searchsorted(scores, thresholds, side="left")
    kept_correct = np.cumsum(correct[::-1])[::-1]  # correct among sorted[i:]
    n_kept = n - first
    accuracy = kept_correct[first] / n_kept
    abstain = first / n
    return RiskCoverageCurve(thresholds, abstain, accuracy, n_kept, auc_from_points(abstain, accuracy))


def abstained_accuracy(preds: list[ScoredPrediction], alpha: float) -> float | None:
    """Accuracy of the recorded top class on samples scoring below ``alpha``; None if none abstain."""
    abstained = [p for p in preds if p.score < alpha]
    if not abstained:
        return None
    return sum(p.correct for p in abstained) / len(abstained)


def accuracy(preds: list[ScoredPrediction]) -> float:
    return sum(p.correct for p in preds) / len(preds)


def scored_from_counts(ids, labels, counts) -> list[ScoredPrediction]:
    counts = np.asarray(counts)
    top = np.argmax(counts, axis=1)
    share = counts.max(axis=1) / counts.sum(axis=1)
    return [ScoredPrediction(str(i), int(y), int(c), float(s)) for i, y, c, s in zip(ids, labels, top, share)]


def scored_from_proba(ids, labels, proba) -> list[ScoredPrediction]:
    proba = np.asarray(proba)
    top = np.argmax(proba, axis=1)
    conf = np.clip(proba.max(axis=1), 0.0, 1.0)
    return [ScoredPrediction(str(i), int(y), int(c), float(s)) for i, y, c, s in zip(ids, labels, top, conf)]


def first_threshold_above(preds: list[ScoredPrediction], floor: float) -> float | None:
    """Smallest realized score strictly above ``floor`` (e.g. 1/K)."""
    above = sorted({p.score for p in preds if p.score > floor})
    return above[0] if above else None


@dataclass
class SweepTable:
    n_values: list[int]
    seeds: list[int]
    aucs: dict[int, list[float]]

    def mean_auc(self, n: int) -> float:
        return float(np.mean(self.aucs[n]))

    def to_rows(self):
        for n in self.n_values:
            for seed, auc in zip(self.seeds, self.aucs[n]):
                yield n, seed, auc

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["n", "seed", "auc"])
            for n, seed, auc in self.to_rows():
                writer.writerow([n, seed, repr(auc)])

    def summary(self) -> dict:
        return {
            "n_values": list(self.n_values),
            "seeds": list(self.seeds),
            "per_seed_auc": {str(n): list(self.aucs[n]) for n in self.n_values},
            "mean_auc": {str(n): self.mean_auc(n) for n in self.n_values},
            "auc_convention": AUC_CONVENTION,
        }


DEFAULT_N_GRID = (1, 3, 5, 10, 15, 25)


def styles_sweep(X, y, f, stylizer, bank: StyleBank, n_values=DEFAULT_N_GRID, seeds=(0,), ids=None,
                 n_classes: int | None = None) -> SweepTable:
    """AUC of TT-NSS per number of styles n, one sampling pass per (n, seed)."""
    n_values = [int(n) for n in n_values]
    if not n_values:
        raise InputError("n_values must be non-empty")
    ids = list(ids) if ids is not None else [str(i) for i in range(len(y))]
    aucs: dict[int, list[float]] = {}
    for n in n_values:
        aucs[n] = []
        for seed in seeds:
            counts = consensus_profiles(X, f, stylizer, bank, n, seed, n_classes=n_classes)
            aucs[n].append(build_curve(scored_from_counts(ids, y, counts)).auc)
    return SweepTable(n_values, list(seeds), aucs)


@dataclass
class ComparisonRecord:
    seed: int
    classifier: str
    abstainer: str
    variant: str
    auc: float
    accuracy: float


def score_predictions(abstainer: str, X, y, ids, classifier, stylizer=None, bank=None, n_styles: int = 10,
                      seed: int = 0) -> list[ScoredPrediction]:
    """Scored predictions of one abstainer ('tt-nss' or 'confidence') on a dataset."""
    if abstainer == "tt-nss":
        counts = consensus_profiles(X, classifier, stylizer, bank, n_styles, seed)
        return scored_from_counts(ids, y, counts)
    if abstainer == "confidence":
        return scored_from_proba(ids, y, classifier.predict_proba(X))
    raise InputError(f"unknown abstainer {abstainer!r}")


def compare_methods(test_sets: dict, classifiers: dict, stylizer, bank: StyleBank, seed: int,
                    abstainers=("tt-nss", "confidence"), n_styles: int = 10) -> list[ComparisonRecord]:
    """AUC for every (classifier, abstainer, variant) cell for one trained seed.

    ``test_sets`` maps variant name to a Dataset; ``classifiers`` maps method
    name (erm, nss) to a fitted soft classifier.
    """
    records = []
    for cname, clf in classifiers.items():
        for aname in abstainers:
            for variant, data in test_sets.items():
                preds = score_predictions(aname, data.X, data.y, data.ids, clf, stylizer, bank, n_styles, seed)
                records.append(ComparisonRecord(seed, cname, aname, variant, build_curve(preds).auc, accuracy(preds)))
    return records


# directional pattern from the full-scale benchmark; never used as a target
REFERENCE_PATTERN = {
    "setting": "PACS, art domain, original style, ERM vs NSS under TT-NSS",
    "erm_auc": 0.875,
    "nss_auc": 0.884,
    "use": "directional pattern only; desk-scale numbers are not comparable",
}


def comparison_summary(records: list[ComparisonRecord]) -> dict:
    cells: dict[str, dict] = {}
    for r in records:
        key = f"{r.classifier}/{r.abstainer}/{r.variant}"
        cell = cells.setdefault(key, {"classifier": r.classifier, "abstainer": r.abstainer, "variant": r.variant,
                                      "seeds": [], "auc": [], "accuracy": []})
        cell["seeds"].append(r.seed)
        cell["auc"].append(r.auc)
        cell["accuracy"].append(r.accuracy)
    for cell in cells.values():
        cell["mean_auc"] = float(np.mean(cell["auc"]))
        cell["mean_accuracy"] = float(np.mean(cell["accuracy"]))
    return {"cells": [cells[k] for k in sorted(cells)], "auc_convention": AUC_CONVENTION,
            "reference_pattern": REFERENCE_PATTERN}


def write_comparison_csv(path, records: list[ComparisonRecord]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["seed", "classifier", "abstainer", "variant", "auc", "accuracy"])
        for r in records:
            writer.writerow([r.seed, r.classifier, r.abstainer, r.variant, repr(r.auc), repr(r.accuracy)])
