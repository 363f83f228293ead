import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import StyleIsOutput, ThresholdClassifier
from stylesmooth.errors import CapabilityError, ConfigError, InputError
from stylesmooth.models import LabelOnlyClassifier
from stylesmooth.oracles import exact_smoothed_prediction
from stylesmooth.smoothing import (
    ABSTAIN,
    ConfidenceAbstainer,
    SmoothingConfig,
    StyleBank,
    StyleSmoothedClassifier,
    confidence_abstain,
    consensus_profile,
    consensus_profiles,
    decide,
    read_verdicts,
    tt_nss,
    write_verdicts,
)
from stylesmooth.stylizer import AdaINStylizer


def bank_of_levels(levels):
    return StyleBank(np.asarray(levels, dtype=float)[:, None, None, None] * np.ones((1, 1, 2, 2)))


X0 = np.zeros((1, 2, 2))


# ---- decide


def test_decide_hand_example():
    v = decide([2, 1], 0.6)
    assert v.predicted and v.label == 0 and v.consensus == pytest.approx(2 / 3)
    assert decide([2, 1], 0.7).abstained


def test_decide_predicts_on_equality_and_breaks_ties_low():
    assert decide([1, 1], 0.5).predicted
    assert decide([0, 3, 3], 0.5).label == 1


@given(st.lists(st.integers(0, 20), min_size=2, max_size=6).filter(lambda c: sum(c) > 0))
def test_decide_invariants(counts):
    k = len(counts)
    v = decide(counts, 0.0)
    assert v.predicted
    assert decide(counts, 1.0 / k).predicted
    assert 1.0 / k - 1e-12 <= v.consensus <= 1.0
    assert v.n == sum(counts)


@given(st.lists(st.integers(0, 20), min_size=2, max_size=5).filter(lambda c: sum(c) > 0),
       st.floats(0, 1), st.floats(0, 1))
def test_abstention_monotone_in_alpha(counts, a, b):
    lo, hi = min(a, b), max(a, b)
    if decide(counts, lo).abstained:
        assert decide(counts, hi).abstained


def test_decide_rejects_empty_histogram():
    with pytest.raises(InputError):
        decide([0, 0], 0.5)


# ---- tt_nss and profiles


def test_tt_nss_query_budget_and_histogram():
    f, stylizer = ThresholdClassifier([0.5]), StyleIsOutput()
    bank = bank_of_levels([0.0, 1.0, 0.2])
    v = tt_nss(X0, f, stylizer, bank, SmoothingConfig(n=7, alpha=0.5, seed=3))
    assert f.queries == 7 and stylizer.calls == 7
    assert sum(v.counts) == 7


def test_profile_is_deterministic_per_seed():
    f, stylizer = ThresholdClassifier([0.5]), StyleIsOutput()
    bank = bank_of_levels(np.linspace(0, 1, 9))
    a = consensus_profile(X0, f, stylizer, bank, 25, seed=4)
    assert np.array_equal(a, consensus_profile(X0, f, stylizer, bank, 25, seed=4))
    assert a.sum() == 25


def test_constant_classifier_gives_one_bin():
    f = ThresholdClassifier([10.0, 20.0])
    counts = consensus_profile(X0, f, StyleIsOutput(), bank_of_levels([0.1, 0.3]), 12, seed=0)
    assert counts.tolist() == [12, 0, 0]


def test_labels_only_classifier_is_enough():
    f = LabelOnlyClassifier(ThresholdClassifier([0.5]))
    counts = consensus_profile(X0, f, StyleIsOutput(), bank_of_levels([0.0, 1.0]), 10, seed=1, n_classes=2)
    assert counts.sum() == 10


def test_error_cases():
    f = ThresholdClassifier([0.5])
    with pytest.raises(InputError):
        StyleBank(np.zeros((0, 1, 2, 2)))
    with pytest.raises(ConfigError):
        SmoothingConfig(n=0)
    with pytest.raises(ConfigError):
        SmoothingConfig(alpha=1.5)
    with pytest.raises(ConfigError):
        consensus_profile(X0, f, StyleIsOutput(), bank_of_levels([0.0]), 0)


def test_batch_profiles_match_single_calls():
    f, stylizer = ThresholdClassifier([0.3, 0.6]), StyleIsOutput()
    bank = bank_of_levels(np.linspace(0, 1, 11))
    X = np.random.default_rng(0).uniform(-0.2, 0.2, size=(6, 1, 2, 2))
    batch = consensus_profiles(X, f, stylizer, bank, 9, seed=5, chunk=4)
    for i, x in enumerate(X):
        single = consensus_profile(x, f, stylizer, bank, 9, seed=np.random.SeedSequence([5, i]))
        assert np.array_equal(batch[i], single)
    # reordering samples does not change any sample's draws once it is keyed by index
    assert np.array_equal(consensus_profiles(X[:3], f, stylizer, bank, 9, seed=5), batch[:3])


def test_enumeration_matches_oracle_with_real_stylizer():
    rng = np.random.default_rng(0)
    images = rng.uniform(size=(20, 3, 6, 6))
    stylizer = AdaINStylizer(widths=(4, 6, 6), encoder_steps=0, decoder_steps=0).fit(images)
    f = ThresholdClassifier(list(np.quantile(stylizer.transform(images, images[::-1]).mean(axis=(1, 2, 3)), [0.3, 0.7])))
    bank = StyleBank(images)
    X = rng.uniform(size=(15, 3, 6, 6))
    counts = consensus_profiles(X, f, stylizer, bank, 1, enumerate_bank=True)
    for x, c in zip(X, counts):
        label, probs = exact_smoothed_prediction(x, f, stylizer, bank)
        assert decide(c, 0.0).label == label
        assert np.allclose(c / c.sum(), probs, atol=1e-12)


def test_concentration_around_oracle():
    # 15 of 20 styles vote class 0: oracle margin 0.75 vs 0.25
    f, stylizer = ThresholdClassifier([0.5]), StyleIsOutput()
    bank = bank_of_levels([0.0] * 15 + [1.0] * 5)
    oracle, probs = exact_smoothed_prediction(X0, f, stylizer, bank)
    assert oracle == 0 and probs == [0.75, 0.25]
    hits = sum(decide(consensus_profile(X0, f, stylizer, bank, 200, seed=t), 0.0).label == oracle
               for t in range(500))
    assert hits / 500 >= 0.99


# ---- confidence baseline


class Fixed:
    classes_ = np.arange(2)

    def __init__(self, p):
        self.p = np.asarray(p)

    def predict_proba(self, X):
        return np.tile(self.p, (len(X), 1))


def test_confidence_examples():
    f = Fixed([0.55, 0.45])
    assert confidence_abstain(X0, f, 0.6).abstained
    v = confidence_abstain(X0, f, 0.5)
    assert v.predicted and v.label == 0 and v.consensus == pytest.approx(0.55)
    assert confidence_abstain(X0, f, 0.0).predicted
    assert confidence_abstain(X0, f, 1.01).abstained


def test_confidence_needs_softmax():
    with pytest.raises(CapabilityError):
        confidence_abstain(X0, LabelOnlyClassifier(Fixed([0.5, 0.5])), 0.5)
    with pytest.raises(CapabilityError):
        ConfidenceAbstainer(LabelOnlyClassifier(Fixed([0.5, 0.5]))).fit()


def test_confidence_issues_one_query():
    f = ThresholdClassifier([0.5])
    confidence_abstain(X0, f, 0.5)
    assert f.queries == 1


# ---- estimators and serialization


def test_smoothed_classifier_estimator():
    f, stylizer = ThresholdClassifier([0.5]), StyleIsOutput()
    styles = np.concatenate([np.zeros((3, 1, 2, 2)), np.ones((1, 1, 2, 2))])
    X = np.zeros((4, 1, 2, 2))
    model = StyleSmoothedClassifier(f, stylizer, n_styles=4, alpha=0.0, enumerate_styles=True).fit(styles)
    assert model.predict(X).tolist() == [0, 0, 0, 0]
    assert np.allclose(model.decision_function(X), 0.75)
    strict = StyleSmoothedClassifier(f, stylizer, alpha=0.8, enumerate_styles=True).fit(styles)
    assert strict.predict(X).tolist() == [ABSTAIN] * 4


def test_confidence_estimator():
    model = ConfidenceAbstainer(Fixed([0.3, 0.7]), threshold=0.8).fit()
    assert model.predict(np.zeros((2, 1, 2, 2))).tolist() == [ABSTAIN, ABSTAIN]
    assert np.allclose(model.decision_function(np.zeros((1, 1, 2, 2))), 0.7)


def test_verdict_json_lines_roundtrip(tmp_path):
    path = tmp_path / "v.jsonl"
    write_verdicts(path, ["a", "b"], [decide([3, 1], 0.5), decide([2, 2], 0.9)])
    rows = read_verdicts(path)
    assert rows[0] == {"sample_id": "a", "verdict": "predict", "class": 0, "consensus": 0.75, "counts": [3, 1]}
    assert rows[1]["verdict"] == "abstain" and rows[1]["class"] is None
    assert all(set(json.loads(line)) == set(rows[0]) for line in path.read_text().splitlines())
