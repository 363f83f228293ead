import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import P, StyleIsOutput, ThresholdClassifier
from stylesmooth.errors import InputError
from stylesmooth.evaluation import (
    AUC_CONVENTION,
    REFERENCE_PATTERN,
    ScoredPrediction,
    abstained_accuracy,
    accuracy,
    auc_from_points,
    build_curve,
    comparison_summary,
    compare_methods,
    first_threshold_above,
    scored_from_counts,
    scored_from_proba,
    styles_sweep,
)
from stylesmooth.oracles import grid_auc
from stylesmooth.smoothing import StyleBank


scored = st.lists(st.tuples(st.integers(0, 20).map(lambda k: k / 20), st.booleans()), min_size=1, max_size=40).map(
    lambda rows: [P(s, c, i) for i, (s, c) in enumerate(rows)])


# ---- curve and AUC


def test_hand_curve_auc():
    assert auc_from_points([0.0, 1.0], [0.5, 1.0]) == 0.75


def test_all_correct_gives_auc_one():
    preds = [P(s, True, i) for i, s in enumerate([0.2, 0.5, 0.5, 1.0])]
    assert build_curve(preds).auc == 1.0
    assert grid_auc(preds, 1e-3) == 1.0


def test_equal_scores_give_single_point():
    preds = [P(0.7, c, i) for i, c in enumerate([True, False, True, True])]
    curve = build_curve(preds)
    assert curve.abstain_fraction.tolist() == [0.0]
    assert curve.auc == pytest.approx(0.75)


def test_curve_hand_example():
    preds = [P(0.5, False, 0), P(0.5, True, 1), P(0.9, True, 2), P(0.9, True, 3)]
    curve = build_curve(preds)
    assert curve.thresholds.tolist() == [0.5, 0.9]
    assert curve.abstain_fraction.tolist() == [0.0, 0.5]
    assert curve.accuracy.tolist() == [0.75, 1.0]
    assert curve.n_kept.tolist() == [4, 2]
    # trapezoid 0.5 * (0.75 + 1) / 2 plus the flat tail 0.5 * 1
    assert curve.auc == pytest.approx(0.9375)


def test_curve_csv(tmp_path):
    path = tmp_path / "c.csv"
    build_curve([P(0.5, False, 0), P(0.9, True, 1)]).to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "threshold,abstain_fraction,accuracy,n_kept"
    assert lines[1:] == ["0.5,0.0,0.5,2", "0.9,0.5,1.0,1"]


def test_input_errors():
    with pytest.raises(InputError):
        build_curve([])
    with pytest.raises(InputError):
        ScoredPrediction("a", 0, 0, 1.5)
    with pytest.raises(InputError):
        auc_from_points([0.1, 0.5], [1.0, 1.0])
    with pytest.raises(InputError):
        grid_auc([P(0.5, True)], 0.0)


@given(scored)
def test_curve_invariants(preds):
    curve = build_curve(preds)
    assert np.all(np.diff(curve.abstain_fraction) > 0)
    assert 0.0 <= curve.auc <= 1.0
    # grid refinement oracle
    assert abs(curve.auc - grid_auc(preds, 1e-3)) <= 1e-3


@given(scored, st.randoms(use_true_random=False))
def test_auc_invariant_to_ids_and_order(preds, rnd):
    shuffled = list(preds)
    rnd.shuffle(shuffled)
    renamed = [ScoredPrediction(f"x{j}", p.label, p.predicted, p.score) for j, p in enumerate(shuffled)]
    assert build_curve(renamed).auc == pytest.approx(build_curve(preds).auc, abs=1e-12)


def test_coarse_grid_is_bounded_by_accuracy_gap():
    rng = np.random.default_rng(0)
    preds = [P(float(s), bool(c), i) for i, (s, c) in
             enumerate(zip(rng.integers(0, 11, 200) / 10, rng.random(200) < 0.7))]
    fine, coarse = grid_auc(preds, 1e-3), grid_auc(preds, 0.5)
    acc = build_curve(preds).accuracy
    assert abs(fine - coarse) <= acc.max() - acc.min()


# ---- abstained accuracy


def test_abstained_accuracy_examples():
    preds = [P(0.5, False, 0), P(0.5, True, 1), P(0.9, True, 2), P(0.9, True, 3)]
    assert abstained_accuracy(preds, 0.6) == 0.5
    assert abstained_accuracy(preds, 0.0) is None
    assert abstained_accuracy(preds, 1.01) == accuracy(preds)


def test_first_threshold_above():
    preds = [P(s, True, i) for i, s in enumerate([0.2, 0.4, 0.4, 0.8])]
    assert first_threshold_above(preds, 0.2) == 0.4
    assert first_threshold_above(preds, 0.8) is None


def test_scored_conversions():
    counts = np.array([[3, 7], [5, 5]])
    out = scored_from_counts(["a", "b"], [1, 1], counts)
    assert [(p.predicted, p.score) for p in out] == [(1, 0.7), (0, 0.5)]
    out = scored_from_proba(["a"], [0], np.array([[0.6, 0.4]]))
    assert (out[0].predicted, out[0].score, out[0].correct) == (0, 0.6, True)


# ---- sweep and comparison


@pytest.fixture
def toy():
    f, stylizer = ThresholdClassifier([0.5]), StyleIsOutput()
    bank = StyleBank(np.linspace(0, 1, 10)[:, None, None, None] * np.ones((1, 1, 2, 2)))
    X = np.random.default_rng(0).uniform(-0.4, 0.4, size=(12, 1, 2, 2))
    y = (X.mean(axis=(1, 2, 3)) > 0).astype(int)
    return X, y, f, stylizer, bank


def test_styles_sweep(toy):
    X, y, f, stylizer, bank = toy
    table = styles_sweep(X, y, f, stylizer, bank, n_values=[1, 5, 25], seeds=[0, 1])
    assert set(table.aucs) == {1, 5, 25} and all(len(v) == 2 for v in table.aucs.values())
    again = styles_sweep(X, y, f, stylizer, bank, n_values=[1, 5, 25], seeds=[0, 1])
    assert table.aucs == again.aucs
    summary = table.summary()
    assert summary["auc_convention"] == AUC_CONVENTION
    assert summary["mean_auc"]["5"] == pytest.approx(np.mean(table.aucs[5]))
    with pytest.raises(InputError):
        styles_sweep(X, y, f, stylizer, bank, n_values=[])


def test_single_vote_scores_are_all_one(toy):
    X, y, f, stylizer, bank = toy
    from stylesmooth.evaluation import score_predictions

    preds = score_predictions("tt-nss", X, y, [str(i) for i in range(len(y))], f, stylizer, bank, 1)
    assert {p.score for p in preds} == {1.0}
    assert len(build_curve(preds).thresholds) == 1


def test_compare_methods_grid(toy):
    from stylesmooth.datagen import Dataset

    X, y, f, stylizer, bank = toy
    data = Dataset(X, y, ["T"] * len(y))
    records = compare_methods({"original": data, "c5": data}, {"erm": f, "nss": f}, stylizer, bank, seed=0)
    assert len(records) == 8
    summary = comparison_summary(records)
    assert len(summary["cells"]) == 8
    assert summary["reference_pattern"] == REFERENCE_PATTERN
    assert "directional" in REFERENCE_PATTERN["use"]
    with pytest.raises(InputError):
        compare_methods({"c5": data}, {"erm": f}, stylizer, bank, 0, abstainers=("bogus",))
