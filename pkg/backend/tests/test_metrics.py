"""Tests for classification metrics and decoupling diagnostics."""
import csv
import json

import numpy as np
import pytest

from errors import MetricError
from evaluation import (
    FEATURE_KINDS,
    MetricReport,
    MetricSummary,
    accuracy,
    auc,
    evaluate,
    f1,
    feature_dump,
    pcc_matrix,
)
from evaluation.diagnostics import per_sample_correlation


def test_auc_textbook_case():
    """Three of four positive/negative pairs ordered correctly."""
    assert auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == pytest.approx(0.75)


def test_auc_counts_ties_as_half():
    """A tied pair contributes one half."""
    assert auc([0.2, 0.5, 0.5, 0.9], [0, 1, 0, 1]) == pytest.approx(0.875)
    assert auc([0.5] * 4, [0, 1, 0, 1]) == pytest.approx(0.5)


def test_auc_perfect_and_inverted():
    """Perfect ranking gives 1, reversed ranking gives 0."""
    assert auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
    assert auc([0.9, 0.8, 0.2, 0.1], [0, 0, 1, 1]) == 0.0


def test_auc_single_class_is_undefined():
    """One class only raises a metric error."""
    with pytest.raises(MetricError):
        auc([0.1, 0.9], [1, 1])


def _random_sets(count=50, size=100, seed=11):
    """Scores rounded to two decimals so ties occur; both classes always present."""
    rng = np.random.default_rng(seed)
    for _ in range(count):
        labels = rng.integers(0, 2, size=size)
        labels[:2] = (0, 1)
        scores = np.round(rng.uniform(size=size) * 0.6 + 0.4 * labels * rng.uniform(size=size), 2)
        yield scores, labels


def _pairwise_auc(scores, labels):
    positives = [s for s, y in zip(scores, labels) if y == 1]
    negatives = [s for s, y in zip(scores, labels) if y == 0]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in positives for n in negatives)
    return wins / (len(positives) * len(negatives))


def test_metrics_match_counting_oracles():
    """AUC by pair counting and F1/accuracy by explicit tallies agree on random sets."""
    for scores, labels in _random_sets():
        tp = sum(1 for s, y in zip(scores, labels) if s >= 0.5 and y == 1)
        fp = sum(1 for s, y in zip(scores, labels) if s >= 0.5 and y == 0)
        fn = sum(1 for s, y in zip(scores, labels) if s < 0.5 and y == 1)
        expected_f1 = 2 * tp / (2 * tp + fp + fn) if tp else 0.0
        expected_accuracy = sum(1 for s, y in zip(scores, labels) if (s >= 0.5) == (y == 1)) / len(labels)
        assert auc(scores, labels) == pytest.approx(_pairwise_auc(scores, labels), abs=1e-9)
        assert f1(scores, labels) == pytest.approx(expected_f1, abs=1e-9)
        assert accuracy(scores, labels) == pytest.approx(expected_accuracy, abs=1e-9)


def test_auc_depends_only_on_ranks():
    """Strictly increasing transforms keep AUC; negated scores give 1 - AUC."""
    for scores, labels in _random_sets(count=10):
        value = auc(scores, labels)
        assert auc(np.exp(3.0 * scores) - 7.0, labels) == pytest.approx(value, abs=1e-12)
        assert auc(scores**3, labels) == pytest.approx(value, abs=1e-12)
        assert value + auc(-scores, labels) == pytest.approx(1.0, abs=1e-12)


def test_f1_and_accuracy_at_threshold():
    """A score of exactly 0.5 is predicted positive."""
    scores = [0.9, 0.6, 0.4, 0.2, 0.5]
    labels = [1, 0, 1, 0, 0]
    assert f1(scores, labels) == pytest.approx(0.4)
    assert accuracy(scores, labels) == pytest.approx(0.4)


def test_f1_without_positive_predictions():
    """No predicted positives gives F1 0, not a division error."""
    assert f1([0.1, 0.2], [1, 0]) == 0.0


def test_evaluate_returns_all_metrics():
    """evaluate bundles AUC, F1 and accuracy."""
    result = evaluate([0.1, 0.9], [0, 1])
    assert result == {"auc": 1.0, "f1": 1.0, "accuracy": 1.0}


@pytest.mark.parametrize(
    "scores,labels",
    [([0.1, 0.2], [1]), ([], []), ([0.3, 0.4], [0, 2])],
)
def test_metric_input_errors(scores, labels):
    """Length mismatches, empty input and non-binary labels are metric errors."""
    with pytest.raises(MetricError):
        accuracy(scores, labels)


def test_summary_of_identical_folds_has_zero_std():
    """Equal fold values give that value as the mean and std 0."""
    summary = MetricSummary.from_folds([0.7, 0.7, 0.7])
    assert summary.mean == 0.7
    assert summary.std == 0.0


def test_summary_uses_population_std():
    """std divides by the fold count."""
    summary = MetricSummary.from_folds([0.6, 0.8])
    assert summary.mean == pytest.approx(0.7)
    assert summary.std == pytest.approx(0.1)
    assert summary.render() == "0.700(0.100)"


def test_summary_needs_values():
    """No folds, no summary."""
    with pytest.raises(MetricError):
        MetricSummary.from_folds([])


def test_report_csv(tmp_path):
    """metrics.csv has one row per metric with fold columns, mean and std."""
    report = MetricReport.from_fold_metrics(
        [{"auc": 0.8, "f1": 0.5, "accuracy": 0.6}, {"auc": 0.9, "f1": 0.7, "accuracy": 0.8}]
    )
    path = report.write_csv(tmp_path / "metrics.csv")
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["metric", "fold_0", "fold_1", "mean", "std"]
    assert [row[0] for row in rows[1:]] == ["auc", "f1", "accuracy"]
    assert float(rows[1][1]) == 0.8


def _features(rng, n=6, m=5):
    related = rng.normal(size=(n, m))
    return {
        "img_related": related,
        "tab_related": related.copy(),
        "img_unrelated": -related,
        "tab_unrelated": rng.normal(size=(n, m)),
    }


def test_pcc_matrix_shape_and_symmetry(rng):
    """4x4, symmetric, unit diagonal, entries in [0, 1]."""
    pcc = pcc_matrix(_features(rng))
    matrix = np.array(pcc.matrix)
    assert pcc.kinds == list(FEATURE_KINDS)
    assert matrix.shape == (4, 4)
    np.testing.assert_allclose(matrix, matrix.T)
    np.testing.assert_array_equal(np.diag(matrix), 1.0)
    assert np.all((matrix >= 0) & (matrix <= 1 + 1e-12))
    assert pcc.n_samples == 6


def test_pcc_identical_and_negated_features(rng):
    """Identical parts correlate at 1; a negated copy is 1 in absolute and -1 signed."""
    pcc = pcc_matrix(_features(rng))
    assert pcc.entry("img_related", "tab_related") == pytest.approx(1.0)
    assert pcc.entry("img_related", "img_unrelated") == pytest.approx(1.0)
    signed = np.array(pcc.signed)
    assert signed[0, 2] == pytest.approx(-1.0)


def test_independent_features_correlate_weakly():
    """Mean |r| of independent 64-dim features stays well under 0.2."""
    rng = np.random.default_rng(5)
    features = {kind: rng.normal(size=(300, 64)) for kind in FEATURE_KINDS}
    matrix = np.array(pcc_matrix(features).matrix)
    off_diagonal = matrix[~np.eye(4, dtype=bool)]
    assert np.all(off_diagonal < 0.2)


def test_constant_rows_correlate_as_zero():
    """Zero-variance samples contribute r = 0 instead of NaN."""
    r = per_sample_correlation(np.ones((2, 3)), np.array([[1.0, 2.0, 3.0], [3.0, 1.0, 2.0]]))
    np.testing.assert_array_equal(r, [0.0, 0.0])


@pytest.mark.parametrize("n,m", [(1, 4), (4, 1)])
def test_pcc_too_little_data(n, m, rng):
    """At least two samples and two dims are required."""
    with pytest.raises(MetricError):
        pcc_matrix(_features(rng, n=n, m=m))


def test_pcc_missing_kind(rng):
    """All four feature kinds must be present."""
    features = _features(rng)
    del features["tab_unrelated"]
    with pytest.raises(MetricError):
        pcc_matrix(features)


def test_pcc_json_round_trip(tmp_path, rng):
    """pcc.json carries kinds, both matrices and the sample count."""
    pcc = pcc_matrix(_features(rng))
    raw = json.loads(pcc.write_json(tmp_path / "pcc.json").read_text())
    assert set(raw) == {"kinds", "matrix", "signed", "n_samples"}
    assert raw["matrix"] == pcc.matrix


def test_feature_dump_rows(tmp_path, rng):
    """Four rows per case in kind order, one column per dim."""
    features = _features(rng, n=3, m=2)
    path = feature_dump(["a", "b", "c"], features, tmp_path / "out" / "features.csv")
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["case_id", "feature_kind", "dim_0", "dim_1"]
    assert len(rows) == 1 + 12
    assert [row[1] for row in rows[1:5]] == list(FEATURE_KINDS)
    assert float(rows[1][2]) == features["img_related"][0, 0]


def test_feature_dump_shape_mismatch(tmp_path, rng):
    """Feature rows must match the case count."""
    with pytest.raises(MetricError):
        feature_dump(["a", "b"], _features(rng, n=3), tmp_path / "features.csv")
