"""Tests for detection metrics."""
from pathlib import Path

import numpy as np
import pytest

from anomaly_filter.exceptions import ConfigError, DataError, MetricError
from anomaly_filter.metrics import (
    MetricsConfig,
    MetricsReport,
    evaluate,
    f1_best,
    labels_from_segments,
    range_auc,
    range_f,
    range_precision_recall,
    roc_pr_auc,
    segments,
    soft_labels,
    threshold_grid,
    ucr_accuracy,
    vus,
)

sklearn_metrics = pytest.importorskip("sklearn.metrics")


def _labelled(rng: np.random.Generator, n: int = 200) -> tuple[np.ndarray, np.ndarray]:
    labels = np.zeros(n, dtype=int)
    labels[40:52] = 1
    labels[130:133] = 1
    scores = rng.random(n) + 0.8 * labels
    return scores, labels


@pytest.mark.parametrize("seed", range(5))
def test_roc_pr_match_sklearn(seed: int) -> None:
    """Continuous scores agree with the reference implementation."""
    scores, labels = _labelled(np.random.default_rng(seed))
    roc, ap = roc_pr_auc(scores, labels)
    assert roc == pytest.approx(sklearn_metrics.roc_auc_score(labels, scores), abs=1e-12)
    assert ap == pytest.approx(sklearn_metrics.average_precision_score(labels, scores), abs=1e-12)


def test_roc_pr_with_ties_match_sklearn(rng: np.random.Generator) -> None:
    """Tied scores share one threshold."""
    scores, labels = _labelled(rng)
    scores = np.round(scores, 1)
    roc, ap = roc_pr_auc(scores, labels)
    assert roc == pytest.approx(sklearn_metrics.roc_auc_score(labels, scores), abs=1e-12)
    assert ap == pytest.approx(sklearn_metrics.average_precision_score(labels, scores), abs=1e-12)


def test_perfect_and_inverted_scores() -> None:
    """A perfect ranking scores 1; the inverted one has ROC 0."""
    labels = np.array([0, 0, 1, 1, 0])
    assert roc_pr_auc(labels.astype(float), labels) == (1.0, 1.0)
    assert roc_pr_auc(1.0 - labels, labels)[0] == 0.0


def test_single_class_is_an_error() -> None:
    """Metrics need both classes."""
    with pytest.raises(MetricError, match="single class"):
        roc_pr_auc([0.1, 0.2], [0, 0])
    with pytest.raises(MetricError, match="single class"):
        vus([0.1, 0.2], [1, 1])


def test_length_mismatch() -> None:
    """Scores and labels must align."""
    with pytest.raises(DataError, match="3 scores for 2 labels"):
        roc_pr_auc([0.1, 0.2, 0.3], [0, 1])


def test_segments_round_trip() -> None:
    """Runs of ones become inclusive segments."""
    labels = [1, 1, 0, 0, 1, 0, 1, 1, 1]
    spans = segments(labels)
    assert spans == [(0, 1), (4, 4), (6, 8)]
    np.testing.assert_array_equal(labels_from_segments(spans, 9), labels)


def test_soft_label_ramp() -> None:
    """A segment [10, 12] with buffer 2 ramps 1/3, 2/3 on both sides."""
    labels = np.zeros(20, dtype=int)
    labels[10:13] = 1
    soft = soft_labels(labels, 2)
    np.testing.assert_allclose(soft[7:16], [0, 1 / 3, 2 / 3, 1, 1, 1, 2 / 3, 1 / 3, 0], atol=1e-15)
    assert soft[:7].sum() == 0.0 and soft[16:].sum() == 0.0
    np.testing.assert_array_equal(soft_labels(labels, 0), labels)
    with pytest.raises(ConfigError):
        soft_labels(labels, -1)


def test_nearby_segments_take_the_larger_weight() -> None:
    """Between two segments the nearest one defines the ramp."""
    labels = np.zeros(12, dtype=int)
    labels[2] = 1
    labels[6] = 1
    soft = soft_labels(labels, 3)
    assert soft[4] == pytest.approx(0.5)
    assert soft[5] == pytest.approx(0.75)


def test_range_auc_buffer_zero_is_plain_auc(rng: np.random.Generator) -> None:
    """No buffer reduces to the point-wise areas."""
    scores, labels = _labelled(rng)
    assert range_auc(scores, labels, 0) == pytest.approx(roc_pr_auc(scores, labels), abs=1e-15)


def test_vus_is_mean_over_buffers(rng: np.random.Generator) -> None:
    """VUS averages the range areas over buffers 0..max."""
    scores, labels = _labelled(rng)
    areas = [range_auc(scores, labels, width) for width in range(4)]
    roc, pr = vus(scores, labels, 3)
    assert roc == pytest.approx(np.mean([a[0] for a in areas]), abs=1e-12)
    assert pr == pytest.approx(np.mean([a[1] for a in areas]), abs=1e-12)


def test_threshold_grid_uses_observed_scores(rng: np.random.Generator) -> None:
    """Grid values are actual scores, deduplicated and sorted."""
    scores = rng.random(50)
    grid = threshold_grid(scores, 10)
    assert np.all(np.isin(grid, scores))
    assert np.all(np.diff(grid) > 0)
    assert grid[0] == scores.min() and grid[-1] == scores.max()
    np.testing.assert_array_equal(threshold_grid(np.ones(5), 10), [1.0])
    with pytest.raises(ConfigError):
        threshold_grid(scores, 0)


def test_f1_best_matches_enumeration(rng: np.random.Generator) -> None:
    """The best F1 is the maximum over the grid thresholds."""
    scores, labels = _labelled(rng)
    best = 0.0
    for threshold in threshold_grid(scores, 25):
        predicted = (scores >= threshold).astype(int)
        best = max(best, sklearn_metrics.f1_score(labels, predicted, zero_division=0.0))
    f1, threshold = f1_best(scores, labels, 25)
    assert f1 == pytest.approx(best, abs=1e-12)
    assert threshold in scores


def test_range_precision_recall_fragments() -> None:
    """Fragmented detections are penalised in recall."""
    truth = [(5, 9)]
    assert range_precision_recall(truth, [(5, 9)]) == (1.0, 1.0)
    precision, recall = range_precision_recall(truth, [(5, 6), (8, 9)])
    assert precision == 1.0
    assert recall == pytest.approx(0.4)
    precision, recall = range_precision_recall(truth, [(0, 19)])
    assert (precision, recall) == (0.25, 1.0)
    assert range_precision_recall(truth, []) == (0.0, 0.0)


def test_range_f_perfect_detector() -> None:
    """Scores equal to the labels give a range F-score of 1."""
    labels = np.zeros(30, dtype=int)
    labels[10:15] = 1
    assert range_f(labels.astype(float), labels, 10) == 1.0


def test_ucr_accuracy_ties_take_lowest_index() -> None:
    """The first maximal score decides."""
    labels = np.zeros(10, dtype=int)
    labels[6:8] = 1
    assert ucr_accuracy([0, 0, 0, 0, 0, 0, 5, 5, 0, 0], labels) == 1
    assert ucr_accuracy([0, 5, 0, 0, 0, 0, 5, 5, 0, 0], labels) == 0
    with pytest.raises(MetricError, match="exactly one"):
        ucr_accuracy(np.zeros(10), labels_from_segments([(1, 1), (5, 5)], 10))


def test_rank_invariance(rng: np.random.Generator) -> None:
    """Threshold-free and grid metrics depend only on the score ranking."""
    scores, labels = _labelled(rng)
    config = MetricsConfig(threshold_grid=30, buffer=5, vus_max_buffer=5)
    first = evaluate(scores, labels, config=config)
    second = evaluate(np.exp(3.0 * scores) + 1.0, labels, config=config)
    for name in ("auc_roc", "auc_pr", "range_auc_roc", "range_auc_pr", "vus_roc", "vus_pr", "range_f", "f1_best"):
        assert getattr(first, name) == pytest.approx(getattr(second, name), abs=1e-12)


def test_report_json_round_trip(tmp_path: Path, rng: np.random.Generator) -> None:
    """Saved reports parse back to equal objects."""
    scores, labels = _labelled(rng)
    report = evaluate(scores, labels, raw_scores=scores * 2, smoothing_window=5, seed=3, config_hash="h")
    assert report.ucr_accuracy is None
    assert report.mse_ratio is not None
    path = report.save(tmp_path / "report.json")
    assert MetricsReport.from_json(path.read_text()) == report


def test_report_rejects_unknown_fields() -> None:
    """Unexpected keys and invalid JSON are data errors."""
    with pytest.raises(DataError, match="unknown fields"):
        MetricsReport.from_dict({"bogus": 1})
    with pytest.raises(DataError, match="valid JSON"):
        MetricsReport.from_json("{")


def test_single_segment_reports_ucr() -> None:
    """One labelled segment enables UCR accuracy."""
    labels = np.zeros(40, dtype=int)
    labels[20:25] = 1
    scores = labels_from_segments([(22, 22)], 40).astype(float)
    assert evaluate(scores, labels).ucr_accuracy == 1


def _brute_areas(scores: np.ndarray, weights: np.ndarray) -> tuple[float, float]:
    """Enumerate every distinct threshold from the top and integrate directly."""
    tpr, fpr, precision = [0.0], [0.0], []
    for threshold in sorted(set(scores.tolist()), reverse=True):
        predicted = scores >= threshold
        tp = float(np.sum(weights[predicted]))
        fp = float(np.sum(1.0 - weights[predicted]))
        tpr.append(tp / weights.sum())
        fpr.append(fp / (1.0 - weights).sum())
        precision.append(tp / (tp + fp))
    roc = sum((fpr[k] - fpr[k - 1]) * (tpr[k] + tpr[k - 1]) / 2 for k in range(1, len(tpr)))
    ap = sum((tpr[k] - tpr[k - 1]) * precision[k - 1] for k in range(1, len(tpr)))
    return roc, ap


def _brute_soft_labels(labels: np.ndarray, buffer: int) -> np.ndarray:
    anomalous = [i for i, flag in enumerate(labels) if flag]
    soft = np.zeros(labels.size)
    for i in range(labels.size):
        distance = min(abs(i - j) for j in anomalous)
        soft[i] = max(0.0, 1.0 - distance / (buffer + 1)) if buffer else float(distance == 0)
    return soft


def _brute_range_f(scores: np.ndarray, labels: np.ndarray, grid_size: int) -> float:
    truth = segments(labels)
    best = 0.0
    for threshold in threshold_grid(scores, grid_size):
        predicted = segments((scores >= threshold).astype(int))
        recall = 0.0
        for start, end in truth:
            hits = [(s, e) for s, e in predicted if min(end, e) >= max(start, s)]
            covered = sum(min(end, e) - max(start, s) + 1 for s, e in hits)
            recall += covered / (end - start + 1) / len(hits) if hits else 0.0
        recall /= len(truth)
        precision = 0.0
        for start, end in predicted:
            hits = [(s, e) for s, e in truth if min(end, e) >= max(start, s)]
            covered = sum(min(end, e) - max(start, s) + 1 for s, e in hits)
            precision += covered / (end - start + 1) / len(hits) if hits else 0.0
        precision = precision / len(predicted) if predicted else 0.0
        if precision + recall:
            best = max(best, 2 * precision * recall / (precision + recall))
    return best


def _random_fixture(seed: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    n = int(rng.integers(20, 201))
    labels = np.zeros(n, dtype=int)
    for _ in range(int(rng.integers(1, 4))):
        start = int(rng.integers(0, n - 5))
        labels[start : start + int(rng.integers(1, 6))] = 1
    if labels.all():
        labels[0] = 0
    # coarse rounding produces ties
    scores = np.round(rng.random(n) + 0.5 * labels, 2)
    return scores, labels


@pytest.mark.parametrize("seed", range(50))
def test_metrics_match_enumeration(seed: int) -> None:
    """Every metric equals a direct enumeration on random fixtures."""
    scores, labels = _random_fixture(seed)
    expected = _brute_areas(scores, labels.astype(float))
    assert roc_pr_auc(scores, labels) == pytest.approx(expected, abs=1e-9)
    for buffer in (0, 1, 3):
        soft = _brute_soft_labels(labels, buffer)
        assert range_auc(scores, labels, buffer) == pytest.approx(_brute_areas(scores, soft), abs=1e-9)
    brute_vus = np.mean([_brute_areas(scores, _brute_soft_labels(labels, b)) for b in range(4)], axis=0)
    assert vus(scores, labels, 3) == pytest.approx(tuple(brute_vus), abs=1e-9)
    assert range_f(scores, labels, 15) == pytest.approx(_brute_range_f(scores, labels, 15), abs=1e-9)
    if len(segments(labels)) == 1:
        start, end = segments(labels)[0]
        peak = min(i for i in range(scores.size) if scores[i] == scores.max())
        assert ucr_accuracy(scores, labels) == int(start <= peak <= end)


@pytest.mark.parametrize("seed", range(10))
def test_reductions_are_exact(seed: int) -> None:
    """Zero buffers reduce to the plain areas exactly."""
    scores, labels = _random_fixture(seed)
    plain = roc_pr_auc(scores, labels)
    assert range_auc(scores, labels, 0) == plain
    assert vus(scores, labels, 0) == plain
