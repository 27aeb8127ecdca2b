"""Threshold-based and threshold-free detection metrics."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields
import json
import logging
from pathlib import Path
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .autodiff import NdArray
from .const import DEFAULT_BUFFER, DEFAULT_THRESHOLD_GRID, DEFAULT_VUS_MAX_BUFFER, REPORT_FORMAT_VERSION
from .exceptions import ConfigError, DataError, MetricError
from .scoring import mse_split

_LOGGER = logging.getLogger(__name__)

Segment = tuple[int, int]


@dataclass(frozen=True)
class MetricsConfig:
    """Threshold grid and buffer widths."""

    threshold_grid: int = DEFAULT_THRESHOLD_GRID
    buffer: int = DEFAULT_BUFFER
    vus_max_buffer: int = DEFAULT_VUS_MAX_BUFFER


def _as_labels(labels: ArrayLike) -> NDArray[np.int64]:
    flags = np.asarray(labels)
    if flags.ndim != 1 or not np.isin(flags, (0, 1)).all():
        raise MetricError("labels must be a binary vector")
    return flags.astype(np.int64)


def _check_inputs(scores: ArrayLike, labels: ArrayLike, op: str) -> tuple[NdArray, NDArray[np.int64]]:
    values = np.asarray(scores, dtype=np.float64)
    flags = _as_labels(labels)
    if values.shape != flags.shape:
        raise DataError(f"{op}: {values.shape[0]} scores for {flags.shape[0]} labels")
    positives = int(flags.sum())
    if positives == 0 or positives == flags.size:
        raise MetricError(f"{op}: labels contain a single class")
    return values, flags


def segments(labels: ArrayLike) -> list[Segment]:
    """Maximal runs of 1s as inclusive (start, end) pairs."""
    flags = _as_labels(labels)
    padded = np.concatenate([[0], flags, [0]])
    changes = np.flatnonzero(np.diff(padded))
    return [(int(start), int(stop) - 1) for start, stop in zip(changes[0::2], changes[1::2])]


def labels_from_segments(spans: list[Segment], length: int) -> NDArray[np.int64]:
    """Inverse of `segments`."""
    flags = np.zeros(length, dtype=np.int64)
    for start, end in spans:
        flags[start : end + 1] = 1
    return flags


def _weighted_curve_areas(scores: NdArray, positive: NdArray) -> tuple[float, float]:
    """ROC area (trapezoid) and average precision (step) for soft positive weights.

    A point counts as `positive[i]` of a true positive and `1 - positive[i]` of a
    negative; thresholds are the unique scores, predictions are score >= threshold.
    """
    order = np.argsort(-scores, kind="stable")
    ranked = scores[order]
    weights = positive[order]
    last_of_group = np.flatnonzero(np.diff(ranked) != 0)
    ends = np.concatenate([last_of_group, [ranked.size - 1]])
    tp = np.cumsum(weights)[ends]
    fp = np.cumsum(1.0 - weights)[ends]
    total_positive, total_negative = tp[-1], fp[-1]
    tpr = np.concatenate([[0.0], tp / total_positive])
    fpr = np.concatenate([[0.0], fp / total_negative])
    roc = float(np.sum((fpr[1:] - fpr[:-1]) * (tpr[1:] + tpr[:-1]) / 2.0))
    precision = tp / (tp + fp)
    ap = float(np.sum((tpr[1:] - tpr[:-1]) * precision))
    return roc, ap


def roc_pr_auc(scores: ArrayLike, labels: ArrayLike) -> tuple[float, float]:
    """Area under the ROC curve and average precision."""
    values, flags = _check_inputs(scores, labels, "roc_pr_auc")
    return _weighted_curve_areas(values, flags.astype(np.float64))


def soft_labels(labels: ArrayLike, buffer: int) -> NdArray:
    """Labels with a linear ramp 1 - d / (buffer + 1) within `buffer` steps of a segment."""
    if buffer < 0:
        raise ConfigError(f"buffer must be >= 0, got {buffer}")
    flags = _as_labels(labels)
    anomalous = np.flatnonzero(flags)
    if anomalous.size == 0 or buffer == 0:
        return flags.astype(np.float64)
    positions = np.arange(flags.size)
    # distance to the nearest anomalous index on either side
    right = np.searchsorted(anomalous, positions)
    after = np.abs(anomalous[np.minimum(right, anomalous.size - 1)] - positions)
    before = np.abs(positions - anomalous[np.maximum(right - 1, 0)])
    distance = np.minimum(after, before)
    return np.clip(1.0 - distance / (buffer + 1.0), 0.0, 1.0)


def range_auc(scores: ArrayLike, labels: ArrayLike, buffer: int = DEFAULT_BUFFER) -> tuple[float, float]:
    """ROC area and average precision against buffer-softened labels."""
    values, flags = _check_inputs(scores, labels, "range_auc")
    return _weighted_curve_areas(values, soft_labels(flags, buffer))


def vus(scores: ArrayLike, labels: ArrayLike, max_buffer: int = DEFAULT_VUS_MAX_BUFFER) -> tuple[float, float]:
    """Mean range AUCs over buffer widths 0..max_buffer."""
    if max_buffer < 0:
        raise ConfigError(f"max_buffer must be >= 0, got {max_buffer}")
    values, flags = _check_inputs(scores, labels, "vus")
    areas = [_weighted_curve_areas(values, soft_labels(flags, width)) for width in range(max_buffer + 1)]
    count = len(areas)
    return sum(a[0] for a in areas) / count, sum(a[1] for a in areas) / count


def threshold_grid(scores: ArrayLike, size: int = DEFAULT_THRESHOLD_GRID) -> NdArray:
    """Distinct score values at `size` evenly spaced quantile levels."""
    if size < 1:
        raise ConfigError(f"threshold grid size must be >= 1, got {size}")
    values = np.asarray(scores, dtype=np.float64)
    levels = np.linspace(0.0, 1.0, size) if size > 1 else np.array([0.5])
    return np.unique(np.quantile(values, levels, method="lower"))


def _f_measure(precision: float, recall: float) -> float:
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def f1_best(
    scores: ArrayLike, labels: ArrayLike, grid_size: int = DEFAULT_THRESHOLD_GRID
) -> tuple[float, float]:
    """Best point-wise F1 over the quantile grid; returns (f1, threshold)."""
    values, flags = _check_inputs(scores, labels, "f1_best")
    best, best_threshold = 0.0, float("nan")
    positives = flags.sum()
    for threshold in threshold_grid(values, grid_size):
        predicted = values >= threshold
        tp = float(np.sum(predicted & (flags == 1)))
        precision = tp / predicted.sum() if predicted.any() else 0.0
        f1 = _f_measure(precision, tp / positives)
        if f1 > best:
            best, best_threshold = f1, float(threshold)
    return best, best_threshold


def _overlap(a: Segment, b: Segment) -> int:
    return max(0, min(a[1], b[1]) - max(a[0], b[0]) + 1)


def _range_score(reference: list[Segment], other: list[Segment]) -> float:
    """Mean over `reference` of overlap fraction times 1 / (number of overlapping `other` segments)."""
    if not reference:
        return 0.0
    total = 0.0
    for segment in reference:
        overlaps = [_overlap(segment, o) for o in other]
        hits = sum(1 for size in overlaps if size)
        if hits:
            total += (sum(overlaps) / (segment[1] - segment[0] + 1)) / hits
    return total / len(reference)


def range_precision_recall(true_segments: list[Segment], predicted_segments: list[Segment]) -> tuple[float, float]:
    """Range precision and recall with no existence reward and flat positional bias."""
    recall = _range_score(true_segments, predicted_segments)
    precision = _range_score(predicted_segments, true_segments)
    return precision, recall


def range_f(scores: ArrayLike, labels: ArrayLike, grid_size: int = DEFAULT_THRESHOLD_GRID) -> float:
    """Best range F-score over the quantile grid."""
    values, flags = _check_inputs(scores, labels, "range_f")
    truth = segments(flags)
    best = 0.0
    for threshold in threshold_grid(values, grid_size):
        predicted = segments((values >= threshold).astype(np.int64))
        best = max(best, _f_measure(*range_precision_recall(truth, predicted)))
    return best


def ucr_accuracy(scores: ArrayLike, labels: ArrayLike) -> int:
    """1 when the highest score (lowest index on ties) lies in the single anomaly segment."""
    values = np.asarray(scores, dtype=np.float64)
    flags = _as_labels(labels)
    if values.shape != flags.shape:
        raise DataError(f"ucr_accuracy: {values.shape[0]} scores for {flags.shape[0]} labels")
    spans = segments(flags)
    if len(spans) != 1:
        raise MetricError(f"ucr_accuracy needs exactly one anomaly segment, found {len(spans)}")
    peak = int(np.argmax(values))
    start, end = spans[0]
    return int(start <= peak <= end)


@dataclass(frozen=True)
class MetricsReport:
    """Every metric of one scored series plus its provenance."""

    f1_best: float
    f1_threshold: float
    auc_roc: float
    auc_pr: float
    range_auc_roc: float
    range_auc_pr: float
    vus_roc: float
    vus_pr: float
    range_f: float
    ucr_accuracy: int | None
    mse_a: float | None
    mse_n: float | None
    mse_ratio: float | None
    threshold_grid: int
    buffer: int
    vus_max_buffer: int
    smoothing_window: int | None
    seed: int | None
    config_hash: str
    format_version: int = REPORT_FORMAT_VERSION

    def as_dict(self) -> dict[str, Any]:
        """Return the report as plain data."""
        return asdict(self)

    def to_json(self) -> str:
        """Serialize at full precision."""
        return json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> MetricsReport:
        """Rebuild from `as_dict` output; unknown keys are rejected."""
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise DataError(f"metrics report has unknown fields {unknown}")
        return cls(**data)

    @classmethod
    def from_json(cls, text: str) -> MetricsReport:
        """Parse `to_json` output."""
        try:
            data = json.loads(text)
        except json.JSONDecodeError as err:
            raise DataError(f"metrics report is not valid JSON: {err}") from err
        return cls.from_dict(data)

    def save(self, path: str | Path) -> Path:
        """Write the report to `path`."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json(), encoding="utf-8")
        return path


def evaluate(
    scores: ArrayLike,
    labels: ArrayLike,
    raw_scores: ArrayLike | None = None,
    config: MetricsConfig | None = None,
    *,
    smoothing_window: int | None = None,
    seed: int | None = None,
    config_hash: str = "",
) -> MetricsReport:
    """Compute the full report; UCR accuracy only when there is exactly one segment."""
    config = config or MetricsConfig()
    values, flags = _check_inputs(scores, labels, "evaluate")
    auc_roc, auc_pr = roc_pr_auc(values, flags)
    r_roc, r_pr = range_auc(values, flags, config.buffer)
    v_roc, v_pr = vus(values, flags, config.vus_max_buffer)
    f1, f1_threshold = f1_best(values, flags, config.threshold_grid)
    ucr = ucr_accuracy(values, flags) if len(segments(flags)) == 1 else None
    split = mse_split(raw_scores if raw_scores is not None else values, flags)
    report = MetricsReport(
        f1_best=f1,
        f1_threshold=f1_threshold,
        auc_roc=auc_roc,
        auc_pr=auc_pr,
        range_auc_roc=r_roc,
        range_auc_pr=r_pr,
        vus_roc=v_roc,
        vus_pr=v_pr,
        range_f=range_f(values, flags, config.threshold_grid),
        ucr_accuracy=ucr,
        mse_a=split.mse_a,
        mse_n=split.mse_n,
        mse_ratio=split.ratio,
        threshold_grid=config.threshold_grid,
        buffer=config.buffer,
        vus_max_buffer=config.vus_max_buffer,
        smoothing_window=smoothing_window,
        seed=seed,
        config_hash=config_hash,
    )
    _LOGGER.debug("Evaluated %d timesteps: VUS-PR=%.4f, VUS-ROC=%.4f", values.size, v_pr, v_roc)
    return report
