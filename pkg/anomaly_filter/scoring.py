"""Per-timestep anomaly scores from reconstructions."""
from __future__ import annotations

import csv
from dataclasses import dataclass
import logging
from pathlib import Path

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .autodiff import NdArray
from .const import ALIGN_CENTERED, ALIGN_TRAILING, DEFAULT_SMOOTHING_WINDOW
from .exceptions import ConfigError, DataError, ShapeError

_LOGGER = logging.getLogger(__name__)

SCORE_COLUMNS = ("t", "score", "raw_score")
LABEL_COLUMN = "label"


@dataclass(frozen=True)
class ScoringConfig:
    """Moving-average settings."""

    smoothing_window: int = DEFAULT_SMOOTHING_WINDOW
    smoothing_align: str = ALIGN_CENTERED


def pointwise_mse(x: ArrayLike, x_hat: ArrayLike) -> NdArray:
    """Mean over features of the squared error; (..., D, L) -> (..., L)."""
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x.shape != x_hat.shape:
        raise ShapeError(f"pointwise_mse: shapes {x.shape} and {x_hat.shape} differ")
    if x.ndim < 2:
        raise ShapeError(f"pointwise_mse: expected (D, L) input, got {x.shape}")
    return ((x - x_hat) ** 2).mean(axis=-2)


def assemble_scores(window_scores: ArrayLike, origins: ArrayLike, length: int) -> NdArray:
    """Average the (n, L) window scores over every window covering each timestep."""
    scores = np.asarray(window_scores, dtype=np.float64)
    starts = np.asarray(origins, dtype=np.int64)
    if scores.ndim != 2 or starts.shape != (scores.shape[0],):
        raise ShapeError(f"assemble_scores: {scores.shape} window scores for {starts.shape} origins")
    window_len = scores.shape[1]
    if starts.size and (starts.min() < 0 or starts.max() + window_len > length):
        raise DataError(f"assemble_scores: a window falls outside a series of length {length}")
    index = starts[:, None] + np.arange(window_len)[None, :]
    total = np.zeros(length)
    count = np.zeros(length)
    np.add.at(total, index, scores)
    np.add.at(count, index, 1.0)
    uncovered = np.flatnonzero(count == 0)
    if uncovered.size:
        raise DataError(f"assemble_scores: timesteps {uncovered[:10].tolist()} are not covered by any window")
    return total / count


def smooth(scores: ArrayLike, window: int, align: str = ALIGN_CENTERED) -> NdArray:
    """Moving average with truncated edges.

    Centered: position i averages i - (w - 1) // 2 .. i + w // 2. Trailing: i - w + 1 .. i.
    """
    if window < 1:
        raise ConfigError(f"smoothing window must be >= 1, got {window}")
    values = np.asarray(scores, dtype=np.float64)
    n = values.shape[0]
    if align == ALIGN_CENTERED:
        before, after = (window - 1) // 2, window // 2
    elif align == ALIGN_TRAILING:
        before, after = window - 1, 0
    else:
        raise ConfigError(f"unknown smoothing alignment {align!r}")
    cumulative = np.concatenate([[0.0], np.cumsum(values)])
    positions = np.arange(n)
    lo = np.clip(positions - before, 0, n)
    hi = np.clip(positions + after + 1, 0, n)
    return (cumulative[hi] - cumulative[lo]) / (hi - lo)


@dataclass(frozen=True)
class MseSplit:
    """Reconstruction error over anomalous and normal timesteps."""

    mse_a: float | None
    mse_n: float | None
    ratio: float | None


def mse_split(raw_scores: ArrayLike, labels: ArrayLike) -> MseSplit:
    """Mean raw score over label 1 and label 0; undefined parts are None."""
    scores = np.asarray(raw_scores, dtype=np.float64)
    flags = np.asarray(labels)
    if scores.shape != flags.shape:
        raise ShapeError(f"mse_split: {scores.shape} scores for {flags.shape} labels")
    anomalous = flags == 1
    mse_a = float(scores[anomalous].mean()) if anomalous.any() else None
    mse_n = float(scores[~anomalous].mean()) if (~anomalous).any() else None
    ratio = mse_a / mse_n if mse_a is not None and mse_n else None
    return MseSplit(mse_a=mse_a, mse_n=mse_n, ratio=ratio)


@dataclass(frozen=True)
class ScoreSeries:
    """Smoothed and raw per-timestep scores of one series."""

    scores: NdArray
    raw_scores: NdArray
    smoothing_window: int
    smoothing_align: str = ALIGN_CENTERED
    config_hash: str = ""
    seed: int | None = None
    labels: NDArray[np.int64] | None = None

    def __post_init__(self) -> None:
        if self.scores.shape != self.raw_scores.shape or self.scores.ndim != 1:
            raise ShapeError(f"score series: {self.scores.shape} scores for {self.raw_scores.shape} raw scores")
        if self.labels is not None and self.labels.shape != self.scores.shape:
            raise DataError(f"score series: {self.labels.shape[0]} labels for {self.scores.shape[0]} scores")
        if not (np.all(np.isfinite(self.scores)) and np.all(self.scores >= 0.0)):
            raise DataError("score series: scores must be finite and non-negative")

    def __len__(self) -> int:
        return int(self.scores.shape[0])


def build_score_series(
    raw_scores: ArrayLike,
    config: ScoringConfig,
    config_hash: str = "",
    seed: int | None = None,
    labels: ArrayLike | None = None,
) -> ScoreSeries:
    """Smooth raw per-timestep scores into a ScoreSeries."""
    raw = np.asarray(raw_scores, dtype=np.float64)
    return ScoreSeries(
        scores=smooth(raw, config.smoothing_window, config.smoothing_align),
        raw_scores=raw,
        smoothing_window=config.smoothing_window,
        smoothing_align=config.smoothing_align,
        config_hash=config_hash,
        seed=seed,
        labels=np.asarray(labels, dtype=np.int64) if labels is not None else None,
    )


def write_score_csv(series: ScoreSeries, path: str | Path) -> Path:
    """Write `t,score,raw_score[,label]` preceded by a provenance comment line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = list(SCORE_COLUMNS)
    if series.labels is not None:
        header.append(LABEL_COLUMN)
    with path.open("w", newline="", encoding="utf-8") as handle:
        handle.write(
            f"# config_hash={series.config_hash} seed={series.seed} "
            f"smoothing_window={series.smoothing_window} smoothing_align={series.smoothing_align}\n"
        )
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for t in range(len(series)):
            row = [str(t), repr(float(series.scores[t])), repr(float(series.raw_scores[t]))]
            if series.labels is not None:
                row.append(str(int(series.labels[t])))
            writer.writerow(row)
    _LOGGER.info("Wrote %d scores to %s", len(series), path)
    return path


def _provenance(line: str) -> dict[str, str]:
    fields = {}
    for token in line.lstrip("#").split():
        key, _, value = token.partition("=")
        fields[key] = value
    return fields


def read_score_csv(path: str | Path) -> ScoreSeries:
    """Read a file written by `write_score_csv`."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as err:
        _LOGGER.error("Cannot read %s: %s", path, err)
        raise DataError(f"cannot read {path}: {err}") from err
    meta: dict[str, str] = {}
    body = []
    for number, line in enumerate(lines, start=1):
        if line.startswith("#"):
            meta.update(_provenance(line))
        elif line.strip():
            body.append((number, line))
    if not body:
        raise DataError(f"{path.name}: no header row")
    header = next(csv.reader([body[0][1]]))
    if header[: len(SCORE_COLUMNS)] != list(SCORE_COLUMNS):
        raise DataError(f"{path.name}: expected columns {', '.join(SCORE_COLUMNS)}, found {', '.join(header)}", row=body[0][0])
    has_labels = LABEL_COLUMN in header[len(SCORE_COLUMNS):]
    scores, raw, labels = [], [], []
    for number, line in body[1:]:
        row = next(csv.reader([line]))
        if len(row) != len(header):
            raise DataError(f"expected {len(header)} columns, found {len(row)}", row=number)
        try:
            scores.append(float(row[1]))
            raw.append(float(row[2]))
            if has_labels:
                labels.append(int(float(row[header.index(LABEL_COLUMN)])))
        except ValueError as err:
            raise DataError(f"non-numeric cell in {row}", row=number) from err
    seed = meta.get("seed")
    return ScoreSeries(
        scores=np.array(scores),
        raw_scores=np.array(raw),
        smoothing_window=int(meta.get("smoothing_window", 1)),
        smoothing_align=meta.get("smoothing_align", ALIGN_CENTERED),
        config_hash=meta.get("config_hash", ""),
        seed=int(seed) if seed not in (None, "None") else None,
        labels=np.array(labels, dtype=np.int64) if has_labels else None,
    )
