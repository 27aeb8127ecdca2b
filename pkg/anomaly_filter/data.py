"""Series ingestion, normalization and sliding windows."""
from __future__ import annotations

import csv
from collections.abc import Sequence
from dataclasses import dataclass, field
import logging
import math
from pathlib import Path
from typing import Any

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from numpy.typing import NDArray

from .autodiff import NdArray
from .const import (
    DEFAULT_INFERENCE_STRIDE,
    DEFAULT_LABEL_COLUMN,
    DEFAULT_TRAIN_STRIDE,
    DEFAULT_WINDOW_LEN,
    WINDOW_INFERENCE,
    WINDOW_TRAIN,
)
from .exceptions import ConfigError, DataError

_LOGGER = logging.getLogger(__name__)

Labels = NDArray[np.int64]


@dataclass(frozen=True)
class TimeSeries:
    """D features over N timesteps, optionally labelled per timestep."""

    values: NdArray
    labels: Labels | None = None
    name: str = "series"
    columns: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64)
        if values.ndim == 1:
            values = values[None, :]
        if values.ndim != 2 or values.shape[1] == 0:
            raise DataError(f"{self.name}: values must be a non-empty (D, N) matrix, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise DataError(f"{self.name}: values contain non-finite entries")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.shape != (values.shape[1],):
                raise DataError(f"{self.name}: {labels.shape[0] if labels.ndim else 0} labels for {values.shape[1]} timesteps")
            if not np.isin(labels, (0, 1)).all():
                raise DataError(f"{self.name}: labels must be 0 or 1")
            labels = labels.astype(np.int64)
            labels.setflags(write=False)
            object.__setattr__(self, "labels", labels)
        if self.columns is not None and len(self.columns) != values.shape[0]:
            raise DataError(f"{self.name}: {len(self.columns)} column names for {values.shape[0]} features")

    @property
    def n_features(self) -> int:
        """Number of features D."""
        return int(self.values.shape[0])

    @property
    def length(self) -> int:
        """Number of timesteps N."""
        return int(self.values.shape[1])

    @property
    def has_labels(self) -> bool:
        """Return True when per-timestep labels are present."""
        return self.labels is not None

    def feature_names(self) -> tuple[str, ...]:
        """Column names, generated when the source had no header."""
        if self.columns is not None:
            return self.columns
        return tuple(f"x{i}" for i in range(self.n_features))


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def _parse_label(cell: str, row: int) -> int:
    try:
        value = float(cell)
    except ValueError as err:
        raise DataError(f"label {cell!r} is not numeric", row=row) from err
    if value not in (0.0, 1.0):
        raise DataError(f"label {cell!r} is not 0 or 1", row=row)
    return int(value)


def load_csv(
    path: str | Path,
    label_column: str = DEFAULT_LABEL_COLUMN,
    require_labels: bool = False,
) -> TimeSeries:
    """Read a series with one column per feature and an optional label column.

    The first row is a header when any of its cells is non-numeric. Row numbers
    in errors are 1-based file lines.
    """
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as handle:
            rows = [(number, row) for number, row in enumerate(csv.reader(handle), start=1) if row]
    except OSError as err:
        _LOGGER.error("Cannot read %s: %s", path, err)
        raise DataError(f"cannot read {path}: {err}") from err
    except (UnicodeDecodeError, csv.Error) as err:
        raise DataError(f"{path.name}: malformed CSV: {err}") from err
    if not rows:
        raise DataError(f"{path.name}: file is empty")

    header: list[str] | None = None
    if not all(_is_number(cell) for cell in rows[0][1]):
        header = [cell.strip() for cell in rows[0][1]]
        rows = rows[1:]
    label_index: int | None = None
    if header is not None and label_column in header:
        label_index = header.index(label_column)
    elif require_labels:
        raise DataError(f"{path.name}: missing label column {label_column!r}", row=1)
    if not rows:
        raise DataError(f"{path.name}: no data rows")

    width = len(header) if header is not None else len(rows[0][1])
    values: list[list[float]] = []
    labels: list[int] = []
    for number, row in rows:
        if len(row) != width:
            raise DataError(f"expected {width} columns, found {len(row)}", row=number)
        features: list[float] = []
        for index, cell in enumerate(row):
            if index == label_index:
                labels.append(_parse_label(cell, number))
                continue
            try:
                value = float(cell)
            except ValueError as err:
                raise DataError(f"non-numeric cell {cell!r} in column {index + 1}", row=number) from err
            if not math.isfinite(value):
                raise DataError(f"non-finite cell {cell!r} in column {index + 1}", row=number)
            features.append(value)
        values.append(features)

    columns = None
    if header is not None:
        columns = tuple(name for index, name in enumerate(header) if index != label_index)
    if not values[0]:
        raise DataError(f"{path.name}: no feature columns")
    series = TimeSeries(
        values=np.array(values, dtype=np.float64).T,
        labels=np.array(labels, dtype=np.int64) if label_index is not None else None,
        name=path.stem,
        columns=columns,
    )
    _LOGGER.debug(
        "Loaded %s: D=%d, N=%d, labels=%s", path.name, series.n_features, series.length, series.has_labels
    )
    return series


def write_csv(series: TimeSeries, path: str | Path, label_column: str = DEFAULT_LABEL_COLUMN) -> Path:
    """Write `series` in the layout `load_csv` reads, values at full precision."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = list(series.feature_names())
    if series.labels is not None:
        header.append(label_column)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for t in range(series.length):
            row = [repr(float(v)) for v in series.values[:, t]]
            if series.labels is not None:
                row.append(str(int(series.labels[t])))
            writer.writerow(row)
    _LOGGER.debug("Wrote %s (%d rows)", path, series.length)
    return path


@dataclass(frozen=True)
class NormStats:
    """Per-feature z-score statistics taken from the training series."""

    mean: NdArray
    std: NdArray

    def apply(self, series: TimeSeries) -> TimeSeries:
        """Normalize `series` with these statistics."""
        if series.n_features != self.mean.shape[0]:
            raise DataError(
                f"{series.name}: {series.n_features} features, normalization expects {self.mean.shape[0]}"
            )
        divisor = np.where(self.std > 0.0, self.std, 1.0)
        values = (series.values - self.mean[:, None]) / divisor[:, None]
        return TimeSeries(values=values, labels=series.labels, name=series.name, columns=series.columns)

    def as_dict(self) -> dict[str, list[float]]:
        """Return the statistics as plain data."""
        return {"mean": [float(v) for v in self.mean], "std": [float(v) for v in self.std]}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> NormStats:
        """Rebuild from `as_dict` output."""
        return cls(mean=np.array(data["mean"], dtype=np.float64), std=np.array(data["std"], dtype=np.float64))


def normalize(train: TimeSeries, *others: TimeSeries) -> tuple[NormStats, list[TimeSeries]]:
    """Z-score every series with the training statistics; returns (stats, [train, *others])."""
    stats = NormStats(mean=train.values.mean(axis=1), std=train.values.std(axis=1))
    constant = np.flatnonzero(stats.std == 0.0)
    if constant.size:
        _LOGGER.warning("Features %s are constant in %s; using divisor 1", constant.tolist(), train.name)
    return stats, [stats.apply(series) for series in (train, *others)]


@dataclass(frozen=True)
class WindowSet:
    """Windows of shape (D, L) cut from one series, with their origins."""

    windows: NdArray
    origins: NDArray[np.int64]
    window_len: int
    stride: int
    series_length: int
    labels: Labels | None = field(default=None, compare=False)

    def __len__(self) -> int:
        return int(self.windows.shape[0])

    def subset(self, index: slice | Sequence[int] | NDArray[np.int64]) -> WindowSet:
        """Return the windows at `index` (origins stay ordered for slices)."""
        return WindowSet(
            windows=self.windows[index],
            origins=self.origins[index],
            window_len=self.window_len,
            stride=self.stride,
            series_length=self.series_length,
            labels=self.labels[index] if self.labels is not None else None,
        )


def window_origins(length: int, window_len: int, stride: int, mode: str = WINDOW_TRAIN) -> NDArray[np.int64]:
    """Origins of every window; inference mode clamps a final window to end at `length`."""
    if window_len < 1 or stride < 1:
        raise ConfigError(f"window_len and stride must be positive, got {window_len} and {stride}")
    if mode not in (WINDOW_TRAIN, WINDOW_INFERENCE):
        raise ConfigError(f"unknown window mode {mode!r}")
    if length < window_len:
        raise DataError(f"series of length {length} is shorter than the window length {window_len}")
    origins = list(range(0, length - window_len + 1, stride))
    if mode == WINDOW_INFERENCE and origins[-1] + window_len < length:
        origins.append(length - window_len)
    return np.array(origins, dtype=np.int64)


def make_windows(
    series: TimeSeries,
    window_len: int = DEFAULT_WINDOW_LEN,
    stride: int | None = None,
    mode: str = WINDOW_TRAIN,
) -> WindowSet:
    """Cut `series` into (D, L) windows."""
    if stride is None:
        stride = DEFAULT_TRAIN_STRIDE if mode == WINDOW_TRAIN else DEFAULT_INFERENCE_STRIDE
    origins = window_origins(series.length, window_len, stride, mode)
    # view shape (D, N - L + 1, L) -> (n, D, L)
    view = sliding_window_view(series.values, window_len, axis=1)
    windows = np.ascontiguousarray(view[:, origins, :].transpose(1, 0, 2))
    labels = None
    if series.labels is not None:
        labels = sliding_window_view(series.labels, window_len)[origins]
    return WindowSet(
        windows=windows,
        origins=origins,
        window_len=window_len,
        stride=stride,
        series_length=series.length,
        labels=labels,
    )


def split_validation(windows: WindowSet, fraction: float) -> tuple[WindowSet, WindowSet]:
    """Hold out the chronologically last `fraction` of the windows."""
    if not 0.0 < fraction < 1.0:
        raise ConfigError(f"validation fraction must lie in (0, 1), got {fraction}")
    count = len(windows)
    if count < 2:
        raise DataError(f"need at least 2 training windows for a validation split, got {count}")
    held_out = min(max(1, int(round(count * fraction))), count - 1)
    return windows.subset(slice(0, count - held_out)), windows.subset(slice(count - held_out, count))


@dataclass(frozen=True)
class DataConfig:
    """Windowing and column settings."""

    window_len: int = DEFAULT_WINDOW_LEN
    train_stride: int = DEFAULT_TRAIN_STRIDE
    inference_stride: int = DEFAULT_INFERENCE_STRIDE
    label_column: str = DEFAULT_LABEL_COLUMN
