"""Synthetic series with injected anomalies."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
import logging
import math
from typing import Any

import numpy as np

from .autodiff import NdArray
from .data import TimeSeries
from .exceptions import DataError

_LOGGER = logging.getLogger(__name__)

FAMILY_SINE = "sine"
FAMILY_MULTI_SINE = "multi-sine"
FAMILY_TREND_SEASON = "trend+season"
FAMILIES = (FAMILY_SINE, FAMILY_MULTI_SINE, FAMILY_TREND_SEASON)

ANOMALY_POINT_SPIKE = "point-spike"
ANOMALY_PATTERN_DISTORTION = "pattern-distortion"
ANOMALY_LEVEL_SHIFT = "level-shift"
ANOMALY_KINDS = (ANOMALY_POINT_SPIKE, ANOMALY_PATTERN_DISTORTION, ANOMALY_LEVEL_SHIFT)

DEFAULT_FAMILY = FAMILY_SINE
DEFAULT_TRAIN_LENGTH = 2000
DEFAULT_TEST_LENGTH = 1000
DEFAULT_SYNTH_FEATURES = 1
DEFAULT_NOISE_LEVEL = 0.05
DEFAULT_PERIOD = 50.0


@dataclass(frozen=True)
class AnomalySpec:
    """One injected anomaly.

    `magnitude` is in units of the clean signal's standard deviation for spikes
    and level shifts, and a frequency multiplier for pattern distortions.
    """

    kind: str
    position: int
    length: int = 1
    magnitude: float = 5.0

    @property
    def end(self) -> int:
        """Last covered index (inclusive)."""
        return self.position + self.length - 1


@dataclass(frozen=True)
class SyntheticSpec:
    """Base signal family, sizes and anomaly list of a generated dataset."""

    family: str = DEFAULT_FAMILY
    train_length: int = DEFAULT_TRAIN_LENGTH
    test_length: int = DEFAULT_TEST_LENGTH
    n_features: int = DEFAULT_SYNTH_FEATURES
    noise_level: float = DEFAULT_NOISE_LEVEL
    period: float = DEFAULT_PERIOD
    anomalies: tuple[AnomalySpec, ...] = field(default_factory=tuple)
    seed: int = 0

    def __post_init__(self) -> None:
        problems = []
        if self.family not in FAMILIES:
            problems.append(f"unknown family {self.family!r}")
        for key in ("train_length", "test_length", "n_features"):
            if getattr(self, key) < 1:
                problems.append(f"{key} must be positive")
        if self.noise_level < 0.0:
            problems.append("noise_level must be >= 0")
        if self.period <= 0.0:
            problems.append("period must be > 0")
        if problems:
            raise DataError("; ".join(problems))

        ordered = sorted(self.anomalies, key=lambda a: a.position)
        for anomaly in ordered:
            if anomaly.kind not in ANOMALY_KINDS:
                raise DataError(f"unknown anomaly type {anomaly.kind!r}")
            if anomaly.kind == ANOMALY_POINT_SPIKE and anomaly.length != 1:
                raise DataError(f"point-spike at {anomaly.position} must have length 1")
            if anomaly.length < 1 or anomaly.position < 0 or anomaly.end >= self.test_length:
                raise DataError(
                    f"{anomaly.kind} [{anomaly.position}, {anomaly.end}] is outside the test series "
                    f"of length {self.test_length}"
                )
        for first, second in zip(ordered, ordered[1:]):
            if second.position <= first.end:
                raise DataError(
                    f"anomalies [{first.position}, {first.end}] and [{second.position}, {second.end}] overlap"
                )

    def as_dict(self) -> dict[str, Any]:
        """Return the settings as plain data."""
        return asdict(self)


def standard_fixture(seed: int = 0) -> SyntheticSpec:
    """Univariate sine with three point spikes and one frequency distortion."""
    return SyntheticSpec(
        family=FAMILY_SINE,
        train_length=DEFAULT_TRAIN_LENGTH,
        test_length=DEFAULT_TEST_LENGTH,
        n_features=1,
        noise_level=DEFAULT_NOISE_LEVEL,
        period=DEFAULT_PERIOD,
        anomalies=(
            AnomalySpec(ANOMALY_POINT_SPIKE, 150, 1, 6.0),
            AnomalySpec(ANOMALY_POINT_SPIKE, 420, 1, 6.0),
            AnomalySpec(ANOMALY_PATTERN_DISTORTION, 600, 40, 3.0),
            AnomalySpec(ANOMALY_POINT_SPIKE, 850, 1, 6.0),
        ),
        seed=seed,
    )


def _base_signal(family: str, t: NdArray, period: float, phase: float, span: int) -> NdArray:
    angle = 2.0 * math.pi * t / period + phase
    if family == FAMILY_SINE:
        return np.sin(angle)
    if family == FAMILY_MULTI_SINE:
        return np.sin(angle) + 0.5 * np.sin(2.3 * angle) + 0.25 * np.sin(5.1 * angle)
    return np.sin(angle) + 2.0 * t / span


def synth_generate(spec: SyntheticSpec) -> tuple[TimeSeries, TimeSeries]:
    """Generate a clean training series and a labelled test series."""
    rng = np.random.default_rng(spec.seed)
    span = spec.train_length + spec.test_length
    phases = rng.uniform(0.0, 2.0 * math.pi, size=spec.n_features)
    t_train = np.arange(spec.train_length, dtype=np.float64)
    t_test = np.arange(spec.train_length, span, dtype=np.float64)

    def clean(t: NdArray) -> NdArray:
        return np.stack([_base_signal(spec.family, t, spec.period, p, span) for p in phases])

    train = clean(t_train)
    test = clean(t_test)
    sigma = np.maximum(train.std(axis=1), 1e-12)
    labels = np.zeros(spec.test_length, dtype=np.int64)
    for anomaly in spec.anomalies:
        segment = slice(anomaly.position, anomaly.end + 1)
        if anomaly.kind == ANOMALY_PATTERN_DISTORTION:
            # compress time inside the segment so the frequency scales by `magnitude`
            start = t_test[anomaly.position]
            warped = start + (t_test[segment] - start) * anomaly.magnitude
            test[:, segment] = clean(warped)
        else:
            test[:, segment] += anomaly.magnitude * sigma[:, None]
        labels[segment] = 1

    if spec.noise_level > 0.0:
        train = train + spec.noise_level * rng.standard_normal(train.shape)
        test = test + spec.noise_level * rng.standard_normal(test.shape)
    _LOGGER.info(
        "Generated %s data: D=%d, train=%d, test=%d, %d anomalies",
        spec.family,
        spec.n_features,
        spec.train_length,
        spec.test_length,
        len(spec.anomalies),
    )
    return (
        TimeSeries(values=train, name="synthetic_train"),
        TimeSeries(values=test, labels=labels, name="synthetic_test"),
    )
