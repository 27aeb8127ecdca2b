"""Tests for the synthetic data generator."""
import numpy as np
import pytest

from anomaly_filter.exceptions import DataError
from anomaly_filter.synthetic import (
    ANOMALY_LEVEL_SHIFT,
    ANOMALY_PATTERN_DISTORTION,
    ANOMALY_POINT_SPIKE,
    FAMILY_MULTI_SINE,
    FAMILY_TREND_SEASON,
    AnomalySpec,
    SyntheticSpec,
    standard_fixture,
    synth_generate,
)


def test_no_anomalies_gives_all_zero_labels() -> None:
    """A clean spec has no positive labels."""
    train, test = synth_generate(SyntheticSpec(train_length=100, test_length=60))
    assert train.labels is None
    assert test.labels is not None and test.labels.sum() == 0
    assert (train.length, test.length) == (100, 60)


def test_spike_is_labelled_at_its_position() -> None:
    """A point spike sets exactly one label and raises the value."""
    clean_spec = SyntheticSpec(train_length=200, test_length=100, noise_level=0.0)
    spiked_spec = SyntheticSpec(
        train_length=200,
        test_length=100,
        noise_level=0.0,
        anomalies=(AnomalySpec(ANOMALY_POINT_SPIKE, 37, 1, 5.0),),
    )
    train, clean = synth_generate(clean_spec)
    _, spiked = synth_generate(spiked_spec)
    assert np.flatnonzero(spiked.labels).tolist() == [37]
    difference = spiked.values - clean.values
    assert np.flatnonzero(difference[0]).tolist() == [37]
    assert difference[0, 37] == pytest.approx(5.0 * train.values[0].std())


def test_level_shift_covers_its_range() -> None:
    """A level shift labels and offsets a contiguous segment."""
    spec = SyntheticSpec(
        train_length=200,
        test_length=100,
        noise_level=0.0,
        anomalies=(AnomalySpec(ANOMALY_LEVEL_SHIFT, 10, 5, 2.0),),
    )
    _, test = synth_generate(spec)
    assert np.flatnonzero(test.labels).tolist() == [10, 11, 12, 13, 14]


def test_pattern_distortion_raises_frequency() -> None:
    """Inside the segment the dominant period shrinks by the magnitude."""
    period, magnitude, length = 32.0, 4.0, 128
    spec = SyntheticSpec(
        train_length=256,
        test_length=512,
        noise_level=0.0,
        period=period,
        anomalies=(AnomalySpec(ANOMALY_PATTERN_DISTORTION, 200, length, magnitude),),
    )
    _, test = synth_generate(spec)
    segment = test.values[0, 200 : 200 + length]
    spectrum = np.abs(np.fft.rfft(segment - segment.mean()))
    peak = int(np.argmax(spectrum))
    assert peak == round(length * magnitude / period)
    assert test.labels[200 : 200 + length].all()


@pytest.mark.parametrize("family", [FAMILY_MULTI_SINE, FAMILY_TREND_SEASON])
def test_other_families(family: str) -> None:
    """Every family produces finite multivariate series."""
    train, test = synth_generate(SyntheticSpec(family=family, train_length=80, test_length=40, n_features=3))
    assert train.values.shape == (3, 80)
    assert test.values.shape == (3, 40)


def test_overlapping_anomalies_are_rejected() -> None:
    """Anomaly ranges must be disjoint."""
    with pytest.raises(DataError, match="overlap"):
        SyntheticSpec(
            test_length=100,
            anomalies=(
                AnomalySpec(ANOMALY_PATTERN_DISTORTION, 10, 10, 3.0),
                AnomalySpec(ANOMALY_POINT_SPIKE, 15),
            ),
        )


def test_out_of_range_anomaly() -> None:
    """Anomalies must lie inside the test series."""
    with pytest.raises(DataError, match="outside"):
        SyntheticSpec(test_length=50, anomalies=(AnomalySpec(ANOMALY_LEVEL_SHIFT, 45, 10),))


def test_invalid_spec_collects_problems() -> None:
    """Every invalid size is reported in one error."""
    with pytest.raises(DataError) as err:
        SyntheticSpec(family="square", train_length=0, period=0.0)
    message = str(err.value)
    assert "family" in message and "train_length" in message and "period" in message


def test_same_seed_same_data() -> None:
    """Generation is a function of the synthetic settings."""
    first = synth_generate(standard_fixture(seed=4))
    second = synth_generate(standard_fixture(seed=4))
    other = synth_generate(standard_fixture(seed=5))
    for a, b in zip(first, second):
        np.testing.assert_array_equal(a.values, b.values)
    assert not np.array_equal(first[1].values, other[1].values)


def test_standard_fixture_labels() -> None:
    """Three spikes and one 40-step distortion."""
    _, test = synth_generate(standard_fixture())
    assert int(test.labels.sum()) == 43
    assert test.labels[150] == 1 and test.labels[600:640].all()
