"""Tests for per-timestep scoring."""
from pathlib import Path

import numpy as np
import pytest

from anomaly_filter.const import ALIGN_CENTERED, ALIGN_TRAILING
from anomaly_filter.exceptions import ConfigError, DataError, ShapeError
from anomaly_filter.scoring import (
    ScoringConfig,
    assemble_scores,
    build_score_series,
    mse_split,
    pointwise_mse,
    read_score_csv,
    smooth,
    write_score_csv,
)


def test_pointwise_mse_examples() -> None:
    """Identical inputs score zero; a unit offset in one of two features scores 0.5."""
    x = np.arange(6.0).reshape(2, 3)
    np.testing.assert_array_equal(pointwise_mse(x, x), np.zeros(3))
    shifted = x.copy()
    shifted[0] += 1.0
    np.testing.assert_array_equal(pointwise_mse(x, shifted), np.full(3, 0.5))


def test_pointwise_mse_matches_loop(rng: np.random.Generator) -> None:
    """Vectorized scores equal an explicit double loop."""
    x = rng.normal(size=(4, 9))
    x_hat = rng.normal(size=(4, 9))
    expected = [sum((x[d, t] - x_hat[d, t]) ** 2 for d in range(4)) / 4 for t in range(9)]
    np.testing.assert_allclose(pointwise_mse(x, x_hat), expected, rtol=1e-12)


def test_pointwise_mse_shape_errors() -> None:
    """Mismatched or one-dimensional inputs are rejected."""
    with pytest.raises(ShapeError, match="differ"):
        pointwise_mse(np.zeros((2, 3)), np.zeros((3, 2)))
    with pytest.raises(ShapeError, match="expected"):
        pointwise_mse(np.zeros(3), np.zeros(3))


def test_assemble_averages_overlaps() -> None:
    """Overlapping windows are averaged per timestep."""
    scores = assemble_scores([[1.0, 1.0, 1.0], [3.0, 3.0, 3.0]], [0, 2], 5)
    np.testing.assert_array_equal(scores, [1.0, 1.0, 2.0, 3.0, 3.0])


def test_assemble_errors() -> None:
    """Uncovered timesteps and out-of-range windows are data errors."""
    with pytest.raises(DataError, match="not covered"):
        assemble_scores([[1.0, 1.0]], [0], 4)
    with pytest.raises(DataError, match="outside"):
        assemble_scores([[1.0, 1.0]], [3], 4)
    with pytest.raises(ShapeError):
        assemble_scores([[1.0, 1.0]], [0, 1], 4)


def test_smooth_constant_is_unchanged() -> None:
    """A constant series stays constant at every window."""
    for window in (1, 2, 5, 50):
        np.testing.assert_allclose(smooth(np.full(20, 3.0), window), np.full(20, 3.0))


def test_window_one_is_identity(rng: np.random.Generator) -> None:
    """w=1 returns the input."""
    values = rng.random(15)
    np.testing.assert_allclose(smooth(values, 1), values, rtol=1e-12)
    np.testing.assert_allclose(smooth(values, 1, ALIGN_TRAILING), values, rtol=1e-12)


def test_smooth_impulse_centered() -> None:
    """An interior impulse spreads evenly over the centered window."""
    values = np.zeros(11)
    values[5] = 5.0
    np.testing.assert_allclose(smooth(values, 5), [0, 0, 0, 1, 1, 1, 1, 1, 0, 0, 0], atol=1e-12)


def test_smooth_impulse_trailing() -> None:
    """A trailing window spreads the impulse forward only."""
    values = np.zeros(8)
    values[2] = 3.0
    np.testing.assert_allclose(smooth(values, 3, ALIGN_TRAILING), [0, 0, 1, 1, 1, 0, 0, 0], atol=1e-12)


def test_smooth_truncates_edges() -> None:
    """Edge positions average only the available values."""
    np.testing.assert_allclose(smooth([4.0, 0.0, 0.0, 0.0], 3), [2.0, 4.0 / 3.0, 0.0, 0.0])


def test_smooth_preserves_interior_mass(rng: np.random.Generator) -> None:
    """Away from the edges smoothing keeps the total score."""
    values = np.zeros(60)
    values[20:40] = rng.random(20)
    assert smooth(values, 7).sum() == pytest.approx(values.sum(), rel=1e-12)


def test_smooth_errors() -> None:
    """Bad windows and alignments are configuration errors."""
    with pytest.raises(ConfigError):
        smooth([1.0], 0)
    with pytest.raises(ConfigError, match="alignment"):
        smooth([1.0], 3, "leading")


def test_mse_split() -> None:
    """Anomalous and normal means and their ratio."""
    split = mse_split([4.0, 1.0, 1.0, 2.0], [1, 0, 0, 1])
    assert (split.mse_a, split.mse_n, split.ratio) == (3.0, 1.0, 3.0)


def test_mse_split_undefined_parts() -> None:
    """Missing classes leave their mean and the ratio undefined."""
    split = mse_split([1.0, 2.0], [0, 0])
    assert split.mse_a is None
    assert split.mse_n == 1.5
    assert split.ratio is None
    assert mse_split([1.0], [1]).mse_n is None


def test_score_csv_round_trip(tmp_path: Path, rng: np.random.Generator) -> None:
    """Scores, labels and provenance survive a write and read."""
    labels = (rng.random(30) < 0.2).astype(int)
    series = build_score_series(
        rng.random(30), ScoringConfig(smoothing_window=3, smoothing_align=ALIGN_CENTERED), "abc123", 7, labels
    )
    path = write_score_csv(series, tmp_path / "scores" / "s.csv")
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# config_hash=abc123 seed=7")
    assert lines[1] == "t,score,raw_score,label"
    loaded = read_score_csv(path)
    np.testing.assert_array_equal(loaded.scores, series.scores)
    np.testing.assert_array_equal(loaded.raw_scores, series.raw_scores)
    np.testing.assert_array_equal(loaded.labels, labels)
    assert (loaded.config_hash, loaded.seed, loaded.smoothing_window) == ("abc123", 7, 3)


def test_score_csv_without_labels(tmp_path: Path) -> None:
    """Unlabelled score files have three columns."""
    path = write_score_csv(build_score_series([0.5, 0.25], ScoringConfig(smoothing_window=1)), tmp_path / "s.csv")
    assert path.read_text().splitlines()[1] == "t,score,raw_score"
    loaded = read_score_csv(path)
    assert loaded.labels is None
    assert loaded.seed is None


def test_read_score_csv_errors(tmp_path: Path) -> None:
    """Wrong headers and short rows name the offending row."""
    path = tmp_path / "bad.csv"
    path.write_text("time,value\n0,1.0\n")
    with pytest.raises(DataError, match="expected columns"):
        read_score_csv(path)
    path.write_text("# seed=None\nt,score,raw_score\n0,1.0\n")
    with pytest.raises(DataError, match="row 3"):
        read_score_csv(path)


def test_negative_scores_rejected() -> None:
    """Scores are non-negative."""
    with pytest.raises(DataError, match="non-negative"):
        build_score_series([-1.0, 0.0], ScoringConfig(smoothing_window=1))
