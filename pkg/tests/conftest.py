"""Common fixtures for AnomalyFilter tests."""
from collections.abc import Callable, Generator
from pathlib import Path
from unittest.mock import patch

import numpy as np
import pytest

from anomaly_filter.config import AblationConfig, PathsConfig, RunConfig
from anomaly_filter.data import DataConfig, TimeSeries
from anomaly_filter.denoiser import Denoiser, DenoiserConfig, DenoiserSettings
from anomaly_filter.diffusion import DiffusionConfig
from anomaly_filter.metrics import MetricsConfig
from anomaly_filter.scoring import ScoringConfig
from anomaly_filter.synthetic import AnomalySpec, SyntheticSpec
from anomaly_filter.training import TrainingRunConfig

TINY_CONFIG_TEXT = """
[diffusion]
steps = 10
reverse_steps = 10

[denoiser]
n_blocks = 1
latent_dim = 8
n_heads = 2

[training]
batch_size = 16
max_epochs = 2
patience = none

[data]
window_len = 16
train_stride = 4
inference_stride = 16

[scoring]
smoothing_window = 5

[metrics]
threshold_grid = 20
buffer = 4
vus_max_buffer = 4

[synthetic]
train_length = 160
test_length = 96
period = 16
anomalies = point-spike@20, pattern-distortion@50:12:3.0

[ablation]
seeds = 0, 1
"""


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded generator."""
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_denoiser_config() -> DenoiserConfig:
    """Smallest useful architecture: one block, d=8, two heads, D=2, L=8."""
    return DenoiserConfig(n_features=2, window_len=8, n_blocks=1, latent_dim=8, n_heads=2, max_step=10)


@pytest.fixture
def tiny_model(tiny_denoiser_config: DenoiserConfig) -> Denoiser:
    """Freshly initialized tiny network (zero output head)."""
    return Denoiser.initialize(tiny_denoiser_config, np.random.default_rng(0))


@pytest.fixture
def live_model(tiny_denoiser_config: DenoiserConfig) -> Denoiser:
    """Tiny network whose output head is randomized, so predictions depend on every weight."""
    model = Denoiser.initialize(tiny_denoiser_config, np.random.default_rng(0))
    head_rng = np.random.default_rng(1)
    for name in ("output.fc2.weight", "output.fc2.bias"):
        model.params[name].assign(head_rng.normal(0.0, 0.5, size=model.params[name].shape))
    return model


@pytest.fixture
def small_spec() -> SyntheticSpec:
    """Short univariate fixture with one spike and one distortion."""
    return SyntheticSpec(
        train_length=160,
        test_length=96,
        period=16.0,
        anomalies=(
            AnomalySpec("point-spike", 20, 1, 5.0),
            AnomalySpec("pattern-distortion", 50, 12, 3.0),
        ),
        seed=0,
    )


@pytest.fixture
def tiny_run_config(small_spec: SyntheticSpec, tmp_path: Path) -> RunConfig:
    """RunConfig sized for second-scale training."""
    return RunConfig(
        diffusion=DiffusionConfig(steps=10, reverse_steps=10),
        denoiser=DenoiserSettings(n_blocks=1, latent_dim=8, n_heads=2),
        training=TrainingRunConfig(batch_size=16, max_epochs=2, patience=None),
        data=DataConfig(window_len=16, train_stride=4, inference_stride=16),
        scoring=ScoringConfig(smoothing_window=5),
        metrics=MetricsConfig(threshold_grid=20, buffer=4, vus_max_buffer=4),
        paths=PathsConfig(output_dir=str(tmp_path / "out")),
        synthetic=small_spec,
        ablation=AblationConfig(seeds=(0, 1)),
    )


@pytest.fixture
def sine_series() -> TimeSeries:
    """Clean two-feature sine training series."""
    t = np.arange(200, dtype=np.float64)
    return TimeSeries(values=np.stack([np.sin(t / 5.0), np.cos(t / 7.0)]), name="sine")


@pytest.fixture
def write_config(tmp_path: Path) -> Callable[[str], Path]:
    """Write INI text into the test directory and return its path."""

    def _write(text: str = TINY_CONFIG_TEXT, name: str = "run.ini") -> Path:
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path

    return _write


@pytest.fixture
def clean_env() -> Generator[None]:
    """Run without the output-root environment variable."""
    with patch.dict("os.environ", {}, clear=False) as environ:
        environ.pop("ANOMALY_FILTER_OUTPUT", None)
        yield
