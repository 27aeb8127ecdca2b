"""Tests for the method variants."""
import pytest

from anomaly_filter.diffusion import DiffusionConfig
from anomaly_filter.exceptions import ConfigError
from anomaly_filter.methods import (
    MAIN_METHODS,
    METHOD_PLANS,
    InferenceMode,
    Method,
    inference_noise,
    parse_method,
    plan_for,
    training_config,
)
from anomaly_filter.training import Objective


def test_every_method_has_a_plan() -> None:
    """The plan table covers the enum."""
    assert set(METHOD_PLANS) == set(Method)
    assert set(MAIN_METHODS) <= set(Method)


def test_anomaly_filter_plan() -> None:
    """The full method trains with masked diffusion and reconstructs noiselessly."""
    plan = plan_for("AnomalyFilter")
    assert plan.objective == Objective.DIFFUSION
    assert plan.masked
    assert plan.inference == InferenceMode.NOISELESS


def test_unknown_method() -> None:
    """Unknown names list the known ones."""
    with pytest.raises(ConfigError, match="DDPM\\+mask"):
        parse_method("VAE")


@pytest.mark.parametrize(
    ("method", "mask_ratio", "loss_weight"),
    [
        (Method.ANOMALY_FILTER, 0.3, 0.7),
        (Method.DDPM_MASK, 0.3, 0.7),
        (Method.DDPM, 1.0, 1.0),
        (Method.DDPM_NOISELESS, 1.0, 1.0),
        (Method.DAE, 1.0, 1.0),
        (Method.DAE_MASK_NOISELESS, 0.3, 0.7),
    ],
)
def test_training_config(method: Method, mask_ratio: float, loss_weight: float) -> None:
    """Unmasked variants train with plain Gaussian noise."""
    config = training_config(method, DiffusionConfig(mask_ratio=0.3, loss_weight=0.7))
    assert (config.mask_ratio, config.loss_weight) == (mask_ratio, loss_weight)


def test_inference_noise_per_method() -> None:
    """Without a configured strength, noiseless methods use 0 and naive ones 1."""
    config = DiffusionConfig()
    assert inference_noise(Method.ANOMALY_FILTER, config) == 0.0
    assert inference_noise(Method.DDPM, config) == 1.0
    assert inference_noise(Method.DAE, config) == 1.0
    assert inference_noise(Method.DAE_NOISELESS, config) == 0.0


@pytest.mark.parametrize("method", list(Method))
@pytest.mark.parametrize("mode", [None, InferenceMode.NOISELESS, InferenceMode.NAIVE])
def test_configured_strength_always_wins(method: Method, mode: InferenceMode | None) -> None:
    """An explicit omega is used whatever the method or mode."""
    for omega in (0.0, 0.4, 1.0):
        assert inference_noise(method, DiffusionConfig(inference_noise=omega), mode) == omega


def test_inference_mode_override() -> None:
    """An explicit mode wins over the method's own procedure."""
    config = DiffusionConfig()
    assert inference_noise(Method.DDPM, config, "noiseless") == 0.0
    assert inference_noise(Method.ANOMALY_FILTER, config, InferenceMode.NAIVE) == 1.0
    with pytest.raises(ValueError):
        inference_noise(Method.DDPM, config, "sideways")
