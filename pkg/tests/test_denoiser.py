"""Tests for the noise-prediction network."""
import numpy as np
import pytest

from anomaly_filter import autodiff as ad
from anomaly_filter.const import HIGH_DIM_FEATURES
from anomaly_filter.denoiser import (
    Denoiser,
    DenoiserConfig,
    DenoiserSettings,
    parameter_count,
    positional_encoding,
    sinusoidal_step_encoding,
)
from anomaly_filter.exceptions import ConfigError, ShapeError


def test_parameter_count_is_a_function_of_config(tiny_denoiser_config: DenoiserConfig) -> None:
    """Regression constant for the tiny architecture."""
    assert parameter_count(tiny_denoiser_config) == 35369
    model = Denoiser.initialize(tiny_denoiser_config, np.random.default_rng(5))
    assert model.parameter_count == 35369
    assert sum(p.size for p in model.params.values()) == 35369


def test_config_validation() -> None:
    """Heads must divide the latent width; every problem is reported."""
    with pytest.raises(ConfigError) as err:
        DenoiserConfig(n_features=0, latent_dim=10, n_heads=4)
    assert len(err.value.problems) == 2


def test_step_embed_dim_is_fixed() -> None:
    """The step encoding width is 128."""
    with pytest.raises(ConfigError, match="128"):
        DenoiserConfig(n_features=1, step_embed_dim=64)


def test_high_dimensional_fallback() -> None:
    """Wide datasets get the smaller backbone unless the user chose one."""
    auto = DenoiserSettings().resolve(HIGH_DIM_FEATURES, 100, 50)
    assert (auto.n_blocks, auto.latent_dim) == (4, 32)
    narrow = DenoiserSettings().resolve(5, 100, 50)
    assert (narrow.n_blocks, narrow.latent_dim) == (8, 64)
    chosen = DenoiserSettings(n_blocks=2, latent_dim=16).resolve(HIGH_DIM_FEATURES, 100, 50)
    assert (chosen.n_blocks, chosen.latent_dim) == (2, 16)


def test_raw_step_encoding_at_zero() -> None:
    """At t=0 every sine is 0 and every cosine is 1."""
    raw = sinusoidal_step_encoding([0])[0]
    np.testing.assert_array_equal(raw[:64], np.zeros(64))
    np.testing.assert_array_equal(raw[64:], np.ones(64))


def test_raw_step_encoding_distinguishes_steps() -> None:
    """t=1 and t=2 differ in every sine component."""
    raw = sinusoidal_step_encoding([1, 2])
    assert np.all(raw[0, :64] != raw[1, :64])


def test_embed_step_deterministic_and_range_checked(tiny_model: Denoiser) -> None:
    """The same step embeds identically; steps outside 1..T are rejected."""
    first = tiny_model.embed_step(3).value
    np.testing.assert_array_equal(first, tiny_model.embed_step(3).value)
    assert first.shape == (1, 128)
    with pytest.raises(ShapeError, match="out of range"):
        tiny_model.embed_step(0)
    with pytest.raises(ShapeError, match="out of range"):
        tiny_model.embed_step(11)


def test_zero_head_predicts_zero(tiny_model: Denoiser, rng: np.random.Generator) -> None:
    """An untrained network outputs exactly zero noise."""
    out = tiny_model.predict_noise(rng.normal(size=(2, 8)), 4)
    np.testing.assert_array_equal(out.value, np.zeros((2, 8)))


@pytest.mark.parametrize("n_features", [1, 5, 38])
def test_output_matches_input_shape(n_features: int, rng: np.random.Generator) -> None:
    """(D, L) in, (D, L) out; batches keep their leading axis."""
    config = DenoiserConfig(n_features=n_features, window_len=100, n_blocks=1, latent_dim=8, n_heads=2)
    model = Denoiser.initialize(config, rng)
    assert model.predict_noise(rng.normal(size=(n_features, 100)), 1).shape == (n_features, 100)
    assert model.predict_noise(rng.normal(size=(2, n_features, 100)), [1, 7]).shape == (2, n_features, 100)


def test_shape_mismatch(tiny_model: Denoiser) -> None:
    """Inputs must match the configured (D, L)."""
    with pytest.raises(ShapeError, match="does not match"):
        tiny_model.predict_noise(np.zeros((3, 8)), 1)


def test_non_finite_input(tiny_model: Denoiser) -> None:
    """NaN inputs are rejected."""
    x = np.zeros((2, 8))
    x[0, 0] = np.nan
    with pytest.raises(ShapeError, match="non-finite"):
        tiny_model.predict_noise(x, 1)


def test_feature_permutation_equivariance(rng: np.random.Generator) -> None:
    """Permuting input features together with the feature encoding permutes the output."""
    config = DenoiserConfig(n_features=3, window_len=6, n_blocks=1, latent_dim=8, n_heads=2, max_step=5)
    model = Denoiser.initialize(config, rng)
    model.params["output.fc2.weight"].assign(rng.normal(size=(8, 1)))
    perm = np.array([2, 0, 1])
    permuted = Denoiser(
        config,
        model.params,
        buffers={
            "time_encoding": model.buffers["time_encoding"],
            "feature_encoding": model.buffers["feature_encoding"][perm],
        },
    )
    x = rng.normal(size=(3, 6))
    out = model.predict_noise(x, 2).value
    out_permuted = permuted.predict_noise(x[perm], 2).value
    np.testing.assert_allclose(out_permuted, out[perm], atol=1e-12)


def test_positional_encoding_layout() -> None:
    """Even columns are sines, odd columns cosines."""
    table = positional_encoding(4, 6)
    np.testing.assert_array_equal(table[0, 0::2], np.zeros(3))
    np.testing.assert_array_equal(table[0, 1::2], np.ones(3))


def test_state_dict_round_trip(tiny_model: Denoiser, live_model: Denoiser) -> None:
    """Loading a state reproduces its predictions."""
    x = np.random.default_rng(2).normal(size=(2, 8))
    tiny_model.load_state_dict(live_model.state_dict())
    np.testing.assert_array_equal(tiny_model.predict_noise(x, 3).value, live_model.predict_noise(x, 3).value)


def test_wrong_parameter_set(tiny_denoiser_config: DenoiserConfig, tiny_model: Denoiser) -> None:
    """A parameter set for another architecture is rejected."""
    params = dict(tiny_model.params)
    params.pop("input.bias")
    with pytest.raises(ShapeError, match="missing"):
        Denoiser(tiny_denoiser_config, params)


@pytest.mark.parametrize("seed", range(10))
def test_end_to_end_gradient(live_model: Denoiser, seed: int) -> None:
    """Noise-prediction loss gradients agree with central differences."""
    rng = np.random.default_rng(seed)
    x_t = rng.normal(size=(2, 2, 8))
    target = rng.normal(size=(2, 2, 8))
    steps = np.array([1, 6])

    def loss() -> ad.Tensor:
        return ad.squared_error(live_model.predict_noise(x_t, steps), target) / float(target.size)

    grads = ad.grad_map(loss(), live_model.params)
    h = 1e-5
    worst = 0.0
    for name in ("input.weight", "blocks.0.time.attn.query.weight", "blocks.0.feature.ff.out.bias", "output.fc2.weight"):
        leaf = live_model.params[name]
        base = np.array(leaf.value)
        for index in list(np.ndindex(base.shape))[:4]:
            shifted = base.copy()
            shifted[index] += h
            leaf.assign(shifted)
            upper = loss().item()
            shifted[index] -= 2 * h
            leaf.assign(shifted)
            lower = loss().item()
            leaf.assign(base)
            numeric = (upper - lower) / (2 * h)
            analytic = grads[name][index]
            worst = max(worst, abs(analytic - numeric) / max(abs(analytic) + abs(numeric), 1e-5))
    assert worst < 1e-3
