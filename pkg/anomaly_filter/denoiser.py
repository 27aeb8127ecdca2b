"""Noise-prediction network: residual blocks with temporal and feature transformer layers."""
from __future__ import annotations

from collections.abc import Mapping
from dataclasses import asdict, dataclass
import logging
import math
from typing import Any

import numpy as np
from numpy.typing import ArrayLike

from . import autodiff as ad
from .autodiff import NdArray, Tensor
from .const import (
    DEFAULT_LATENT_DIM,
    DEFAULT_N_BLOCKS,
    DEFAULT_N_HEADS,
    DEFAULT_STEPS,
    DEFAULT_WINDOW_LEN,
    HIGH_DIM_FEATURES,
    HIGH_DIM_LATENT_DIM,
    HIGH_DIM_N_BLOCKS,
    STEP_EMBED_DIM,
)
from .exceptions import ConfigError, ShapeError

_LOGGER = logging.getLogger(__name__)

_ENCODER_PARTS = ("attn.query", "attn.key", "attn.value", "attn.out", "ff.hidden", "ff.out")


@dataclass(frozen=True)
class DenoiserConfig:
    """Architecture of the noise predictor."""

    n_features: int
    window_len: int = DEFAULT_WINDOW_LEN
    n_blocks: int = DEFAULT_N_BLOCKS
    latent_dim: int = DEFAULT_LATENT_DIM
    n_heads: int = DEFAULT_N_HEADS
    step_embed_dim: int = STEP_EMBED_DIM
    max_step: int = DEFAULT_STEPS

    def __post_init__(self) -> None:
        problems = []
        for key in ("n_features", "window_len", "n_blocks", "latent_dim", "n_heads", "max_step"):
            if getattr(self, key) < 1:
                problems.append(f"{key} must be a positive integer")
        if self.latent_dim % self.n_heads:
            problems.append(f"latent_dim {self.latent_dim} is not divisible by n_heads {self.n_heads}")
        if self.latent_dim % 2:
            problems.append("latent_dim must be even for sinusoidal encodings")
        if self.step_embed_dim != STEP_EMBED_DIM:
            problems.append(f"step_embed_dim is fixed at {STEP_EMBED_DIM}")
        if problems:
            raise ConfigError(problems)

    def as_dict(self) -> dict[str, int]:
        """Return the config as plain data."""
        return asdict(self)


@dataclass(frozen=True)
class DenoiserSettings:
    """User-facing architecture knobs; None picks the size from the feature count."""

    n_blocks: int | None = None
    latent_dim: int | None = None
    n_heads: int = DEFAULT_N_HEADS

    def resolve(self, n_features: int, window_len: int, max_step: int) -> DenoiserConfig:
        """Concrete architecture for a dataset with `n_features` features."""
        high_dim = n_features >= HIGH_DIM_FEATURES
        n_blocks = self.n_blocks
        latent_dim = self.latent_dim
        if n_blocks is None:
            n_blocks = HIGH_DIM_N_BLOCKS if high_dim else DEFAULT_N_BLOCKS
        if latent_dim is None:
            latent_dim = HIGH_DIM_LATENT_DIM if high_dim else DEFAULT_LATENT_DIM
        if high_dim and (self.n_blocks is None or self.latent_dim is None):
            _LOGGER.info(
                "D=%d: using high-dimensional backbone n_blocks=%d latent_dim=%d", n_features, n_blocks, latent_dim
            )
        return DenoiserConfig(
            n_features=n_features,
            window_len=window_len,
            n_blocks=n_blocks,
            latent_dim=latent_dim,
            n_heads=self.n_heads,
            max_step=max_step,
        )

    def as_dict(self) -> dict[str, int | None]:
        """Return the settings as plain data."""
        return asdict(self)


def sinusoidal_step_encoding(steps: ArrayLike, dim: int = STEP_EMBED_DIM) -> NdArray:
    """Raw sin/cos encoding of diffusion steps over a geometric ladder with base 10000.

    Returns shape (len(steps), dim): the first half holds sines, the second cosines.
    """
    t = np.atleast_1d(np.asarray(steps, dtype=np.float64))
    half = dim // 2
    frequencies = np.exp(-math.log(10000.0) * np.arange(half) / max(half - 1, 1))
    angles = t[:, None] * frequencies[None, :]
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=1)


def positional_encoding(length: int, dim: int) -> NdArray:
    """Transformer-style position table of shape (length, dim)."""
    position = np.arange(length, dtype=np.float64)[:, None]
    div_term = np.exp(np.arange(0, dim, 2, dtype=np.float64) * (-math.log(10000.0) / dim))
    table = np.zeros((length, dim))
    table[:, 0::2] = np.sin(position * div_term)
    table[:, 1::2] = np.cos(position * div_term)
    return table


def _parameter_shapes(config: DenoiserConfig) -> dict[str, tuple[int, ...]]:
    d, e = config.latent_dim, config.step_embed_dim
    shapes: dict[str, tuple[int, ...]] = {
        "input.weight": (1, d),
        "input.bias": (d,),
        "step.fc1.weight": (e, e),
        "step.fc1.bias": (e,),
        "step.fc2.weight": (e, e),
        "step.fc2.bias": (e,),
    }
    for i in range(config.n_blocks):
        prefix = f"blocks.{i}"
        shapes[f"{prefix}.step_proj.weight"] = (e, d)
        shapes[f"{prefix}.step_proj.bias"] = (d,)
        for layer in ("time", "feature"):
            for part in _ENCODER_PARTS:
                shapes[f"{prefix}.{layer}.{part}.weight"] = (d, d)
                shapes[f"{prefix}.{layer}.{part}.bias"] = (d,)
            for norm in ("norm1", "norm2"):
                shapes[f"{prefix}.{layer}.{norm}.gamma"] = (d,)
                shapes[f"{prefix}.{layer}.{norm}.beta"] = (d,)
        shapes[f"{prefix}.mid_proj.weight"] = (d, 2 * d)
        shapes[f"{prefix}.mid_proj.bias"] = (2 * d,)
        shapes[f"{prefix}.out_proj.weight"] = (d, 2 * d)
        shapes[f"{prefix}.out_proj.bias"] = (2 * d,)
    shapes["output.fc1.weight"] = (d, d)
    shapes["output.fc1.bias"] = (d,)
    shapes["output.fc2.weight"] = (d, 1)
    shapes["output.fc2.bias"] = (1,)
    return shapes


def parameter_count(config: DenoiserConfig) -> int:
    """Number of trainable scalars for `config`."""
    return sum(int(np.prod(shape)) for shape in _parameter_shapes(config).values())


def _initial_value(
    name: str,
    shape: tuple[int, ...],
    shapes: Mapping[str, tuple[int, ...]],
    rng: np.random.Generator,
) -> NdArray:
    if name.startswith("output.fc2."):
        return np.zeros(shape)
    if name.endswith(".gamma"):
        return np.ones(shape)
    if name.endswith(".beta"):
        return np.zeros(shape)
    # a bias shares the fan-in of its weight
    weight_shape = shapes[name[: -len("bias")] + "weight"] if name.endswith(".bias") else shape
    bound = 1.0 / math.sqrt(weight_shape[0])
    return rng.uniform(-bound, bound, size=shape)


class Denoiser:
    """Noise predictor eps_theta(x_t, t)."""

    def __init__(
        self,
        config: DenoiserConfig,
        params: Mapping[str, Tensor],
        buffers: Mapping[str, NdArray] | None = None,
    ) -> None:
        """Initialize from an existing parameter set."""
        expected = _parameter_shapes(config)
        if set(params) != set(expected):
            missing = sorted(set(expected) - set(params))
            extra = sorted(set(params) - set(expected))
            raise ShapeError(f"denoiser parameters do not match config (missing={missing}, unexpected={extra})")
        for name, shape in expected.items():
            if params[name].shape != shape:
                raise ShapeError(f"parameter {name!r} has shape {params[name].shape}, expected {shape}")
        self.config = config
        self.params: dict[str, Tensor] = {name: params[name] for name in expected}
        if buffers is None:
            buffers = {
                "time_encoding": positional_encoding(config.window_len, config.latent_dim),
                "feature_encoding": positional_encoding(config.n_features, config.latent_dim),
            }
        self.buffers: dict[str, NdArray] = {k: np.array(v, dtype=np.float64) for k, v in buffers.items()}

    @classmethod
    def initialize(cls, config: DenoiserConfig, rng: np.random.Generator) -> Denoiser:
        """Build a freshly initialized network; the final projection starts at zero."""
        shapes = _parameter_shapes(config)
        params = {
            name: Tensor(_initial_value(name, shape, shapes, rng), requires_grad=True, name=name)
            for name, shape in shapes.items()
        }
        _LOGGER.debug("Initialized denoiser with %d parameters", parameter_count(config))
        return cls(config, params)

    @property
    def parameter_count(self) -> int:
        """Number of trainable scalars."""
        return parameter_count(self.config)

    def state_dict(self) -> dict[str, NdArray]:
        """Return copies of all parameter values."""
        return {name: np.array(p.value) for name, p in self.params.items()}

    def load_state_dict(self, state: Mapping[str, ArrayLike]) -> None:
        """Overwrite parameter values in place."""
        for name, param in self.params.items():
            if name not in state:
                raise ShapeError(f"state is missing parameter {name!r}")
            param.assign(state[name])

    # Building blocks

    def _linear(self, x: Tensor, prefix: str) -> Tensor:
        return ad.matmul(x, self.params[f"{prefix}.weight"]) + self.params[f"{prefix}.bias"]

    def embed_step(self, steps: ArrayLike) -> Tensor:
        """Sinusoidal step encoding followed by two SiLU fully connected layers; shape (B, 128)."""
        t = np.atleast_1d(np.asarray(steps))
        if t.size and (t.min() < 1 or t.max() > self.config.max_step):
            raise ShapeError(f"embed_step: diffusion step out of range 1..{self.config.max_step}: {t.tolist()}")
        raw = Tensor(sinusoidal_step_encoding(t, self.config.step_embed_dim))
        hidden = ad.silu(self._linear(raw, "step.fc1"))
        return ad.silu(self._linear(hidden, "step.fc2"))

    def _attention(self, z: Tensor, prefix: str) -> Tensor:
        batch, length, d = z.shape
        heads = self.config.n_heads
        head_dim = d // heads

        def _split(t: Tensor) -> Tensor:
            return ad.permute(ad.reshape(t, (batch, length, heads, head_dim)), (0, 2, 1, 3))

        q = _split(self._linear(z, f"{prefix}.query"))
        k = _split(self._linear(z, f"{prefix}.key"))
        v = _split(self._linear(z, f"{prefix}.value"))
        scores = ad.matmul(q, ad.transpose(k)) * (1.0 / math.sqrt(head_dim))
        context = ad.matmul(ad.softmax(scores), v)
        merged = ad.reshape(ad.permute(context, (0, 2, 1, 3)), (batch, length, d))
        return self._linear(merged, f"{prefix}.out")

    def _encoder_layer(self, z: Tensor, encoding: NdArray, prefix: str) -> Tensor:
        p = self.params
        z = z + Tensor(encoding)
        z = ad.layer_norm(z + self._attention(z, f"{prefix}.attn"), p[f"{prefix}.norm1.gamma"], p[f"{prefix}.norm1.beta"])
        ff = self._linear(ad.silu(self._linear(z, f"{prefix}.ff.hidden")), f"{prefix}.ff.out")
        return ad.layer_norm(z + ff, p[f"{prefix}.norm2.gamma"], p[f"{prefix}.norm2.beta"])

    def _block(self, h: Tensor, step_embedding: Tensor, index: int) -> tuple[Tensor, Tensor]:
        batch, n_features, length, d = h.shape
        prefix = f"blocks.{index}"
        projected = self._linear(step_embedding, f"{prefix}.step_proj")
        y = h + ad.reshape(projected, (batch, 1, 1, d))

        # temporal layer: a sequence along L for every feature
        temporal = ad.reshape(y, (batch * n_features, length, d))
        temporal = self._encoder_layer(temporal, self.buffers["time_encoding"], f"{prefix}.time")
        y = ad.reshape(temporal, (batch, n_features, length, d))

        # feature layer: a sequence along D for every timestep
        across = ad.reshape(ad.permute(y, (0, 2, 1, 3)), (batch * length, n_features, d))
        across = self._encoder_layer(across, self.buffers["feature_encoding"], f"{prefix}.feature")
        y = ad.permute(ad.reshape(across, (batch, length, n_features, d)), (0, 2, 1, 3))

        y = self._linear(y, f"{prefix}.mid_proj")
        y = ad.sigmoid(y[..., :d]) * ad.tanh(y[..., d:])
        y = self._linear(y, f"{prefix}.out_proj")
        residual, skip = y[..., :d], y[..., d:]
        return (h + residual) * (1.0 / math.sqrt(2.0)), skip

    def predict_noise(self, x_t: Tensor | ArrayLike, steps: ArrayLike) -> Tensor:
        """Predict the noise in `x_t` (shape (D, L) or (B, D, L)) at diffusion step(s) `steps`."""
        x = ad.as_tensor(x_t)
        squeeze = x.ndim == 2
        if squeeze:
            x = ad.reshape(x, (1,) + x.shape)
        cfg = self.config
        if x.ndim != 3 or x.shape[1:] != (cfg.n_features, cfg.window_len):
            raise ShapeError(
                f"predict_noise: input shape {x.shape} "
                f"does not match (D, L) = ({cfg.n_features}, {cfg.window_len})"
            )
        if not np.all(np.isfinite(x.value)):
            raise ShapeError("predict_noise: input contains non-finite values")
        batch = x.shape[0]
        t = np.broadcast_to(np.asarray(steps), (batch,))

        h = ad.silu(self._linear(ad.reshape(x, (batch, cfg.n_features, cfg.window_len, 1)), "input"))
        step_embedding = self.embed_step(t)
        skips = []
        for index in range(cfg.n_blocks):
            h, skip = self._block(h, step_embedding, index)
            skips.append(skip)
        total = skips[0]
        for skip in skips[1:]:
            total = total + skip
        total = total * (1.0 / math.sqrt(cfg.n_blocks))
        out = self._linear(ad.silu(self._linear(total, "output.fc1")), "output.fc2")
        out = ad.reshape(out, (batch, cfg.n_features, cfg.window_len))
        if squeeze:
            out = ad.reshape(out, (cfg.n_features, cfg.window_len))
        return out

    def __call__(self, x_t: Tensor | ArrayLike, steps: ArrayLike) -> Tensor:
        return self.predict_noise(x_t, steps)

    def config_summary(self) -> dict[str, Any]:
        """Return the architecture plus parameter count."""
        return {**self.config.as_dict(), "parameter_count": self.parameter_count}
