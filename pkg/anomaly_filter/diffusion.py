"""Noise schedules, forward corruption, the training objectives and the reverse process."""
from __future__ import annotations

from dataclasses import asdict, dataclass
import logging
import math
from typing import Any

import numpy as np
from numpy.typing import ArrayLike

from . import autodiff as ad
from .autodiff import NdArray, Tensor
from .const import (
    DAE_NOISE_SCALE,
    DAE_STEP,
    DEFAULT_BETA_END,
    DEFAULT_BETA_START,
    DEFAULT_INFERENCE_NOISE,
    DEFAULT_LOSS_WEIGHT,
    DEFAULT_MASK_RATIO,
    DEFAULT_REVERSE_STEPS,
    DEFAULT_STEPS,
    SCALE_MODES,
    SCALE_STANDARD,
)
from .denoiser import Denoiser
from .exceptions import ConfigError, ShapeError

_LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class NoiseSchedule:
    """Closed-form diffusion coefficients, indexed by step t - 1."""

    beta: NdArray
    alpha: NdArray
    alpha_bar: NdArray
    beta_tilde: NdArray

    @property
    def steps(self) -> int:
        """Number of forward steps T."""
        return int(self.beta.shape[0])

    def check_step(self, t: ArrayLike, op: str) -> NdArray:
        """Return `t` as an int array after checking 1 <= t <= T."""
        steps = np.asarray(t)
        if steps.size and (steps.min() < 1 or steps.max() > self.steps):
            raise ShapeError(f"{op}: diffusion step out of range 1..{self.steps}: {np.ravel(steps).tolist()}")
        return steps.astype(np.int64)


def build_schedule(steps: int, beta_start: float, beta_end: float) -> NoiseSchedule:
    """Linear beta schedule from `beta_start` to `beta_end` over `steps` steps."""
    problems = []
    if steps < 1:
        problems.append(f"steps must be >= 1, got {steps}")
    if not 0.0 < beta_start < beta_end < 1.0:
        problems.append(f"need 0 < beta_start < beta_end < 1, got {beta_start} and {beta_end}")
    if problems:
        raise ConfigError(problems)

    # a single step keeps the end point of the grid
    beta = np.array([beta_end]) if steps == 1 else np.linspace(beta_start, beta_end, steps)
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    previous = np.concatenate([[1.0], alpha_bar[:-1]])
    beta_tilde = (1.0 - previous) / (1.0 - alpha_bar)
    for array in (beta, alpha, alpha_bar, beta_tilde):
        array.setflags(write=False)
    return NoiseSchedule(beta=beta, alpha=alpha, alpha_bar=alpha_bar, beta_tilde=beta_tilde)


@dataclass(frozen=True)
class DiffusionConfig:
    """Forward/reverse settings and the masked-noise knobs."""

    steps: int = DEFAULT_STEPS
    reverse_steps: int = DEFAULT_REVERSE_STEPS
    beta_start: float = DEFAULT_BETA_START
    beta_end: float = DEFAULT_BETA_END
    scale_mode: str = SCALE_STANDARD
    mask_ratio: float = DEFAULT_MASK_RATIO
    loss_weight: float = DEFAULT_LOSS_WEIGHT
    inference_noise: float | None = DEFAULT_INFERENCE_NOISE

    def __post_init__(self) -> None:
        problems = []
        if self.steps < 1:
            problems.append(f"steps must be >= 1, got {self.steps}")
        if not 1 <= self.reverse_steps <= max(self.steps, 1):
            problems.append(f"reverse_steps must lie in 1..steps ({self.steps}), got {self.reverse_steps}")
        if not 0.0 < self.beta_start < self.beta_end < 1.0:
            problems.append(f"need 0 < beta_start < beta_end < 1, got {self.beta_start} and {self.beta_end}")
        if self.scale_mode not in SCALE_MODES:
            problems.append(f"scale_mode must be one of {', '.join(SCALE_MODES)}, got {self.scale_mode!r}")
        for key in ("mask_ratio", "loss_weight", "inference_noise"):
            value = getattr(self, key)
            if value is not None and not 0.0 <= value <= 1.0:
                problems.append(f"{key} must lie in [0, 1], got {getattr(self, key)}")
        if problems:
            raise ConfigError(problems)

    def schedule(self) -> NoiseSchedule:
        """Build the noise schedule for this configuration."""
        return build_schedule(self.steps, self.beta_start, self.beta_end)

    def as_dict(self) -> dict[str, Any]:
        """Return the config as plain data."""
        return asdict(self)


def _per_sample(values: NdArray, steps: NdArray, ndim: int) -> NdArray:
    """Gather `values[t - 1]` and shape it to broadcast against a batch of rank `ndim`."""
    gathered = values[steps - 1]
    if gathered.ndim == 0:
        return gathered
    return gathered.reshape(gathered.shape + (1,) * (ndim - gathered.ndim))


def signal_scale(alpha_bar: NdArray | float, scale_mode: str) -> NdArray | float:
    """Prefactor applied to the clean signal: sqrt(alpha_bar) or alpha_bar."""
    if scale_mode == SCALE_STANDARD:
        return np.sqrt(alpha_bar)
    return alpha_bar


def forward_corrupt(
    x0: ArrayLike,
    t: ArrayLike,
    eps: ArrayLike,
    schedule: NoiseSchedule,
    scale_mode: str = SCALE_STANDARD,
) -> NdArray:
    """Sample x_t given x0 in closed form; `t` is a scalar or one step per leading-axis sample."""
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape != x0.shape:
        raise ShapeError(f"forward_corrupt: noise shape {eps.shape} does not match input {x0.shape}")
    steps = schedule.check_step(t, "forward_corrupt")
    alpha_bar = _per_sample(schedule.alpha_bar, steps, x0.ndim)
    return signal_scale(alpha_bar, scale_mode) * x0 + np.sqrt(1.0 - alpha_bar) * eps


def sample_masked_noise(
    shape: tuple[int, ...], mask_ratio: float, rng: np.random.Generator
) -> tuple[NdArray, NdArray]:
    """Draw m * z with m ~ Bernoulli(mask_ratio) and z ~ N(0, 1); returns (noise, mask)."""
    if not 0.0 <= mask_ratio <= 1.0:
        raise ConfigError(f"mask_ratio must lie in [0, 1], got {mask_ratio}")
    mask = (rng.random(shape) < mask_ratio).astype(np.float64)
    z = rng.standard_normal(shape)
    return mask * z, mask


@dataclass
class LossComponents:
    """Result of one training step.

    `noisy` and `noiseless` are partition means; None marks an empty partition.
    """

    total: Tensor
    noisy: float | None
    noiseless: float | None
    steps: NdArray
    mask: NdArray
    target: NdArray
    prediction: NdArray

    @property
    def value(self) -> float:
        """Scalar value of the total loss."""
        return self.total.item()


@dataclass(frozen=True)
class LossDecomposition:
    """Full masked loss and its two parts, both normalized by the total element count."""

    full: float
    noisy_part: float
    noiseless_part: float


def decompose_loss(prediction: ArrayLike, target: ArrayLike, mask: ArrayLike) -> LossDecomposition:
    """Split mean((target - prediction)**2) into its masked-on and masked-off parts."""
    prediction = np.asarray(prediction, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    if not prediction.shape == target.shape == mask.shape:
        raise ShapeError(
            f"decompose_loss: shapes {prediction.shape}, {target.shape} and {mask.shape} differ"
        )
    squared = (target - prediction) ** 2
    count = squared.size
    return LossDecomposition(
        full=float(squared.mean()),
        noisy_part=float((squared * mask).sum() / count),
        noiseless_part=float((squared * (1.0 - mask)).sum() / count),
    )


def _partition_losses(
    prediction: Tensor, target: NdArray, mask: NdArray
) -> tuple[Tensor | None, Tensor | None]:
    on = float(mask.sum())
    off = float(mask.size - on)
    noisy = ad.squared_error(prediction, target, weight=mask) / on if on else None
    noiseless = ad.squared_error(prediction, target, weight=1.0 - mask) / off if off else None
    return noisy, noiseless


def _weighted_total(noisy: Tensor | None, noiseless: Tensor | None, loss_weight: float) -> Tensor:
    if noisy is None and noiseless is None:
        raise ShapeError("loss: batch has no elements in either mask partition")
    terms = []
    if noisy is not None:
        terms.append(noisy * loss_weight)
    if noiseless is not None:
        terms.append(noiseless * (1.0 - loss_weight))
    total = terms[0]
    for term in terms[1:]:
        total = total + term
    return total


def _check_batch(model: Denoiser, batch: ArrayLike, op: str) -> NdArray:
    x0 = np.asarray(batch, dtype=np.float64)
    cfg = model.config
    if x0.ndim != 3 or x0.shape[1:] != (cfg.n_features, cfg.window_len):
        raise ShapeError(
            f"{op}: batch shape {x0.shape} does not match (B, D, L) = (B, {cfg.n_features}, {cfg.window_len})"
        )
    if x0.shape[0] == 0:
        raise ShapeError(f"{op}: empty batch")
    return x0


def train_step(
    model: Denoiser,
    batch: ArrayLike,
    schedule: NoiseSchedule,
    config: DiffusionConfig,
    rng: np.random.Generator,
) -> LossComponents:
    """Masked-Gaussian-noise objective on a (B, D, L) batch.

    With mask_ratio = 1 and loss_weight = 1 this is the plain noise-prediction
    objective. An empty partition contributes nothing and c is not renormalized.
    """
    x0 = _check_batch(model, batch, "train_step")
    steps = rng.integers(1, schedule.steps + 1, size=x0.shape[0])
    noise, mask = sample_masked_noise(x0.shape, config.mask_ratio, rng)
    x_t = forward_corrupt(x0, steps, noise, schedule, config.scale_mode)
    prediction = model.predict_noise(x_t, steps)
    noisy, noiseless = _partition_losses(prediction, noise, mask)
    if noisy is None or noiseless is None:
        _LOGGER.debug("Empty mask partition in batch of %d windows", x0.shape[0])
    return LossComponents(
        total=_weighted_total(noisy, noiseless, config.loss_weight),
        noisy=noisy.item() if noisy is not None else None,
        noiseless=noiseless.item() if noiseless is not None else None,
        steps=steps,
        mask=mask,
        target=noise,
        prediction=np.array(prediction.value),
    )


def dae_train_step(
    model: Denoiser,
    batch: ArrayLike,
    config: DiffusionConfig,
    rng: np.random.Generator,
) -> LossComponents:
    """Denoising-autoencoder objective: predict x from x + 0.1 * (m * z) at a fixed step.

    mask_ratio = 1 gives the unmasked autoencoder.
    """
    x0 = _check_batch(model, batch, "dae_train_step")
    steps = np.full(x0.shape[0], DAE_STEP, dtype=np.int64)
    noise, mask = sample_masked_noise(x0.shape, config.mask_ratio, rng)
    prediction = model.predict_noise(x0 + DAE_NOISE_SCALE * noise, steps)
    total = ad.squared_error(prediction, x0) / float(x0.size)
    noisy, noiseless = _partition_losses(prediction, x0, mask)
    return LossComponents(
        total=total,
        noisy=noisy.item() if noisy is not None else None,
        noiseless=noiseless.item() if noiseless is not None else None,
        steps=steps,
        mask=mask,
        target=x0,
        prediction=np.array(prediction.value),
    )


def _reverse_process(
    model: Denoiser,
    x0: ArrayLike,
    schedule: NoiseSchedule,
    reverse_steps: int,
    omega: float,
    scale_mode: str,
    rng: np.random.Generator | None,
) -> NdArray:
    if not 1 <= reverse_steps <= schedule.steps:
        raise ConfigError(f"reverse_steps must lie in 1..{schedule.steps}, got {reverse_steps}")
    if not 0.0 <= omega <= 1.0:
        raise ConfigError(f"inference_noise must lie in [0, 1], got {omega}")
    if omega > 0.0 and rng is None:
        raise ConfigError("inference with noise strength > 0 needs a random generator")
    x = np.asarray(x0, dtype=np.float64)
    start = reverse_steps - 1
    with ad.no_grad():
        x_hat = signal_scale(schedule.alpha_bar[start], scale_mode) * x
        if omega > 0.0 and rng is not None:
            x_hat = x_hat + omega * math.sqrt(1.0 - schedule.alpha_bar[start]) * rng.standard_normal(x.shape)
        for t in range(reverse_steps, 0, -1):
            i = t - 1
            eps = model.predict_noise(x_hat, t).value
            coefficient = schedule.beta[i] / math.sqrt(1.0 - schedule.alpha_bar[i])
            x_hat = (x_hat - coefficient * eps) / math.sqrt(schedule.alpha[i])
            # beta_tilde_1 is zero: nothing is injected at the last step
            if omega > 0.0 and rng is not None and t > 1:
                x_hat = x_hat + omega * math.sqrt(schedule.beta_tilde[i]) * rng.standard_normal(x.shape)
    return np.asarray(x_hat)


def naive_inference(
    model: Denoiser,
    x0: ArrayLike,
    schedule: NoiseSchedule,
    reverse_steps: int,
    omega: float = 1.0,
    scale_mode: str = SCALE_STANDARD,
    rng: np.random.Generator | None = None,
) -> NdArray:
    """Reconstruct `x0` by noising to step S with strength omega and denoising back.

    omega = 0 gives exactly `noiseless_inference`.
    """
    return _reverse_process(model, x0, schedule, reverse_steps, omega, scale_mode, rng)


def noiseless_inference(
    model: Denoiser,
    x0: ArrayLike,
    schedule: NoiseSchedule,
    reverse_steps: int,
    scale_mode: str = SCALE_STANDARD,
) -> NdArray:
    """Reconstruct `x0` from its scaled copy with no noise injected at any step."""
    return _reverse_process(model, x0, schedule, reverse_steps, 0.0, scale_mode, None)


def dae_inference(
    model: Denoiser,
    x0: ArrayLike,
    omega: float = 1.0,
    rng: np.random.Generator | None = None,
) -> NdArray:
    """Single forward pass of the autoencoder on x0 + omega * 0.1 * z."""
    if omega > 0.0 and rng is None:
        raise ConfigError("inference with noise strength > 0 needs a random generator")
    x = np.asarray(x0, dtype=np.float64)
    with ad.no_grad():
        if omega > 0.0 and rng is not None:
            x = x + omega * DAE_NOISE_SCALE * rng.standard_normal(x.shape)
        return np.array(model.predict_noise(x, DAE_STEP).value)
