"""Mini-batch training with validation-based early stopping."""
from __future__ import annotations

from collections.abc import Callable
from dataclasses import asdict, dataclass, field
from enum import StrEnum
import logging
import math
from typing import Any

import numpy as np

from . import autodiff as ad
from .autodiff import NdArray
from .const import (
    DEFAULT_BATCH_SIZE,
    DEFAULT_LEARNING_RATE,
    DEFAULT_MAX_EPOCHS,
    DEFAULT_PATIENCE,
    DEFAULT_SEED,
    DEFAULT_VALIDATION_FRACTION,
    DEFAULT_WEIGHT_DECAY,
    STREAM_TRAIN,
    STREAM_VALIDATION,
)
from .data import WindowSet, split_validation
from .denoiser import Denoiser
from .diffusion import DiffusionConfig, LossComponents, NoiseSchedule, dae_train_step, train_step
from .exceptions import ConfigError, DataError, TrainingError
from .optim import AdamW

_LOGGER = logging.getLogger(__name__)


class Objective(StrEnum):
    """What the network is trained to predict."""

    DIFFUSION = "diffusion"
    DAE = "dae"


def derive_rng(seed: int, stream: int) -> np.random.Generator:
    """Independent generator for one purpose of a seeded run."""
    return np.random.default_rng([seed, stream])


@dataclass(frozen=True)
class TrainingRunConfig:
    """Optimizer and loop settings; patience None disables early stopping."""

    learning_rate: float = DEFAULT_LEARNING_RATE
    weight_decay: float = DEFAULT_WEIGHT_DECAY
    batch_size: int = DEFAULT_BATCH_SIZE
    max_epochs: int = DEFAULT_MAX_EPOCHS
    validation_fraction: float = DEFAULT_VALIDATION_FRACTION
    patience: int | None = DEFAULT_PATIENCE
    seed: int = DEFAULT_SEED

    def __post_init__(self) -> None:
        problems = []
        if self.learning_rate <= 0.0:
            problems.append(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.weight_decay < 0.0:
            problems.append(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.batch_size < 1:
            problems.append(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_epochs < 1:
            problems.append(f"max_epochs must be >= 1, got {self.max_epochs}")
        if not 0.0 < self.validation_fraction < 1.0:
            problems.append(f"validation_fraction must lie in (0, 1), got {self.validation_fraction}")
        if self.patience is not None and self.patience < 1:
            problems.append(f"patience must be >= 1, got {self.patience}")
        if problems:
            raise ConfigError(problems)

    def as_dict(self) -> dict[str, Any]:
        """Return the config as plain data."""
        return asdict(self)


@dataclass(frozen=True)
class EpochRecord:
    """Losses of one epoch; the partition means average over batches where defined."""

    epoch: int
    train_loss: float
    val_loss: float
    noisy_loss: float | None
    noiseless_loss: float | None


@dataclass
class TrainingLog:
    """Per-epoch history of a run."""

    objective: str
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_val_loss: float = math.inf
    stopped_epoch: int = 0
    early_stopped: bool = False
    train_windows: int = 0
    val_windows: int = 0

    def as_dict(self) -> dict[str, Any]:
        """Return the log as plain data."""
        return asdict(self)


@dataclass
class TrainingResult:
    """Best parameters and the history that selected them."""

    state: dict[str, NdArray]
    log: TrainingLog


StepFn = Callable[[Denoiser, NdArray, np.random.Generator], LossComponents]


def make_step_fn(objective: Objective, schedule: NoiseSchedule, config: DiffusionConfig) -> StepFn:
    """Bind the loss of `objective` to a schedule and diffusion config."""
    if objective == Objective.DIFFUSION:
        return lambda model, batch, rng: train_step(model, batch, schedule, config, rng)
    if objective == Objective.DAE:
        return lambda model, batch, rng: dae_train_step(model, batch, config, rng)
    raise ConfigError(f"unknown objective {objective!r}")


def _mean(values: list[float]) -> float | None:
    return float(np.mean(values)) if values else None


def validation_loss(
    model: Denoiser, windows: WindowSet, step_fn: StepFn, batch_size: int, rng: np.random.Generator
) -> float:
    """Window-weighted mean loss over `windows` without recording a graph."""
    total = 0.0
    with ad.no_grad():
        for start in range(0, len(windows), batch_size):
            batch = windows.windows[start : start + batch_size]
            total += step_fn(model, batch, rng).value * batch.shape[0]
    return total / len(windows)


def train(
    model: Denoiser,
    windows: WindowSet,
    run_config: TrainingRunConfig,
    diffusion_config: DiffusionConfig,
    objective: Objective = Objective.DIFFUSION,
) -> TrainingResult:
    """Fit `model` in place and leave it holding the best-validation parameters."""
    if len(windows) == 0:
        raise DataError("training set is empty")
    train_set, val_set = split_validation(windows, run_config.validation_fraction)
    schedule = diffusion_config.schedule()
    step_fn = make_step_fn(objective, schedule, diffusion_config)
    optimizer = AdamW(model.params, lr=run_config.learning_rate, weight_decay=run_config.weight_decay)
    rng = derive_rng(run_config.seed, STREAM_TRAIN)
    log = TrainingLog(objective=str(objective), train_windows=len(train_set), val_windows=len(val_set))
    best_state = model.state_dict()
    waited = 0

    _LOGGER.info(
        "Training %s objective: %d train / %d validation windows, %d parameters, up to %d epochs",
        objective,
        len(train_set),
        len(val_set),
        model.parameter_count,
        run_config.max_epochs,
    )
    for epoch in range(1, run_config.max_epochs + 1):
        order = rng.permutation(len(train_set))
        losses: list[float] = []
        noisy: list[float] = []
        noiseless: list[float] = []
        for batch_index, start in enumerate(range(0, len(order), run_config.batch_size)):
            batch = train_set.windows[order[start : start + run_config.batch_size]]
            components = step_fn(model, batch, rng)
            loss = components.value
            if not math.isfinite(loss):
                _LOGGER.error("Loss became %s at epoch %d, batch %d", loss, epoch, batch_index)
                raise TrainingError(
                    f"non-finite loss {loss}", epoch=epoch, batch=batch_index, steps=components.steps.tolist()
                )
            grads = ad.grad_map(components.total, model.params)
            try:
                optimizer.step(grads)
            except TrainingError as err:
                raise TrainingError(
                    str(err), epoch=epoch, batch=batch_index, steps=components.steps.tolist()
                ) from err
            losses.append(loss)
            if components.noisy is not None:
                noisy.append(components.noisy)
            if components.noiseless is not None:
                noiseless.append(components.noiseless)
            _LOGGER.debug("Epoch %d batch %d: loss=%.6f", epoch, batch_index, loss)

        # same validation noise every epoch so losses are comparable
        val_loss = validation_loss(
            model, val_set, step_fn, run_config.batch_size, derive_rng(run_config.seed, STREAM_VALIDATION)
        )
        if not math.isfinite(val_loss):
            raise TrainingError(f"non-finite validation loss {val_loss}", epoch=epoch)
        record = EpochRecord(
            epoch=epoch,
            train_loss=float(np.mean(losses)),
            val_loss=val_loss,
            noisy_loss=_mean(noisy),
            noiseless_loss=_mean(noiseless),
        )
        log.epochs.append(record)
        log.stopped_epoch = epoch
        _LOGGER.info("Epoch %d: train=%.6f val=%.6f", epoch, record.train_loss, val_loss)

        if val_loss < log.best_val_loss:
            log.best_val_loss = val_loss
            log.best_epoch = epoch
            best_state = model.state_dict()
            waited = 0
        else:
            waited += 1
            if run_config.patience is not None and waited >= run_config.patience:
                log.early_stopped = True
                _LOGGER.info("Early stopping at epoch %d (best epoch %d)", epoch, log.best_epoch)
                break

    model.load_state_dict(best_state)
    return TrainingResult(state=best_state, log=log)
