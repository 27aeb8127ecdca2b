"""Adam with decoupled weight decay."""
from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass, field
import logging

import numpy as np

from .autodiff import NdArray, Tensor
from .const import ADAM_BETA1, ADAM_BETA2, ADAM_EPS, DEFAULT_LEARNING_RATE, DEFAULT_WEIGHT_DECAY
from .exceptions import ShapeError, TrainingError

_LOGGER = logging.getLogger(__name__)


@dataclass
class OptimizerState:
    """Moment accumulators and hyperparameters of an AdamW run."""

    lr: float = DEFAULT_LEARNING_RATE
    weight_decay: float = DEFAULT_WEIGHT_DECAY
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS
    step: int = 0
    first_moment: dict[str, NdArray] = field(default_factory=dict)
    second_moment: dict[str, NdArray] = field(default_factory=dict)


class AdamW:
    """AdamW optimizer over a named parameter set."""

    def __init__(
        self,
        params: Mapping[str, Tensor],
        lr: float = DEFAULT_LEARNING_RATE,
        weight_decay: float = DEFAULT_WEIGHT_DECAY,
        beta1: float = ADAM_BETA1,
        beta2: float = ADAM_BETA2,
        eps: float = ADAM_EPS,
    ) -> None:
        """Initialize zeroed moments for every parameter."""
        self.params = dict(params)
        self.state = OptimizerState(lr=lr, weight_decay=weight_decay, beta1=beta1, beta2=beta2, eps=eps)
        for name, param in self.params.items():
            self.state.first_moment[name] = np.zeros(param.shape)
            self.state.second_moment[name] = np.zeros(param.shape)

    def step(self, grads: Mapping[str, NdArray]) -> None:
        """Apply one update; every parameter must have a finite gradient."""
        for name, param in self.params.items():
            grad = grads.get(name)
            if grad is None:
                raise ShapeError(f"optimizer_step: missing gradient for parameter {name!r}")
            if grad.shape != param.shape:
                raise ShapeError(
                    f"optimizer_step: gradient shape {grad.shape} does not match parameter {name!r} {param.shape}"
                )
            if not np.all(np.isfinite(grad)):
                raise TrainingError(f"non-finite gradient for parameter {name!r}")

        state = self.state
        state.step += 1
        bias1 = 1.0 - state.beta1**state.step
        bias2 = 1.0 - state.beta2**state.step
        for name, param in self.params.items():
            grad = grads[name]
            m = state.beta1 * state.first_moment[name] + (1.0 - state.beta1) * grad
            v = state.beta2 * state.second_moment[name] + (1.0 - state.beta2) * grad * grad
            state.first_moment[name] = m
            state.second_moment[name] = v
            # decay multiplies the parameter, not the gradient
            value = param.value * (1.0 - state.lr * state.weight_decay)
            value = value - state.lr * (m / bias1) / (np.sqrt(v / bias2) + state.eps)
            param.assign(value)
        _LOGGER.debug("AdamW step %d applied to %d parameters", state.step, len(self.params))
