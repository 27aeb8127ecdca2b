"""Method variants: which objective trains the network and how it reconstructs."""
from __future__ import annotations

from dataclasses import dataclass, replace
from enum import StrEnum

from .diffusion import DiffusionConfig
from .exceptions import ConfigError
from .training import Objective


class Method(StrEnum):
    """Detector variants compared in the component ablation."""

    ANOMALY_FILTER = "AnomalyFilter"
    DDPM = "DDPM"
    DDPM_MASK = "DDPM+mask"
    DDPM_NOISELESS = "DDPM+noiseless"
    DAE = "DAE"
    DAE_MASK = "DAE+mask"
    DAE_NOISELESS = "DAE+noiseless"
    DAE_MASK_NOISELESS = "DAE+mask+noiseless"


class InferenceMode(StrEnum):
    """Reconstruction procedure used at test time."""

    NOISELESS = "noiseless"
    NAIVE = "naive"


@dataclass(frozen=True)
class MethodPlan:
    """Training objective, whether training noise is masked, and the inference mode."""

    objective: Objective
    masked: bool
    inference: InferenceMode


METHOD_PLANS: dict[Method, MethodPlan] = {
    Method.ANOMALY_FILTER: MethodPlan(Objective.DIFFUSION, True, InferenceMode.NOISELESS),
    Method.DDPM: MethodPlan(Objective.DIFFUSION, False, InferenceMode.NAIVE),
    Method.DDPM_MASK: MethodPlan(Objective.DIFFUSION, True, InferenceMode.NAIVE),
    Method.DDPM_NOISELESS: MethodPlan(Objective.DIFFUSION, False, InferenceMode.NOISELESS),
    Method.DAE: MethodPlan(Objective.DAE, False, InferenceMode.NAIVE),
    Method.DAE_MASK: MethodPlan(Objective.DAE, True, InferenceMode.NAIVE),
    Method.DAE_NOISELESS: MethodPlan(Objective.DAE, False, InferenceMode.NOISELESS),
    Method.DAE_MASK_NOISELESS: MethodPlan(Objective.DAE, True, InferenceMode.NOISELESS),
}

MAIN_METHODS = (
    Method.ANOMALY_FILTER,
    Method.DDPM,
    Method.DDPM_MASK,
    Method.DDPM_NOISELESS,
    Method.DAE,
)


def parse_method(value: str | Method) -> Method:
    """Return the Method named `value`."""
    try:
        return Method(value)
    except ValueError as err:
        known = ", ".join(m.value for m in Method)
        raise ConfigError(f"unknown method {value!r} (expected one of {known})") from err


def plan_for(method: Method | str) -> MethodPlan:
    """Look up the plan of `method`."""
    return METHOD_PLANS[parse_method(method)]


def training_config(method: Method | str, config: DiffusionConfig) -> DiffusionConfig:
    """Diffusion settings the method trains with.

    Unmasked methods draw plain Gaussian noise and weight it fully (p = 1, c = 1).
    """
    if plan_for(method).masked:
        return config
    return replace(config, mask_ratio=1.0, loss_weight=1.0)


def inference_noise(method: Method | str, config: DiffusionConfig, mode: InferenceMode | str | None = None) -> float:
    """Noise strength omega used at test time.

    A configured strength always wins. Otherwise `mode`, or the method's own
    procedure when no mode is given, picks 0 (noiseless) or 1 (naive).
    """
    resolved = InferenceMode(mode) if mode is not None else plan_for(method).inference
    if config.inference_noise is not None:
        return config.inference_noise
    return 0.0 if resolved == InferenceMode.NOISELESS else 1.0
