"""JSON checkpoints holding a trained detector."""
from __future__ import annotations

from dataclasses import dataclass, field
import json
import logging
from pathlib import Path
from typing import Any

import numpy as np

from .autodiff import NdArray, Tensor
from .config import RunConfig, canonical_json
from .const import CHECKPOINT_FORMAT, CHECKPOINT_VERSION
from .data import NormStats
from .denoiser import Denoiser, DenoiserConfig
from .detector import AnomalyDetector
from .exceptions import AnomalyFilterError, CheckpointError
from .methods import Method

_LOGGER = logging.getLogger(__name__)


@dataclass
class Checkpoint:
    """Everything needed to rebuild a detector, plus provenance."""

    method: Method
    model_hash: str
    config_hash: str
    seed: int
    model_config: DenoiserConfig
    norm_stats: NormStats
    state: dict[str, NdArray]
    training: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_detector(
        cls, detector: AnomalyDetector, config: RunConfig, training: dict[str, Any] | None = None
    ) -> Checkpoint:
        """Capture `detector` trained under `config`."""
        return cls(
            method=detector.method,
            model_hash=config.model_hash(),
            config_hash=config.config_hash(),
            seed=config.seed,
            model_config=detector.model.config,
            norm_stats=detector.norm_stats,
            state=detector.model.state_dict(),
            training=dict(training or {}),
        )

    def as_dict(self) -> dict[str, Any]:
        """Return plain data; parameters are stored as shape plus flat values."""
        return {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "method": str(self.method),
            "model_hash": self.model_hash,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "denoiser": self.model_config.as_dict(),
            "norm_stats": self.norm_stats.as_dict(),
            "parameters": {
                name: {"shape": list(value.shape), "values": [float(v) for v in value.ravel()]}
                for name, value in sorted(self.state.items())
            },
            "training": self.training,
        }

    def verify(self, config: RunConfig) -> None:
        """Raise unless `config` describes the network stored here."""
        expected = config.model_hash()
        if self.model_hash != expected:
            _LOGGER.error("Checkpoint model hash %s does not match configuration %s", self.model_hash, expected)
            raise CheckpointError(
                f"checkpoint was trained under model hash {self.model_hash[:12]}, "
                f"the configuration gives {expected[:12]}"
            )

    def to_detector(self, config: RunConfig) -> AnomalyDetector:
        """Rebuild the detector, taking inference and scoring settings from `config`."""
        self.verify(config)
        params = {
            name: Tensor(value, requires_grad=True, name=name) for name, value in self.state.items()
        }
        try:
            model = Denoiser(self.model_config, params)
        except AnomalyFilterError as err:
            raise CheckpointError(f"checkpoint parameters do not fit the stored architecture: {err}") from err
        return AnomalyDetector(
            model=model,
            method=self.method,
            diffusion=config.diffusion,
            norm_stats=self.norm_stats,
            window_len=config.data.window_len,
            inference_stride=config.data.inference_stride,
            scoring=config.scoring,
            seed=config.seed,
            config_hash=config.config_hash(),
            batch_size=config.training.batch_size,
        )


def save_checkpoint(checkpoint: Checkpoint, path: str | Path) -> Path:
    """Write `checkpoint`; save -> load -> save reproduces the same bytes."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(canonical_json(checkpoint.as_dict()) + "\n", encoding="utf-8")
    _LOGGER.info("Saved checkpoint to %s", path)
    return path


def _from_dict(data: dict[str, Any]) -> Checkpoint:
    if data.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"not a checkpoint (format {data.get('format')!r})")
    if data.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {data.get('version')!r}")
    state = {
        name: np.array(entry["values"], dtype=np.float64).reshape(entry["shape"])
        for name, entry in data["parameters"].items()
    }
    return Checkpoint(
        method=Method(data["method"]),
        model_hash=data["model_hash"],
        config_hash=data["config_hash"],
        seed=int(data["seed"]),
        model_config=DenoiserConfig(**data["denoiser"]),
        norm_stats=NormStats.from_dict(data["norm_stats"]),
        state=state,
        training=data.get("training", {}),
    )


def load_checkpoint(path: str | Path) -> Checkpoint:
    """Read a checkpoint written by `save_checkpoint`."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as err:
        _LOGGER.error("Cannot read checkpoint %s: %s", path, err)
        raise CheckpointError(f"cannot read checkpoint {path}: {err}") from err
    except json.JSONDecodeError as err:
        raise CheckpointError(f"{path.name} is not valid JSON: {err}") from err
    try:
        return _from_dict(data)
    except (KeyError, TypeError, ValueError) as err:
        raise CheckpointError(f"{path.name} is malformed: {err}") from err
