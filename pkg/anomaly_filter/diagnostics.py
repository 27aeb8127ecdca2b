"""Run manifests embedded next to every artifact."""
from __future__ import annotations

from collections.abc import Mapping
from dataclasses import asdict
import json
import logging
from pathlib import Path
from typing import Any

from . import __version__
from .config import RunConfig
from .const import CONF_OUTPUT_DIR, CONF_TEST_CSV, CONF_TRAIN_CSV, DOMAIN

_LOGGER = logging.getLogger(__name__)

TO_REDACT = {CONF_TRAIN_CSV, CONF_TEST_CSV, CONF_OUTPUT_DIR, "checkpoint", "scores", "config"}


def redact_paths(data: Any, to_redact: set[str] = TO_REDACT) -> Any:
    """Replace path values under `to_redact` keys with their file names, recursively."""
    if isinstance(data, Mapping):
        redacted = {}
        for key, value in data.items():
            if key in to_redact and isinstance(value, str | Path):
                redacted[key] = Path(value).name
            else:
                redacted[key] = redact_paths(value, to_redact)
        return redacted
    if isinstance(data, list | tuple):
        return [redact_paths(item, to_redact) for item in data]
    return data


def decisions(config: RunConfig) -> dict[str, Any]:
    """Choices that the method itself leaves open, as applied in this run."""
    return {
        "scale_mode": config.diffusion.scale_mode,
        "train_stride": config.data.train_stride,
        "inference_stride": config.data.inference_stride,
        "validation_split": "chronological tail",
        "smoothing_window": config.scoring.smoothing_window,
        "smoothing_align": config.scoring.smoothing_align,
        "threshold_grid": config.metrics.threshold_grid,
        "buffer": config.metrics.buffer,
        "vus_max_buffer": config.metrics.vus_max_buffer,
        "patience": config.training.patience,
    }


def build_manifest(
    config: RunConfig,
    command: str,
    inputs: Mapping[str, Any] | None = None,
    artifacts: Mapping[str, str | Path] | None = None,
    extra: Mapping[str, Any] | None = None,
) -> dict[str, Any]:
    """Return provenance for one command run."""
    manifest = {
        "tool": DOMAIN,
        "version": __version__,
        "command": command,
        "config_hash": config.config_hash(),
        "model_hash": config.model_hash(),
        "seed": config.seed,
        "method": str(config.method),
        "configuration": config.behaviour(),
        "paths": asdict(config.paths),
        "decisions": decisions(config),
        "inputs": dict(inputs or {}),
        "artifacts": {name: Path(path).name for name, path in (artifacts or {}).items()},
    }
    if extra:
        manifest.update(extra)
    return redact_paths(manifest)


def write_manifest(manifest: Mapping[str, Any], path: str | Path) -> Path:
    """Write `manifest` as sorted, indented JSON."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    _LOGGER.debug("Wrote manifest %s", path)
    return path
