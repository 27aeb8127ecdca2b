"""Static figures for score series and sweeps."""
from __future__ import annotations

from collections.abc import Mapping
import logging
from pathlib import Path
from typing import Any

import numpy as np

from .data import TimeSeries
from .scoring import ScoreSeries

_LOGGER = logging.getLogger(__name__)


def _pyplot() -> Any:
    # Lazy import keeps matplotlib optional for commands that do not plot
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def plot_scores(scores: ScoreSeries, path: str | Path, series: TimeSeries | None = None) -> Path:
    """Line plot of the series (when given) above its scores, anomalies shaded."""
    plt = _pyplot()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = 2 if series is not None else 1
    fig, axes = plt.subplots(rows, 1, figsize=(12, 3 * rows), sharex=True, squeeze=False)
    t = np.arange(len(scores))
    if series is not None:
        for index, name in enumerate(series.feature_names()):
            axes[0, 0].plot(t, series.values[index], linewidth=0.8, label=name)
        axes[0, 0].set_ylabel("value")
    ax = axes[-1, 0]
    ax.plot(t, scores.raw_scores, color="0.6", linewidth=0.6, label="raw MSE")
    ax.plot(t, scores.scores, color="C3", linewidth=1.0, label=f"smoothed (w={scores.smoothing_window})")
    ax.set_xlabel("t")
    ax.set_ylabel("score")
    ax.legend(loc="upper right")
    if scores.labels is not None:
        for row in axes[:, 0]:
            row.fill_between(t, 0, 1, where=scores.labels == 1, color="C1", alpha=0.2, transform=row.get_xaxis_transform())
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    _LOGGER.info("Wrote plot %s", path)
    return path


def plot_sweep(series: Mapping[str, Mapping[str, list[float]]], axis: str, metric: str, path: str | Path) -> Path:
    """Mean +/- std of `metric` against the swept axis, one line per inference mode."""
    plt = _pyplot()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, points in series.items():
        x = np.array(points["x"])
        mean = np.array(points["mean"])
        std = np.array(points["std"])
        ax.plot(x, mean, marker="o", label=label)
        ax.fill_between(x, mean - std, mean + std, alpha=0.2)
    ax.set_xlabel(axis)
    ax.set_ylabel(metric)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    _LOGGER.info("Wrote plot %s", path)
    return path
