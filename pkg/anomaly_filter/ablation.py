"""Method comparisons and one-axis hyperparameter sweeps over several seeds."""
from __future__ import annotations

import asyncio
from collections.abc import Mapping, Sequence
import csv
from dataclasses import dataclass, field
import logging
from pathlib import Path
from typing import Any

import numpy as np
from numpy.typing import NDArray

from .config import RunConfig
from .const import DEFAULT_SWEEP_GRIDS, SWEEP_AXES
from .data import TimeSeries
from .detector import fit_detector
from .exceptions import ConfigError, DataError
from .methods import InferenceMode, Method, parse_method
from .metrics import MetricsReport, evaluate

_LOGGER = logging.getLogger(__name__)

METRIC_FIELDS = (
    "f1_best",
    "auc_roc",
    "auc_pr",
    "range_auc_roc",
    "range_auc_pr",
    "vus_roc",
    "vus_pr",
    "range_f",
    "ucr_accuracy",
    "mse_a",
    "mse_n",
    "mse_ratio",
)

_DIFFUSION_FIELDS = {"p": "mask_ratio", "c": "loss_weight", "omega": "inference_noise", "beta_end": "beta_end"}
_INTEGER_AXES = ("T", "S")


@dataclass(frozen=True)
class VariantSpec:
    """One cell: a method, optional diffusion overrides and an optional inference mode."""

    method: Method
    overrides: Mapping[str, float] = field(default_factory=dict)
    inference_mode: InferenceMode | None = None

    @property
    def label(self) -> str:
        """Readable cell name."""
        parts = [str(self.method)]
        parts.extend(f"{axis}={value:g}" for axis, value in self.overrides.items())
        if self.inference_mode is not None:
            parts.append(str(self.inference_mode))
        return " ".join(parts)

    def apply(self, config: RunConfig) -> RunConfig:
        """Run configuration of this cell; T moves S with it, S keeps T."""
        changes: dict[str, Any] = {}
        for axis, value in self.overrides.items():
            if axis in _DIFFUSION_FIELDS:
                changes[_DIFFUSION_FIELDS[axis]] = float(value)
            elif axis == "T":
                changes["steps"] = int(value)
                changes["reverse_steps"] = int(value)
            elif axis == "S":
                changes["reverse_steps"] = int(value)
            else:
                raise ConfigError(f"unknown sweep axis {axis!r}")
        return config.with_method(self.method).with_diffusion(**changes)


@dataclass(frozen=True)
class MetricSummary:
    """Mean, population standard deviation and median over seeds."""

    mean: float
    std: float
    median: float
    count: int


@dataclass
class AblationResult:
    """Per-seed reports of one cell and their aggregate."""

    spec: VariantSpec
    seeds: tuple[int, ...]
    reports: list[MetricsReport]
    summary: dict[str, MetricSummary] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.summary:
            self.summary = aggregate(self.reports)


def aggregate(reports: Sequence[MetricsReport]) -> dict[str, MetricSummary]:
    """Summarize every metric that is defined in at least one report."""
    summary = {}
    for name in METRIC_FIELDS:
        values = [getattr(report, name) for report in reports]
        present = np.array([float(v) for v in values if v is not None])
        if present.size:
            summary[name] = MetricSummary(
                mean=float(present.mean()),
                std=float(present.std()),
                median=float(np.median(present)),
                count=int(present.size),
            )
    return summary


def _require_labels(test: TimeSeries) -> NDArray[np.int64]:
    if test.labels is None:
        raise DataError(f"{test.name}: ablation needs a labelled test series")
    return test.labels


def run_cell(spec: VariantSpec, train_series: TimeSeries, test: TimeSeries, config: RunConfig, seed: int) -> MetricsReport:
    """Train and evaluate one cell for one seed."""
    labels = _require_labels(test)
    cell_config = spec.apply(config).with_seed(seed)
    detector, _ = fit_detector(train_series, cell_config)
    scores = detector.score(test, spec.inference_mode)
    report = evaluate(
        scores.scores,
        labels,
        scores.raw_scores,
        cell_config.metrics,
        smoothing_window=cell_config.scoring.smoothing_window,
        seed=seed,
        config_hash=cell_config.config_hash(),
    )
    _LOGGER.debug("Cell %s seed %d: VUS-PR=%.4f", spec.label, seed, report.vus_pr)
    return report


def run_variant(
    spec: VariantSpec, train_series: TimeSeries, test: TimeSeries, config: RunConfig, seeds: Sequence[int]
) -> AblationResult:
    """Run one cell sequentially for every seed."""
    _require_labels(test)
    reports = [run_cell(spec, train_series, test, config, seed) for seed in seeds]
    return AblationResult(spec=spec, seeds=tuple(seeds), reports=reports)


async def async_run_cells(
    specs: Sequence[VariantSpec],
    train_series: TimeSeries,
    test: TimeSeries,
    config: RunConfig,
    seeds: Sequence[int],
    jobs: int = 1,
) -> list[AblationResult]:
    """Run every (cell, seed) pair on worker threads, at most `jobs` at a time."""
    _require_labels(test)
    if jobs < 1:
        raise ConfigError(f"jobs must be >= 1, got {jobs}")
    for spec in specs:
        # fail on an invalid cell before any training starts
        spec.apply(config)
    semaphore = asyncio.Semaphore(jobs)

    async def _run(spec: VariantSpec, seed: int) -> MetricsReport:
        async with semaphore:
            return await asyncio.to_thread(run_cell, spec, train_series, test, config, seed)

    _LOGGER.info("Running %d cells x %d seeds with %d workers", len(specs), len(seeds), jobs)
    reports = await asyncio.gather(*(_run(spec, seed) for spec in specs for seed in seeds))
    results = []
    for index, spec in enumerate(specs):
        cell = list(reports[index * len(seeds) : (index + 1) * len(seeds)])
        results.append(AblationResult(spec=spec, seeds=tuple(seeds), reports=cell))
    return results


def validate_grid(
    axis: str,
    grid: Sequence[float],
    config: RunConfig,
    inference_modes: Sequence[InferenceMode] | None = None,
) -> None:
    """Raise ConfigError listing every grid value outside the axis's legal domain.

    Inference modes only choose omega when none is set, so they cannot be
    combined with an omega sweep or a configured `inference_noise`.
    """
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {axis!r} (expected one of {', '.join(SWEEP_AXES)})")
    problems = []
    for value in grid:
        if axis in _INTEGER_AXES and (not float(value).is_integer() or value < 1):
            problems.append(f"{axis}={value}: must be a positive integer")
        elif axis in ("p", "c", "omega") and not 0.0 <= value <= 1.0:
            problems.append(f"{axis}={value}: must lie in [0, 1]")
        elif axis == "beta_end" and not config.diffusion.beta_start < value < 1.0:
            problems.append(f"beta_end={value}: must lie in ({config.diffusion.beta_start}, 1)")
        elif axis == "S" and value > config.diffusion.steps:
            problems.append(f"S={value}: exceeds T={config.diffusion.steps}")
    if inference_modes and (axis == "omega" or config.diffusion.inference_noise is not None):
        problems.append("inference_modes cannot be combined with an explicit omega; drop one of them")
    if problems:
        raise ConfigError(problems)


def sweep_specs(
    axis: str,
    grid: Sequence[float],
    method: Method | str,
    inference_modes: Sequence[InferenceMode] | None = None,
) -> list[VariantSpec]:
    """One cell per grid value and inference mode."""
    modes: Sequence[InferenceMode | None] = list(inference_modes) if inference_modes else [None]
    return [
        VariantSpec(method=parse_method(method), overrides={axis: value}, inference_mode=mode)
        for value in grid
        for mode in modes
    ]


async def async_sweep(
    axis: str,
    train_series: TimeSeries,
    test: TimeSeries,
    config: RunConfig,
    grid: Sequence[float] | None = None,
    seeds: Sequence[int] | None = None,
    inference_modes: Sequence[InferenceMode] | None = None,
    jobs: int = 1,
) -> list[AblationResult]:
    """Sweep `axis` over `grid` (the axis's default grid when None) for `config.method`."""
    grid = list(grid if grid is not None else DEFAULT_SWEEP_GRIDS.get(axis, ()))
    validate_grid(axis, grid, config, inference_modes)
    specs = sweep_specs(axis, grid, config.method, inference_modes)
    return await async_run_cells(specs, train_series, test, config, seeds or config.ablation.seeds, jobs)


def sweep(
    axis: str,
    train_series: TimeSeries,
    test: TimeSeries,
    config: RunConfig,
    grid: Sequence[float] | None = None,
    seeds: Sequence[int] | None = None,
    inference_modes: Sequence[InferenceMode] | None = None,
    jobs: int = 1,
) -> list[AblationResult]:
    """Blocking wrapper around `async_sweep`."""
    return asyncio.run(async_sweep(axis, train_series, test, config, grid, seeds, inference_modes, jobs))


async def async_compare(
    methods: Sequence[Method | str],
    train_series: TimeSeries,
    test: TimeSeries,
    config: RunConfig,
    seeds: Sequence[int] | None = None,
    jobs: int = 1,
) -> list[AblationResult]:
    """Run each method with its own training and inference procedure."""
    specs = [VariantSpec(method=parse_method(method)) for method in methods]
    return await async_run_cells(specs, train_series, test, config, seeds or config.ablation.seeds, jobs)


SWEEP_CSV_COLUMNS = ("axis_value", "metric", "mean", "std", "median", "method", "inference_mode")


def write_sweep_csv(results: Sequence[AblationResult], axis: str | None, path: str | Path) -> Path:
    """One row per cell and metric; without an axis the method name is the axis value."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(SWEEP_CSV_COLUMNS)
        for result in results:
            value = result.spec.overrides.get(axis) if axis else None
            axis_value = repr(float(value)) if value is not None else str(result.spec.method)
            mode = str(result.spec.inference_mode) if result.spec.inference_mode else ""
            for metric, stats in result.summary.items():
                writer.writerow(
                    [axis_value, metric, repr(stats.mean), repr(stats.std), repr(stats.median), str(result.spec.method), mode]
                )
    _LOGGER.info("Wrote %d cells to %s", len(results), path)
    return path


def sweep_series(results: Sequence[AblationResult], axis: str, metric: str) -> dict[str, dict[str, list[float]]]:
    """Plot-ready (x, mean, std) lists keyed by inference mode."""
    series: dict[str, dict[str, list[float]]] = {}
    for result in results:
        if metric not in result.summary:
            continue
        key = str(result.spec.inference_mode or result.spec.method)
        entry = series.setdefault(key, {"x": [], "mean": [], "std": []})
        entry["x"].append(float(result.spec.overrides[axis]))
        entry["mean"].append(result.summary[metric].mean)
        entry["std"].append(result.summary[metric].std)
    return series


def results_as_dict(results: Sequence[AblationResult]) -> list[dict[str, Any]]:
    """Plain-data view of results for manifests."""
    return [
        {
            "cell": result.spec.label,
            "method": str(result.spec.method),
            "overrides": dict(result.spec.overrides),
            "inference_mode": str(result.spec.inference_mode) if result.spec.inference_mode else None,
            "seeds": list(result.seeds),
            "summary": {name: vars(stats) for name, stats in result.summary.items()},
            "config_hashes": [report.config_hash for report in result.reports],
        }
        for result in results
    ]

