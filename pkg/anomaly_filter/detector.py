"""Trained detector: reconstruct windows and turn the errors into scores."""
from __future__ import annotations

from dataclasses import dataclass
import logging

import numpy as np

from .autodiff import NdArray
from .config import RunConfig
from .const import DEFAULT_BATCH_SIZE, STREAM_INFERENCE, STREAM_INIT, WINDOW_INFERENCE, WINDOW_TRAIN
from .data import NormStats, TimeSeries, make_windows, normalize
from .denoiser import Denoiser
from .diffusion import DiffusionConfig, dae_inference, naive_inference
from .methods import InferenceMode, Method, inference_noise, plan_for, training_config
from .scoring import ScoreSeries, ScoringConfig, assemble_scores, build_score_series, pointwise_mse
from .training import Objective, TrainingResult, derive_rng, train

_LOGGER = logging.getLogger(__name__)


@dataclass
class AnomalyDetector:
    """A trained network with the settings needed to score new series."""

    model: Denoiser
    method: Method
    diffusion: DiffusionConfig
    norm_stats: NormStats
    window_len: int
    inference_stride: int
    scoring: ScoringConfig
    seed: int = 0
    config_hash: str = ""
    batch_size: int = DEFAULT_BATCH_SIZE

    def reconstruct(self, windows: NdArray, mode: InferenceMode | str | None = None) -> NdArray:
        """Reconstruct a (n, D, L) stack of normalized windows."""
        plan = plan_for(self.method)
        omega = inference_noise(self.method, self.diffusion, mode)
        schedule = self.diffusion.schedule()
        rng = derive_rng(self.seed, STREAM_INFERENCE)
        outputs = []
        for start in range(0, windows.shape[0], self.batch_size):
            batch = windows[start : start + self.batch_size]
            if plan.objective == Objective.DAE:
                outputs.append(dae_inference(self.model, batch, omega, rng))
            else:
                outputs.append(
                    naive_inference(
                        self.model,
                        batch,
                        schedule,
                        self.diffusion.reverse_steps,
                        omega,
                        self.diffusion.scale_mode,
                        rng,
                    )
                )
        return np.concatenate(outputs, axis=0)

    def raw_scores(self, series: TimeSeries, mode: InferenceMode | str | None = None) -> NdArray:
        """Per-timestep reconstruction MSE of `series` (normalized with the training statistics)."""
        normalized = self.norm_stats.apply(series)
        windows = make_windows(normalized, self.window_len, self.inference_stride, WINDOW_INFERENCE)
        reconstruction = self.reconstruct(windows.windows, mode)
        per_window = pointwise_mse(windows.windows, reconstruction)
        return assemble_scores(per_window, windows.origins, series.length)

    def score(self, series: TimeSeries, mode: InferenceMode | str | None = None) -> ScoreSeries:
        """Smoothed and raw scores for every timestep of `series`."""
        _LOGGER.info("Scoring %s (N=%d) with %s", series.name, series.length, self.method)
        return build_score_series(
            self.raw_scores(series, mode),
            self.scoring,
            config_hash=self.config_hash,
            seed=self.seed,
            labels=series.labels,
        )


def fit_detector(train_series: TimeSeries, config: RunConfig) -> tuple[AnomalyDetector, TrainingResult]:
    """Normalize, window and train `config.method` on `train_series`."""
    plan = plan_for(config.method)
    stats, (normalized,) = normalize(train_series)
    windows = make_windows(normalized, config.data.window_len, config.data.train_stride, WINDOW_TRAIN)
    model_config = config.denoiser.resolve(
        train_series.n_features, config.data.window_len, config.diffusion.steps
    )
    model = Denoiser.initialize(model_config, derive_rng(config.seed, STREAM_INIT))
    result = train(
        model,
        windows,
        config.training,
        training_config(config.method, config.diffusion),
        plan.objective,
    )
    detector = AnomalyDetector(
        model=model,
        method=config.method,
        diffusion=config.diffusion,
        norm_stats=stats,
        window_len=config.data.window_len,
        inference_stride=config.data.inference_stride,
        scoring=config.scoring,
        seed=config.seed,
        config_hash=config.config_hash(),
        batch_size=config.training.batch_size,
    )
    return detector, result
