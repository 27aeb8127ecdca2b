"""Command-line front end."""
from __future__ import annotations

import argparse
import asyncio
from collections.abc import Sequence
from dataclasses import replace
import json
import logging
from pathlib import Path
import sys

from . import __version__
from .ablation import async_compare, async_sweep, results_as_dict, sweep_series, write_sweep_csv
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import RunConfig, canonical_json, load_config
from .const import (
    CHECKPOINT_FILE,
    CONF_TEST_CSV,
    CONF_TRAIN_CSV,
    MANIFEST_FILE,
    REPORT_FILE,
    SCORES_FILE,
    SECTION_PATHS,
    SWEEP_CSV_FILE,
    SYNTH_TEST_FILE,
    SYNTH_TRAIN_FILE,
    TRAINING_LOG_FILE,
)
from .data import TimeSeries, load_csv, write_csv
from .detector import fit_detector
from .diagnostics import build_manifest, write_manifest
from .exceptions import AnomalyFilterError, ConfigError, DataError
from .metrics import evaluate
from .scoring import read_score_csv, write_score_csv
from .synthetic import synth_generate

_LOGGER = logging.getLogger(__name__)


def _require_path(value: str | None, key: str) -> Path:
    if not value:
        raise ConfigError(f"{SECTION_PATHS}.{key} is required")
    return Path(value)


def _write_json(data: object, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _dataset(config: RunConfig) -> tuple[TimeSeries, TimeSeries]:
    """Configured CSV pair, or generated data when no paths are set."""
    if config.paths.train_csv or config.paths.test_csv:
        train = load_csv(_require_path(config.paths.train_csv, CONF_TRAIN_CSV), config.data.label_column)
        test = load_csv(
            _require_path(config.paths.test_csv, CONF_TEST_CSV), config.data.label_column, require_labels=True
        )
        return train, test
    return synth_generate(config.synthetic)


def cmd_train(config: RunConfig, args: argparse.Namespace) -> int:
    """Train `config.method` and write checkpoint, training log and manifest."""
    train_path = _require_path(config.paths.train_csv, CONF_TRAIN_CSV)
    series = load_csv(train_path, config.data.label_column)
    detector, result = fit_detector(series, config)
    out = config.paths.output_root()
    log = {
        "config_hash": config.config_hash(),
        "model_hash": config.model_hash(),
        "seed": config.seed,
        **result.log.as_dict(),
    }
    checkpoint = Checkpoint.from_detector(
        detector, config, {"best_epoch": result.log.best_epoch, "stopped_epoch": result.log.stopped_epoch}
    )
    checkpoint_path = save_checkpoint(checkpoint, out / CHECKPOINT_FILE)
    log_path = _write_json(log, out / TRAINING_LOG_FILE)
    write_manifest(
        build_manifest(
            config,
            "train",
            inputs={CONF_TRAIN_CSV: str(train_path)},
            artifacts={"checkpoint": checkpoint_path, "training_log": log_path},
            extra={"denoiser": detector.model.config_summary()},
        ),
        out / MANIFEST_FILE,
    )
    print(checkpoint_path)
    return 0


def cmd_detect(config: RunConfig, args: argparse.Namespace) -> int:
    """Score the test series with a checkpoint."""
    out = config.paths.output_root()
    checkpoint_path = Path(args.checkpoint) if args.checkpoint else out / CHECKPOINT_FILE
    test_path = Path(args.test) if args.test else _require_path(config.paths.test_csv, CONF_TEST_CSV)
    detector = load_checkpoint(checkpoint_path).to_detector(config)
    series = load_csv(test_path, config.data.label_column)
    scores = detector.score(series)
    scores_path = write_score_csv(scores, out / SCORES_FILE)
    write_manifest(
        build_manifest(
            config,
            "detect",
            inputs={"checkpoint": str(checkpoint_path), CONF_TEST_CSV: str(test_path)},
            artifacts={"scores": scores_path},
        ),
        out / MANIFEST_FILE,
    )
    print(scores_path)
    return 0


def cmd_eval(config: RunConfig, args: argparse.Namespace) -> int:
    """Evaluate a score file against its labels."""
    out = config.paths.output_root()
    scores_path = Path(args.scores) if args.scores else out / SCORES_FILE
    scores = read_score_csv(scores_path)
    labels = scores.labels
    series = None
    if args.labels:
        series = load_csv(args.labels, config.data.label_column, require_labels=True)
        labels = series.labels
    if labels is None:
        raise DataError(f"{scores_path.name}: no label column; pass --labels with a labelled CSV")
    if len(labels) != len(scores):
        raise DataError(f"{len(scores)} scores but {len(labels)} labels")
    report = evaluate(
        scores.scores,
        labels,
        scores.raw_scores,
        config.metrics,
        smoothing_window=scores.smoothing_window,
        seed=scores.seed,
        config_hash=scores.config_hash or config.config_hash(),
    )
    report_path = report.save(out / REPORT_FILE)
    artifacts: dict[str, Path] = {"report": report_path}
    if args.plot:
        from .plots import plot_scores

        artifacts["plot"] = plot_scores(replace(scores, labels=labels), out / "scores.png", series)
    write_manifest(
        build_manifest(config, "eval", inputs={"scores": str(scores_path)}, artifacts=artifacts),
        out / MANIFEST_FILE,
    )
    print(report.to_json(), end="")
    return 0


def cmd_synth(config: RunConfig, args: argparse.Namespace) -> int:
    """Generate a train/test CSV pair from the [synthetic] section."""
    spec = config.synthetic if args.seed is None else replace(config.synthetic, seed=args.seed)
    train, test = synth_generate(spec)
    out = config.paths.output_root()
    train_path = write_csv(train, out / SYNTH_TRAIN_FILE, config.data.label_column)
    test_path = write_csv(test, out / SYNTH_TEST_FILE, config.data.label_column)
    write_manifest(
        build_manifest(
            config,
            "synth",
            artifacts={"train": train_path, "test": test_path},
            extra={"synthetic": spec.as_dict()},
        ),
        out / MANIFEST_FILE,
    )
    print(train_path)
    print(test_path)
    return 0


def cmd_ablate(config: RunConfig, args: argparse.Namespace) -> int:
    """Compare methods, or sweep one axis, over the configured seeds."""
    train, test = _dataset(config)
    ablation = config.ablation
    if ablation.axis is None:
        results = asyncio.run(async_compare(ablation.methods, train, test, config, ablation.seeds, args.jobs))
        name = "method"
    else:
        results = asyncio.run(
            async_sweep(
                ablation.axis, train, test, config, ablation.grid, ablation.seeds, ablation.inference_modes, args.jobs
            )
        )
        name = ablation.axis
    out = config.paths.output_root()
    csv_path = write_sweep_csv(results, ablation.axis, out / SWEEP_CSV_FILE.format(axis=name))
    artifacts: dict[str, Path] = {"sweep": csv_path}
    if args.plot and ablation.axis is not None:
        from .plots import plot_sweep

        series = sweep_series(results, ablation.axis, "vus_pr")
        artifacts["plot"] = plot_sweep(series, ablation.axis, "vus_pr", out / f"sweep_{name}.png")
    write_manifest(
        build_manifest(config, "ablate", artifacts=artifacts, extra={"cells": results_as_dict(results)}),
        out / MANIFEST_FILE,
    )
    print(csv_path)
    return 0


COMMANDS = {
    "train": cmd_train,
    "detect": cmd_detect,
    "eval": cmd_eval,
    "synth": cmd_synth,
    "ablate": cmd_ablate,
}


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with one subcommand per operation."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI run configuration")
    common.add_argument("--seed", type=int, help="override the run seed")
    common.add_argument("--out", metavar="DIR", help="output directory")
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="warnings and errors only")

    parser = argparse.ArgumentParser(prog="anomaly-filter", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser("train", parents=[common], help="train a detector")
    detect = commands.add_parser("detect", parents=[common], help="score a test series")
    detect.add_argument("--checkpoint", metavar="PATH")
    detect.add_argument("--test", metavar="PATH", help="test CSV (defaults to paths.test_csv)")
    evaluate_cmd = commands.add_parser("eval", parents=[common], help="evaluate a score file")
    evaluate_cmd.add_argument("--scores", metavar="PATH")
    evaluate_cmd.add_argument("--labels", metavar="PATH", help="labelled CSV when the score file has none")
    evaluate_cmd.add_argument("--plot", action="store_true", help="also write scores.png")
    commands.add_parser("synth", parents=[common], help="generate synthetic train/test CSVs")
    ablate = commands.add_parser("ablate", parents=[common], help="run a method comparison or sweep")
    ablate.add_argument("--jobs", type=int, default=1, help="parallel cells")
    ablate.add_argument("--plot", action="store_true", help="also write the sweep figure")
    return parser


def _configure_logging(args: argparse.Namespace) -> None:
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def main(argv: Sequence[str] | None = None) -> int:
    """Run one command; returns the process exit status."""
    args = build_parser().parse_args(argv)
    _configure_logging(args)
    try:
        config = load_config(args.config, seed=args.seed, output_dir=args.out)
        _LOGGER.debug("Configuration %s: %s", config.config_hash()[:12], canonical_json(config.behaviour()))
        return COMMANDS[args.command](config, args)
    except AnomalyFilterError as err:
        _LOGGER.debug("Command %s failed", args.command, exc_info=True)
        print(f"error[{err.category}]: {err}", file=sys.stderr)
        return err.exit_code
    except Exception as err:
        _LOGGER.exception("Unexpected error in %s", args.command)
        print(f"error[unexpected]: {err}", file=sys.stderr)
        return 1
