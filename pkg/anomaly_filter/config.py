"""Run configuration: INI sections validated with voluptuous."""
from __future__ import annotations

from collections.abc import Callable, Mapping
import configparser
from dataclasses import asdict, dataclass, field, replace
import hashlib
import json
import logging
import os
from pathlib import Path
from typing import Any

import voluptuous as vol

from .const import (
    ALIGN_CENTERED,
    ALIGN_TRAILING,
    CONF_ANOMALIES,
    CONF_AXIS,
    CONF_BATCH_SIZE,
    CONF_BETA_END,
    CONF_BETA_START,
    CONF_BUFFER,
    CONF_FAMILY,
    CONF_GRID,
    CONF_INFERENCE_MODES,
    CONF_INFERENCE_NOISE,
    CONF_INFERENCE_STRIDE,
    CONF_LABEL_COLUMN,
    CONF_LATENT_DIM,
    CONF_LEARNING_RATE,
    CONF_LOSS_WEIGHT,
    CONF_MASK_RATIO,
    CONF_MAX_EPOCHS,
    CONF_METHOD,
    CONF_METHODS,
    CONF_N_BLOCKS,
    CONF_N_FEATURES,
    CONF_N_HEADS,
    CONF_NOISE_LEVEL,
    CONF_OUTPUT_DIR,
    CONF_PATIENCE,
    CONF_PERIOD,
    CONF_REVERSE_STEPS,
    CONF_SCALE_MODE,
    CONF_SEED,
    CONF_SEEDS,
    CONF_SMOOTHING_ALIGN,
    CONF_SMOOTHING_WINDOW,
    CONF_STEPS,
    CONF_TEST_CSV,
    CONF_TEST_LENGTH,
    CONF_THRESHOLD_GRID,
    CONF_TRAIN_CSV,
    CONF_TRAIN_LENGTH,
    CONF_TRAIN_STRIDE,
    CONF_VALIDATION_FRACTION,
    CONF_VUS_MAX_BUFFER,
    CONF_WEIGHT_DECAY,
    CONF_WINDOW_LEN,
    DEFAULT_BATCH_SIZE,
    DEFAULT_BETA_END,
    DEFAULT_BETA_START,
    DEFAULT_BUFFER,
    DEFAULT_INFERENCE_NOISE,
    DEFAULT_INFERENCE_STRIDE,
    DEFAULT_LABEL_COLUMN,
    DEFAULT_LEARNING_RATE,
    DEFAULT_LOSS_WEIGHT,
    DEFAULT_MASK_RATIO,
    DEFAULT_MAX_EPOCHS,
    DEFAULT_N_HEADS,
    DEFAULT_OUTPUT_ROOT,
    DEFAULT_PATIENCE,
    DEFAULT_REVERSE_STEPS,
    DEFAULT_SEED,
    DEFAULT_SEEDS,
    DEFAULT_SMOOTHING_WINDOW,
    DEFAULT_STEPS,
    DEFAULT_THRESHOLD_GRID,
    DEFAULT_TRAIN_STRIDE,
    DEFAULT_VALIDATION_FRACTION,
    DEFAULT_VUS_MAX_BUFFER,
    DEFAULT_WEIGHT_DECAY,
    DEFAULT_WINDOW_LEN,
    ENV_OUTPUT_ROOT,
    SCALE_MODES,
    SCALE_STANDARD,
    SECTION_ABLATION,
    SECTION_DATA,
    SECTION_DENOISER,
    SECTION_DIFFUSION,
    SECTION_METRICS,
    SECTION_PATHS,
    SECTION_SCORING,
    SECTION_SYNTHETIC,
    SECTION_TRAINING,
    SWEEP_AXES,
)
from .data import DataConfig
from .denoiser import DenoiserSettings
from .diffusion import DiffusionConfig
from .exceptions import AnomalyFilterError, ConfigError
from .methods import MAIN_METHODS, InferenceMode, Method
from .metrics import MetricsConfig
from .scoring import ScoringConfig
from .synthetic import (
    ANOMALY_KINDS,
    DEFAULT_NOISE_LEVEL,
    DEFAULT_PERIOD,
    DEFAULT_SYNTH_FEATURES,
    DEFAULT_TEST_LENGTH,
    DEFAULT_TRAIN_LENGTH,
    FAMILIES,
    FAMILY_SINE,
    AnomalySpec,
    SyntheticSpec,
    standard_fixture,
)
from .training import TrainingRunConfig

_LOGGER = logging.getLogger(__name__)

_NONE_WORDS = ("", "none", "auto", "inf")


# Validators


def _optional(validator: Callable[[Any], Any]) -> Callable[[Any], Any]:
    def _validate(value: Any) -> Any:
        if value is None or (isinstance(value, str) and value.strip().lower() in _NONE_WORDS):
            return None
        return validator(value)

    return _validate


def _listed(validator: Callable[[Any], Any]) -> Callable[[Any], tuple[Any, ...]]:
    def _validate(value: Any) -> tuple[Any, ...]:
        items = value.split(",") if isinstance(value, str) else list(value)
        return tuple(validator(item.strip() if isinstance(item, str) else item) for item in items if item != "")

    return _validate


def _anomaly(value: Any) -> AnomalySpec:
    """Parse `kind@position[:length[:magnitude]]`."""
    if isinstance(value, AnomalySpec):
        return value
    kind, sep, rest = str(value).partition("@")
    if not sep or kind not in ANOMALY_KINDS:
        raise vol.Invalid(f"expected <{'|'.join(ANOMALY_KINDS)}>@position[:length[:magnitude]], got {value!r}")
    parts = rest.split(":")
    try:
        position = int(parts[0])
        length = int(parts[1]) if len(parts) > 1 else 1
        magnitude = float(parts[2]) if len(parts) > 2 else 5.0
    except (ValueError, IndexError) as err:
        raise vol.Invalid(f"cannot parse anomaly {value!r}") from err
    return AnomalySpec(kind=kind, position=position, length=length, magnitude=magnitude)


def _method(value: Any) -> Method:
    try:
        return Method(str(value).strip())
    except ValueError as err:
        raise vol.Invalid(f"unknown method {value!r}") from err


POSITIVE_INT = vol.All(vol.Coerce(int), vol.Range(min=1))
NON_NEGATIVE_INT = vol.All(vol.Coerce(int), vol.Range(min=0))
UNIT_FLOAT = vol.All(vol.Coerce(float), vol.Range(min=0.0, max=1.0))
OPEN_UNIT_FLOAT = vol.All(vol.Coerce(float), vol.Range(min=0.0, max=1.0, min_included=False, max_included=False))

DIFFUSION_SCHEMA = vol.Schema(
    {
        vol.Optional(CONF_STEPS, default=DEFAULT_STEPS): POSITIVE_INT,
        vol.Optional(CONF_REVERSE_STEPS, default=DEFAULT_REVERSE_STEPS): POSITIVE_INT,
        vol.Optional(CONF_BETA_START, default=DEFAULT_BETA_START): OPEN_UNIT_FLOAT,
        vol.Optional(CONF_BETA_END, default=DEFAULT_BETA_END): OPEN_UNIT_FLOAT,
        vol.Optional(CONF_SCALE_MODE, default=SCALE_STANDARD): vol.In(SCALE_MODES),
        vol.Optional(CONF_MASK_RATIO, default=DEFAULT_MASK_RATIO): UNIT_FLOAT,
        vol.Optional(CONF_LOSS_WEIGHT, default=DEFAULT_LOSS_WEIGHT): UNIT_FLOAT,
        vol.Optional(CONF_INFERENCE_NOISE, default=DEFAULT_INFERENCE_NOISE): _optional(UNIT_FLOAT),
    },
    extra=vol.PREVENT_EXTRA,
)

DENOISER_SCHEMA = vol.Schema(
    {
        vol.Optional(CONF_N_BLOCKS, default=None): _optional(POSITIVE_INT),
        vol.Optional(CONF_LATENT_DIM, default=None): _optional(POSITIVE_INT),
        vol.Optional(CONF_N_HEADS, default=DEFAULT_N_HEADS): POSITIVE_INT,
    },
    extra=vol.PREVENT_EXTRA,
)

TRAINING_SCHEMA = vol.Schema(
    {
        vol.Optional(CONF_METHOD, default=Method.ANOMALY_FILTER.value): _method,
        vol.Optional(CONF_LEARNING_RATE, default=DEFAULT_LEARNING_RATE): vol.All(
            vol.Coerce(float), vol.Range(min=0.0, min_included=False)
        ),
        vol.Optional(CONF_WEIGHT_DECAY, default=DEFAULT_WEIGHT_DECAY): vol.All(vol.Coerce(float), vol.Range(min=0.0)),
        vol.Optional(CONF_BATCH_SIZE, default=DEFAULT_BATCH_SIZE): POSITIVE_INT,
        vol.Optional(CONF_MAX_EPOCHS, default=DEFAULT_MAX_EPOCHS): POSITIVE_INT,
        vol.Optional(CONF_VALIDATION_FRACTION, default=DEFAULT_VALIDATION_FRACTION): OPEN_UNIT_FLOAT,
        vol.Optional(CONF_PATIENCE, default=DEFAULT_PATIENCE): _optional(POSITIVE_INT),
        vol.Optional(CONF_SEED, default=DEFAULT_SEED): NON_NEGATIVE_INT,
    },
    extra=vol.PREVENT_EXTRA,
)

DATA_SCHEMA = vol.Schema(
    {
        vol.Optional(CONF_WINDOW_LEN, default=DEFAULT_WINDOW_LEN): POSITIVE_INT,
        vol.Optional(CONF_TRAIN_STRIDE, default=DEFAULT_TRAIN_STRIDE): POSITIVE_INT,
        vol.Optional(CONF_INFERENCE_STRIDE, default=DEFAULT_INFERENCE_STRIDE): POSITIVE_INT,
        vol.Optional(CONF_LABEL_COLUMN, default=DEFAULT_LABEL_COLUMN): vol.All(str, vol.Length(min=1)),
    },
    extra=vol.PREVENT_EXTRA,
)

SCORING_SCHEMA = vol.Schema(
    {
        vol.Optional(CONF_SMOOTHING_WINDOW, default=DEFAULT_SMOOTHING_WINDOW): POSITIVE_INT,
        vol.Optional(CONF_SMOOTHING_ALIGN, default=ALIGN_CENTERED): vol.In((ALIGN_CENTERED, ALIGN_TRAILING)),
    },
    extra=vol.PREVENT_EXTRA,
)

METRICS_SCHEMA = vol.Schema(
    {
        vol.Optional(CONF_THRESHOLD_GRID, default=DEFAULT_THRESHOLD_GRID): POSITIVE_INT,
        vol.Optional(CONF_BUFFER, default=DEFAULT_BUFFER): NON_NEGATIVE_INT,
        vol.Optional(CONF_VUS_MAX_BUFFER, default=DEFAULT_VUS_MAX_BUFFER): NON_NEGATIVE_INT,
    },
    extra=vol.PREVENT_EXTRA,
)

PATHS_SCHEMA = vol.Schema(
    {
        vol.Optional(CONF_TRAIN_CSV, default=None): _optional(str),
        vol.Optional(CONF_TEST_CSV, default=None): _optional(str),
        vol.Optional(CONF_OUTPUT_DIR, default=None): _optional(str),
    },
    extra=vol.PREVENT_EXTRA,
)

SYNTHETIC_SCHEMA = vol.Schema(
    {
        vol.Optional(CONF_FAMILY, default=FAMILY_SINE): vol.In(FAMILIES),
        vol.Optional(CONF_TRAIN_LENGTH, default=DEFAULT_TRAIN_LENGTH): POSITIVE_INT,
        vol.Optional(CONF_TEST_LENGTH, default=DEFAULT_TEST_LENGTH): POSITIVE_INT,
        vol.Optional(CONF_N_FEATURES, default=DEFAULT_SYNTH_FEATURES): POSITIVE_INT,
        vol.Optional(CONF_NOISE_LEVEL, default=DEFAULT_NOISE_LEVEL): vol.All(vol.Coerce(float), vol.Range(min=0.0)),
        vol.Optional(CONF_PERIOD, default=DEFAULT_PERIOD): vol.All(
            vol.Coerce(float), vol.Range(min=0.0, min_included=False)
        ),
        vol.Optional(CONF_ANOMALIES, default=standard_fixture().anomalies): _listed(_anomaly),
        vol.Optional(CONF_SEED, default=DEFAULT_SEED): NON_NEGATIVE_INT,
    },
    extra=vol.PREVENT_EXTRA,
)

ABLATION_SCHEMA = vol.Schema(
    {
        vol.Optional(CONF_METHODS, default=tuple(m.value for m in MAIN_METHODS)): vol.All(
            _listed(_method), vol.Length(min=1)
        ),
        vol.Optional(CONF_AXIS, default=None): _optional(vol.In(SWEEP_AXES)),
        vol.Optional(CONF_GRID, default=None): _optional(vol.All(_listed(vol.Coerce(float)), vol.Length(min=1))),
        vol.Optional(CONF_SEEDS, default=DEFAULT_SEEDS): vol.All(_listed(NON_NEGATIVE_INT), vol.Length(min=1)),
        vol.Optional(CONF_INFERENCE_MODES, default=None): _optional(
            _listed(vol.All(str, vol.Coerce(InferenceMode)))
        ),
    },
    extra=vol.PREVENT_EXTRA,
)

SECTION_SCHEMAS: dict[str, vol.Schema] = {
    SECTION_DIFFUSION: DIFFUSION_SCHEMA,
    SECTION_DENOISER: DENOISER_SCHEMA,
    SECTION_TRAINING: TRAINING_SCHEMA,
    SECTION_DATA: DATA_SCHEMA,
    SECTION_SCORING: SCORING_SCHEMA,
    SECTION_METRICS: METRICS_SCHEMA,
    SECTION_PATHS: PATHS_SCHEMA,
    SECTION_SYNTHETIC: SYNTHETIC_SCHEMA,
    SECTION_ABLATION: ABLATION_SCHEMA,
}


@dataclass(frozen=True)
class PathsConfig:
    """Dataset locations and the output directory."""

    train_csv: str | None = None
    test_csv: str | None = None
    output_dir: str | None = None

    def output_root(self) -> Path:
        """Output directory, falling back to the environment and then `runs`."""
        return Path(self.output_dir or os.environ.get(ENV_OUTPUT_ROOT) or DEFAULT_OUTPUT_ROOT)


@dataclass(frozen=True)
class AblationConfig:
    """Methods to compare, an optional sweep axis and the seed list.

    `inference_modes` None evaluates each method with its own procedure.
    """

    methods: tuple[Method, ...] = MAIN_METHODS
    axis: str | None = None
    grid: tuple[float, ...] | None = None
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    inference_modes: tuple[InferenceMode, ...] | None = None


@dataclass(frozen=True)
class RunConfig:
    """Every setting of a run."""

    method: Method = Method.ANOMALY_FILTER
    diffusion: DiffusionConfig = field(default_factory=DiffusionConfig)
    denoiser: DenoiserSettings = field(default_factory=DenoiserSettings)
    training: TrainingRunConfig = field(default_factory=TrainingRunConfig)
    data: DataConfig = field(default_factory=DataConfig)
    scoring: ScoringConfig = field(default_factory=ScoringConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)
    synthetic: SyntheticSpec = field(default_factory=standard_fixture)
    ablation: AblationConfig = field(default_factory=AblationConfig)

    @property
    def seed(self) -> int:
        """Seed of the run."""
        return self.training.seed

    def behaviour(self) -> dict[str, Any]:
        """Every field that can change an artifact (paths excluded)."""
        data = asdict(self)
        data.pop("paths")
        return data

    def model_fields(self) -> dict[str, Any]:
        """Fields that determine the trained network."""
        diffusion = self.diffusion.as_dict()
        # reverse-process settings only matter at inference
        diffusion.pop("reverse_steps")
        diffusion.pop("inference_noise")
        return {
            "method": str(self.method),
            "diffusion": diffusion,
            "denoiser": self.denoiser.as_dict(),
            "training": self.training.as_dict(),
            "window_len": self.data.window_len,
            "train_stride": self.data.train_stride,
        }

    def config_hash(self) -> str:
        """SHA-256 over the canonical JSON of `behaviour()`."""
        return _digest(self.behaviour())

    def model_hash(self) -> str:
        """SHA-256 over the canonical JSON of `model_fields()`."""
        return _digest(self.model_fields())

    def with_seed(self, seed: int) -> RunConfig:
        """Copy with a different run seed."""
        return replace(self, training=replace(self.training, seed=seed))

    def with_method(self, method: Method | str) -> RunConfig:
        """Copy training a different method."""
        return replace(self, method=Method(method))

    def with_diffusion(self, **changes: Any) -> RunConfig:
        """Copy with diffusion fields replaced (validated again)."""
        return replace(self, diffusion=replace(self.diffusion, **changes))


def canonical_json(data: Any) -> str:
    """Compact, key-sorted JSON used for hashing."""
    return json.dumps(data, sort_keys=True, separators=(",", ":"), default=str)


def _digest(data: Any) -> str:
    return hashlib.sha256(canonical_json(data).encode("utf-8")).hexdigest()


def _format_invalid(section: str, error: vol.Invalid) -> str:
    path = ".".join(str(p) for p in error.path)
    if "extra keys not allowed" in error.msg:
        return f"{section}.{path}: unknown key"
    return f"{section}.{path}: {error.msg}"


def _validate_sections(raw: Mapping[str, Mapping[str, str]]) -> tuple[dict[str, dict[str, Any]], list[str]]:
    problems = [f"[{name}]: unknown section" for name in raw if name not in SECTION_SCHEMAS]
    validated: dict[str, dict[str, Any]] = {}
    for name, schema in SECTION_SCHEMAS.items():
        try:
            validated[name] = schema(dict(raw.get(name, {})))
        except vol.MultipleInvalid as err:
            problems.extend(_format_invalid(name, e) for e in err.errors)
    return validated, problems


def _log_overrides(raw: Mapping[str, Mapping[str, str]], validated: Mapping[str, Mapping[str, Any]]) -> None:
    for name, schema in SECTION_SCHEMAS.items():
        if name not in raw or name not in validated:
            continue
        defaults = schema({})
        for key in raw[name]:
            if key in defaults and validated[name][key] != defaults[key]:
                _LOGGER.info("Override %s.%s = %r (default %r)", name, key, validated[name][key], defaults[key])


def build_run_config(raw: Mapping[str, Mapping[str, str]]) -> RunConfig:
    """Validate raw INI sections; every problem is reported in one ConfigError."""
    validated, problems = _validate_sections(raw)
    if problems:
        raise ConfigError(problems)
    _log_overrides(raw, validated)

    parts: dict[str, Any] = {}
    builders: dict[str, Callable[[dict[str, Any]], Any]] = {
        "diffusion": lambda v: DiffusionConfig(**v),
        "denoiser": lambda v: DenoiserSettings(**v),
        "training": lambda v: TrainingRunConfig(**{k: x for k, x in v.items() if k != CONF_METHOD}),
        "data": lambda v: DataConfig(**v),
        "scoring": lambda v: ScoringConfig(**v),
        "metrics": lambda v: MetricsConfig(**v),
        "paths": lambda v: PathsConfig(**v),
        "synthetic": lambda v: SyntheticSpec(**v),
        "ablation": lambda v: AblationConfig(**v),
    }
    for name, builder in builders.items():
        try:
            parts[name] = builder(validated[name])
        except ConfigError as err:
            problems.extend(f"{name}: {problem}" for problem in err.problems)
        except AnomalyFilterError as err:
            problems.append(f"{name}: {err}")
    denoiser = parts.get("denoiser")
    if denoiser is not None and denoiser.latent_dim is not None and denoiser.latent_dim % denoiser.n_heads:
        problems.append(f"denoiser: latent_dim {denoiser.latent_dim} is not divisible by n_heads {denoiser.n_heads}")
    if problems:
        raise ConfigError(problems)
    return RunConfig(method=validated[SECTION_TRAINING][CONF_METHOD], **parts)


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    """Parse INI text into a RunConfig."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";",))
    try:
        parser.read_string(text, source=source)
    except configparser.Error as err:
        raise ConfigError(f"{source}: {err}") from err
    raw = {name: dict(parser.items(name)) for name in parser.sections()}
    return build_run_config(raw)


def load_config(
    path: str | Path | None = None,
    *,
    seed: int | None = None,
    output_dir: str | None = None,
) -> RunConfig:
    """Load and validate `path` (defaults only when None), then apply command-line overrides."""
    text = ""
    source = "<defaults>"
    if path is not None:
        source = str(path)
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as err:
            _LOGGER.error("Cannot read config %s: %s", path, err)
            raise ConfigError(f"cannot read config {path}: {err}") from err
    config = parse_config(text, source)
    if seed is not None:
        if seed < 0:
            raise ConfigError(f"seed must be >= 0, got {seed}")
        _LOGGER.info("Override training.seed = %d from the command line", seed)
        config = config.with_seed(seed)
    if output_dir is not None:
        config = replace(config, paths=replace(config.paths, output_dir=output_dir))
    return config
