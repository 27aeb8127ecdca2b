"""Constants for the AnomalyFilter package."""

DOMAIN = "anomaly_filter"

# Environment
ENV_OUTPUT_ROOT = "ANOMALY_FILTER_OUTPUT"
DEFAULT_OUTPUT_ROOT = "runs"

# Config sections
SECTION_DIFFUSION = "diffusion"
SECTION_DENOISER = "denoiser"
SECTION_TRAINING = "training"
SECTION_DATA = "data"
SECTION_SCORING = "scoring"
SECTION_METRICS = "metrics"
SECTION_PATHS = "paths"
SECTION_SYNTHETIC = "synthetic"
SECTION_ABLATION = "ablation"

# Diffusion configuration keys
CONF_STEPS = "steps"
CONF_REVERSE_STEPS = "reverse_steps"
CONF_BETA_START = "beta_start"
CONF_BETA_END = "beta_end"
CONF_SCALE_MODE = "scale_mode"
CONF_MASK_RATIO = "mask_ratio"
CONF_LOSS_WEIGHT = "loss_weight"
CONF_INFERENCE_NOISE = "inference_noise"

# Denoiser configuration keys
CONF_N_BLOCKS = "n_blocks"
CONF_LATENT_DIM = "latent_dim"
CONF_N_HEADS = "n_heads"

# Training configuration keys
CONF_LEARNING_RATE = "learning_rate"
CONF_WEIGHT_DECAY = "weight_decay"
CONF_BATCH_SIZE = "batch_size"
CONF_MAX_EPOCHS = "max_epochs"
CONF_VALIDATION_FRACTION = "validation_fraction"
CONF_PATIENCE = "patience"

# Data configuration keys
CONF_WINDOW_LEN = "window_len"
CONF_TRAIN_STRIDE = "train_stride"
CONF_INFERENCE_STRIDE = "inference_stride"
CONF_LABEL_COLUMN = "label_column"

# Scoring / metrics keys
CONF_SMOOTHING_WINDOW = "smoothing_window"
CONF_SMOOTHING_ALIGN = "smoothing_align"
CONF_BUFFER = "buffer"
CONF_VUS_MAX_BUFFER = "vus_max_buffer"
CONF_THRESHOLD_GRID = "threshold_grid"

# Paths
CONF_TRAIN_CSV = "train_csv"
CONF_TEST_CSV = "test_csv"
CONF_OUTPUT_DIR = "output_dir"
CONF_SEED = "seed"

# Synthetic keys
CONF_FAMILY = "family"
CONF_TRAIN_LENGTH = "train_length"
CONF_TEST_LENGTH = "test_length"
CONF_N_FEATURES = "n_features"
CONF_NOISE_LEVEL = "noise_level"
CONF_PERIOD = "period"
CONF_ANOMALIES = "anomalies"

# Ablation keys
CONF_METHOD = "method"
CONF_METHODS = "methods"
CONF_AXIS = "axis"
CONF_GRID = "grid"
CONF_SEEDS = "seeds"
CONF_INFERENCE_MODES = "inference_modes"

# Scale modes
SCALE_STANDARD = "standard-sqrt"
SCALE_PAPER = "paper-literal"
SCALE_MODES = (SCALE_STANDARD, SCALE_PAPER)

# Smoothing alignment
ALIGN_CENTERED = "centered"
ALIGN_TRAILING = "trailing"

# Default values
DEFAULT_STEPS = 50
DEFAULT_REVERSE_STEPS = 50
DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 0.01
DEFAULT_MASK_RATIO = 0.5
DEFAULT_LOSS_WEIGHT = 0.5
DEFAULT_INFERENCE_NOISE: float | None = None  # the method's own: 0 noiseless, 1 naive
DEFAULT_N_BLOCKS = 8
DEFAULT_LATENT_DIM = 64
DEFAULT_N_HEADS = 8
STEP_EMBED_DIM = 128
HIGH_DIM_FEATURES = 32  # D at or above this switches to the small backbone
HIGH_DIM_N_BLOCKS = 4
HIGH_DIM_LATENT_DIM = 32

DEFAULT_LEARNING_RATE = 1e-3
DEFAULT_WEIGHT_DECAY = 1e-2
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
DEFAULT_BATCH_SIZE = 64
DEFAULT_MAX_EPOCHS = 100
DEFAULT_VALIDATION_FRACTION = 0.1
DEFAULT_PATIENCE = 10
DEFAULT_SEED = 0

DEFAULT_WINDOW_LEN = 100
DEFAULT_TRAIN_STRIDE = 1
DEFAULT_INFERENCE_STRIDE = 100
DEFAULT_LABEL_COLUMN = "label"

DEFAULT_SMOOTHING_WINDOW = 50  # half of the window size
DEFAULT_BUFFER = 50
DEFAULT_VUS_MAX_BUFFER = 50
DEFAULT_THRESHOLD_GRID = 100

# DAE baseline
DAE_NOISE_SCALE = 0.1
DAE_STEP = 1

# Ablation
DEFAULT_SEEDS = (0, 1, 2, 3, 4)
SWEEP_AXES = ("p", "c", "omega", "beta_end", "T", "S")
DEFAULT_SWEEP_GRIDS: dict[str, tuple[float, ...]] = {
    "p": tuple(round(0.1 * i, 1) for i in range(11)),
    "c": tuple(round(0.1 * i, 1) for i in range(11)),
    "omega": tuple(round(1.0 - 0.1 * i, 1) for i in range(11)),
    "beta_end": (0.001, 0.005, 0.01, 0.05, 0.1),
    "T": (1, 2, 4, 8, 16, 32, 50),
    "S": (1, 2, 4, 8, 16, 32, 50),
}

# Artifacts
CHECKPOINT_FORMAT = "anomaly-filter-checkpoint"
CHECKPOINT_VERSION = 1
REPORT_FORMAT_VERSION = 1
CHECKPOINT_FILE = "checkpoint.json"
TRAINING_LOG_FILE = "training_log.json"
SCORES_FILE = "scores.csv"
REPORT_FILE = "report.json"
SWEEP_CSV_FILE = "sweep_{axis}.csv"
MANIFEST_FILE = "manifest.json"
SYNTH_TRAIN_FILE = "train.csv"
SYNTH_TEST_FILE = "test.csv"

# Random streams derived from a run seed
STREAM_INIT = 0
STREAM_TRAIN = 1
STREAM_VALIDATION = 2
STREAM_INFERENCE = 3

# Window extraction modes
WINDOW_TRAIN = "train"
WINDOW_INFERENCE = "inference"
