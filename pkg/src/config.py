"""Central configuration for all technical settings.

All hyperparameter defaults, clip thresholds, and paths are defined here.
"""

from pathlib import Path

# =============================================================================
# Diffusion Settings
# =============================================================================
MAX_DIFFUSION_STEP = 1024  # T
REVERSE_STEPS = 16  # T_R
STARTING_NOISE = 1e-4  # w
ALPHA_BAR_FLOOR = 1e-5
ALPHA_BAR_CEIL = 1.0 - 1e-5

# =============================================================================
# Denoiser Settings
# =============================================================================
EMBEDDING_DIM = 64
NOISE_WEIGHT = 0.003  # lambda
CATEGORY_WEIGHT = 0.7  # gamma_cat
DROPOUT = 0.2
INIT_SCALE = 0.1
PATCH_INIT_GAIN = 0.05
SPATIAL_CLIP_KM = 100.0
TEMPORAL_CLIP_HOURS = 168.0
EARTH_RADIUS_KM = 6371.0

# =============================================================================
# Training Settings
# =============================================================================
LEARNING_RATE = 0.002  # eta
BATCH_SIZE = 16
MAX_EPOCHS = 200
PATIENCE = 10
NEGATIVES = 64
MAX_HISTORY = 200

# =============================================================================
# Data Settings
# =============================================================================
NUM_REGIONS = 5
REGION_FRACTION = 0.5
MAX_SEQUENCE_LENGTH = 200
MIN_INTERACTIONS = 10
MIN_SEQUENCE_LENGTH = 3
KMEANS_MAX_ITER = 100

# =============================================================================
# Evaluation Settings
# =============================================================================
NUM_CANDIDATES = 200  # H
METRIC_CUTOFFS = (5, 10)
BENCH_REPEATS = 100

# =============================================================================
# Logging
# =============================================================================
ENABLE_LOGGING = False  # Set to True to write a JSON event log for every run
LOGS_DIR = "output/logs"

# =============================================================================
# Directories
# =============================================================================
ROOT_DIR = Path(__file__).resolve().parent.parent
PRESETS_DIR = ROOT_DIR / "presets"
OUTPUT_DIR = "output"
ENV_PREFIX = "DCPR_"
