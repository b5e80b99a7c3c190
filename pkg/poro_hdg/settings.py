import os
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()

BASE_DIR = Path(__file__).resolve().parent.parent

LOG_LEVEL = os.getenv("POROHDG_LOG_LEVEL", "INFO")
LOG_FORMAT = "%(asctime)s %(levelname)s [%(name)s] %(message)s"

OUTPUT_DIR = Path(os.getenv("POROHDG_OUTPUT_DIR", "runs"))

# beta = PENALTY_FACTOR * k**2
PENALTY_FACTOR = float(os.getenv("POROHDG_PENALTY_FACTOR", "10.0"))

RESIDUAL_TOLERANCE = float(os.getenv("POROHDG_RESIDUAL_TOLERANCE", "1e-11"))
BREAKDOWN_TOLERANCE = float(os.getenv("POROHDG_BREAKDOWN_TOLERANCE", "1e-6"))
REFINEMENT_STEPS = int(os.getenv("POROHDG_REFINEMENT_STEPS", "4"))

# Column ordering handed to SuperLU for the facet system.
PERMC_SPEC = os.getenv("POROHDG_PERMC_SPEC", "MMD_AT_PLUS_A")

# Largest matrix (rows) handed to dense eigen/SVD checks.
DENSE_LIMIT = int(os.getenv("POROHDG_DENSE_LIMIT", "3000"))

SEED = int(os.getenv("POROHDG_SEED", "20240101"))
SHOW_PROGRESS = os.getenv("POROHDG_PROGRESS", "1") == "1"

CSV_FLOAT_FORMAT = os.getenv("POROHDG_CSV_FLOAT_FORMAT", "%.10e")

RUN_SLOW_TESTS = os.getenv("POROHDG_RUN_SLOW", "0") == "1"

CONFIG_SCHEMA_VERSION = 1
CHECKPOINT_FORMAT_VERSION = 1
