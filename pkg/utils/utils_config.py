"""
utils_config.py - environment-driven defaults for the quilting tools.

Values come from the process environment or a local .env file.
Command-line flags and JSON run configs override these defaults.
"""

#####################################
# Import Modules
#####################################

# Import packages from Python Standard Library
import os
import pathlib

# Import external packages
from dotenv import load_dotenv

# Import functions from local modules
from utils.utils_logger import logger

#####################################
# Load Environment Variables
#####################################

load_dotenv()

#####################################
# Default Configurations
#####################################

DEFAULT_THREADS = 1
DEFAULT_OUT_DIR = "outputs"
DEFAULT_STATISTIC = "rho"
DEFAULT_ROOT_SEED = 20240601

#####################################
# Getter Functions for .env Variables
#####################################


def get_thread_count() -> int:
    """Fetch the replicate worker count from environment or use default."""
    raw = os.getenv("QUILT_THREADS", str(DEFAULT_THREADS))
    try:
        threads = max(1, int(raw))
    except ValueError:
        logger.warning(f"Ignoring non-integer QUILT_THREADS={raw!r}")
        threads = DEFAULT_THREADS
    logger.debug(f"Worker threads: {threads}")
    return threads


def get_output_dir() -> pathlib.Path:
    """Fetch the default output directory from environment or use default."""
    out_dir = pathlib.Path(os.getenv("QUILT_OUT_DIR", DEFAULT_OUT_DIR))
    logger.debug(f"Output directory: {out_dir}")
    return out_dir


def get_default_statistic() -> str:
    """Fetch the default rank statistic (rho, tau or pearson)."""
    statistic = os.getenv("QUILT_STATISTIC", DEFAULT_STATISTIC).strip().lower()
    if statistic not in ("rho", "tau", "pearson"):
        logger.warning(f"Unknown QUILT_STATISTIC={statistic!r}, using {DEFAULT_STATISTIC}")
        statistic = DEFAULT_STATISTIC
    logger.debug(f"Default statistic: {statistic}")
    return statistic


def get_root_seed() -> int:
    """Fetch the root seed for benchmark sweeps from environment or use default."""
    raw = os.getenv("QUILT_ROOT_SEED", str(DEFAULT_ROOT_SEED))
    try:
        seed = int(raw)
    except ValueError:
        logger.warning(f"Ignoring non-integer QUILT_ROOT_SEED={raw!r}")
        seed = DEFAULT_ROOT_SEED
    logger.debug(f"Root seed: {seed}")
    return seed


def run_slow_checks() -> bool:
    """True when the long simulation acceptance checks should run."""
    return os.getenv("QUILT_RUN_SLOW", "0").strip() in ("1", "true", "yes")
