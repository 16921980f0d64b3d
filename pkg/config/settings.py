"""
Application configuration

Defaults for every service live here as uppercase-keyed dicts. Runs are
reproducible from a plain key = value file read by load_config; nothing is
taken from the environment.
"""
import logging
from pathlib import Path
from typing import Any, Dict, Optional

from utils.errors import ShapeError

logger = logging.getLogger(__name__)

# Base directory
BASE_DIR = Path(__file__).parent.parent

# Logging configuration
LOGGING_CONFIG = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'default': {
            'format': '[%(asctime)s] %(levelname)s in %(module)s: %(message)s',
        }
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'level': 'DEBUG',
            'formatter': 'default',
            'stream': 'ext://sys.stdout'
        }
    },
    'root': {
        'level': 'INFO',
        'handlers': ['console']
    }
}

# Network representation
NETWORK_CONFIG = {
    'MAX_EVAL_INPUT_BITS': 20,  # cmd_eval --all cap
    'EVAL_CHUNK_WORDS': 1 << 22,  # popcount work per evaluation chunk
}

# Gadget constructions
GADGET_CONFIG = {
    'RETRY_BUDGET': 64,  # injective / sign-matrix resampling
    'SIGN_MATRIX_C': 2.0,  # d1 = ceil(c * sqrt(d0) * log N)
}

# Memorizer pipeline
MEMORIZER_CONFIG = {
    'MAX_RETRIES': 64,  # hash resamples per k
    'KWISE_K': 4,
    'KWISE_K_MAX': 8,
    'BLOCK_SCAN_BATCH': 1 << 14,
    'BLOCK_SCAN_LIMIT': 1 << 22,  # samples per block per hash
    'FEASIBILITY_SAMPLES': 1 << 16,
    'TERNARY_FIRST_LAYER': False,
    'SEED': 0,
    'LOG_TOLERANCE': 1e-12,
}

# Learning rules and exact computations
LEARNING_CONFIG = {
    'ENUMERATION_CAP': 10 ** 8,  # |Theta| limit for posterior_enumerate
    'MINSIZE_STATE_BUDGET': 2 * 10 ** 6,
    'EXACT_SUPPORT_CAP': 1 << 20,
    'EPS_TR_SUPPORT_CAP': 64,
    'EPS_TR_N_CAP': 20,
    'MC_SAMPLES': 10 ** 5,
    'MAX_DRAWS': 10 ** 6,
    'SAMPLE_BATCH': 4096,
}

# Experiment runner
EXPERIMENT_CONFIG = {
    'LEARNER': 'posterior',  # posterior | minsize | constant
    'TEACHER_FILE': '',
    'TEACHER_DIMS': [3, 1],
    'TEACHER_SEED': 1,
    'D0': 3,
    'MARGINAL': 'uniform',  # uniform | comma separated point masses
    'NOISE': 'independent',  # independent | arbitrary
    'EPS_GRID': [0.1, 0.2, 0.3, 0.4],
    'N_GRID': [10],
    'TRIALS': 200,
    'SEED': 0,
    'STUDENT_DIMS': [3, 3, 2, 1],
    'MINSIZE_DEPTH': 2,
    'ENUMERATION_CAP': 10 ** 13,
    'MAX_RESAMPLES': 1000,  # dataset redraws per trial until consistent
    'MAX_WORKERS': 4,
}

# Description-length codec
CODEC_CONFIG = {
    'VERSION': 1,
    'C': 12,  # calibrated bound constants
    'C0': 64,
}

# Curves
CURVE_CONFIG = {
    'POINTS': 101,
}

# Verification suites
VERIFY_CONFIG = {
    'QUICK_PARITY_MAX_D': 8,
    'FULL_PARITY_MAX_D': 12,
    'SEED': 20240601,
}


def _coerce(raw: str, default: Any, key: str, line_no: int) -> Any:
    try:
        if isinstance(default, bool):
            if raw.lower() in ('1', 'true', 'yes', 'on'):
                return True
            if raw.lower() in ('0', 'false', 'no', 'off'):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(float(raw)) if ('e' in raw.lower() or '.' in raw) else int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, list):
            items = [item.strip() for item in raw.split(',') if item.strip()]
            sample = default[0] if default else ''
            return [_coerce(item, sample, key, line_no) for item in items]
        return raw
    except ValueError:
        raise ShapeError(f"config line {line_no}: bad value {raw!r} for {key}")


def load_config(path: Path, defaults: Dict[str, Any]) -> Dict[str, Any]:
    """
    Load a key = value configuration file over a set of defaults

    Keys are case-insensitive and must exist in defaults; values are coerced
    to the default's type (lists are comma separated).

    Args:
        path: Configuration file
        defaults: Default values, e.g. EXPERIMENT_CONFIG

    Returns:
        dict: Defaults updated with the file's values
    """
    config = dict(defaults)
    config_file = Path(path)
    if not config_file.exists():
        raise ShapeError(f"config file not found: {config_file}")

    with open(config_file, 'r') as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith('#'):
                continue
            if '=' not in line:
                raise ShapeError(f"config line {line_no}: expected key = value")
            key, value = line.split('=', 1)
            key = key.strip().upper()
            if key not in defaults:
                raise ShapeError(f"config line {line_no}: unknown key {key}")
            config[key] = _coerce(value.strip(), defaults[key], key, line_no)

    logger.info(f"Loaded {len(config)} settings from {config_file}")
    return config


def merged(defaults: Dict[str, Any], overrides: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """Copy of defaults with overrides applied"""
    config = dict(defaults)
    if overrides:
        config.update(overrides)
    return config
