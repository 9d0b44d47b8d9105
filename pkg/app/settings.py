import copy
import json
import logging
import os
import sys
from typing import Dict, Optional

from dotenv import load_dotenv

from errors import InputError

__version__ = "1.0.0"

logger = logging.getLogger(__name__)

# Project root config (app/ -> project root)
CONFIG_PATH = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'config.json')

LOG_FORMAT = '%(asctime)s [%(levelname)s] %(message)s'

DEFAULTS = {
    "logging": {"level": "INFO", "file": None, "format": LOG_FORMAT},
    "runtime": {"threads": None, "chunk_size": 256},
    "pickands": {
        "step": 0.01,
        "rough_step": 0.002,
        "lambda_h": 8.0,
        "lambda_p": 4.0,
        "lambda1_p": 2.0,
        "reps": 10000,
        "min_reps": 100,
        "max_dense_points": 4000,
        "eigen_tolerance": 1e-10,
    },
    "fieldsim": {
        "grid": 2000,
        "reps": 10000,
        "recommended_grid": 100,
        "recommended_reps": 1000,
        "confidence": 0.95,
        "kuiper_terms": 5,
    },
    "asymptotics": {
        "pickands_table": {"1": 1.0, "2": 0.5641895835477563},
        "mc_reps": 10000,
        "mc_seed": 20240101,
    },
}


def _merge(base: Dict, override: Dict) -> Dict:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_config(path: Optional[str] = None) -> Dict:
    """
    Load config.json merged over the built-in defaults, then apply
    environment overrides (a .env file is honoured via python-dotenv).
    """
    load_dotenv()
    path = path or os.getenv('CHANGEPOINT_CONFIG') or CONFIG_PATH

    config = copy.deepcopy(DEFAULTS)
    if os.path.exists(path):
        try:
            with open(path, 'r', encoding='utf-8') as f:
                config = _merge(DEFAULTS, json.load(f))
        except (OSError, json.JSONDecodeError) as e:
            raise InputError(f"Config file {path} could not be read: {e}")
    else:
        logger.warning(f"Config file {path} not found, using built-in defaults")

    config = copy.deepcopy(config)
    threads = os.getenv('CHANGEPOINT_THREADS')
    if threads:
        try:
            config['runtime']['threads'] = int(threads)
        except ValueError:
            raise InputError(f"CHANGEPOINT_THREADS must be an integer, got {threads!r}")
    if os.getenv('CHANGEPOINT_LOG_LEVEL'):
        config['logging']['level'] = os.getenv('CHANGEPOINT_LOG_LEVEL')
    if os.getenv('CHANGEPOINT_LOG_FILE'):
        config['logging']['file'] = os.getenv('CHANGEPOINT_LOG_FILE')
    return config


def setup_logging(log_config: Dict, level: Optional[str] = None):
    """Log to stderr (stdout carries reports) and optionally to a file."""
    handlers = [logging.StreamHandler(sys.stderr)]
    if log_config.get('file'):
        handlers.append(logging.FileHandler(log_config['file']))

    logging.basicConfig(
        level=(level or log_config.get('level', 'INFO')).upper(),
        format=log_config.get('format', LOG_FORMAT),
        handlers=handlers,
        force=True,
    )

    # Also log uncaught exceptions
    def handle_exception(exc_type, exc_value, exc_traceback):
        if issubclass(exc_type, KeyboardInterrupt):
            sys.__excepthook__(exc_type, exc_value, exc_traceback)
            return
        logger.error("Uncaught exception", exc_info=(exc_type, exc_value, exc_traceback))

    sys.excepthook = handle_exception
