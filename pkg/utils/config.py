import json
import os
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

from dotenv import load_dotenv
from pydantic import ValidationError

from models.schema import ModelConfig
from training.schema import TrainConfig
from utils.errors import ConfigurationError

load_dotenv()

# Paths
PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
OUTPUT_DIR = os.getenv("MMFF_OUTPUT_DIR", os.path.join(PROJECT_ROOT, "runs"))

ARTIFACT_VERSION = "0.3.0"

# Logging
LOG_LEVEL = os.getenv("MMFF_LOG_LEVEL", "INFO")


def fold_threads() -> int:
    """Upper bound on folds trained in parallel (MMFF_THREADS, else logical CPUs)."""
    raw = os.getenv("MMFF_THREADS")
    if raw is None or raw.strip() == "":
        return os.cpu_count() or 1
    try:
        value = int(raw)
    except ValueError:
        raise ConfigurationError(f"MMFF_THREADS must be an integer, got {raw!r}")
    if value < 1:
        raise ConfigurationError(f"MMFF_THREADS must be >= 1, got {value}")
    return value


def read_config_file(path: Optional[str]) -> Dict[str, Any]:
    """Reads a flat JSON config file; a missing path means 'all defaults'."""
    if path is None:
        return {}
    if not os.path.exists(path):
        raise ConfigurationError(f"config file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"config file {path} is not valid JSON: {e}")
    if not isinstance(raw, dict):
        raise ConfigurationError(f"config file {path} must hold a JSON object")
    return raw


def load_experiment_config(
    path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None
) -> Tuple[ModelConfig, TrainConfig]:
    """
    Splits a flat key space into the architecture and protocol configs.
    Precedence is override > file key > model default.
    """
    values = read_config_file(path)
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value

    model_keys = set(ModelConfig.model_fields)
    train_keys = set(TrainConfig.model_fields)
    unknown = sorted(set(values) - model_keys - train_keys)
    if unknown:
        raise ConfigurationError(f"unknown config keys: {', '.join(unknown)}")

    try:
        model_cfg = ModelConfig(**{k: v for k, v in values.items() if k in model_keys})
        train_cfg = TrainConfig(**{k: v for k, v in values.items() if k in train_keys})
    except ValidationError as e:
        raise ConfigurationError(f"invalid configuration: {_first_error(e)}")
    return model_cfg, train_cfg


def config_echo(model_cfg: ModelConfig, train_cfg: TrainConfig) -> Dict[str, Any]:
    """The flat key space back again, for reproducibility records."""
    echo = model_cfg.model_dump(mode="json")
    echo.update(train_cfg.model_dump(mode="json"))
    return echo


def ensure_output_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _first_error(e: ValidationError) -> str:
    err = e.errors()[0]
    where = ".".join(str(p) for p in err.get("loc", ())) or "config"
    return f"{where}: {err.get('msg', 'invalid value')}"
