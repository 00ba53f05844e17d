"""Lightweight multi-task predictive process monitoring on a numpy autodiff core."""
from .errors import ConfigError, DataError, PPMError, TrainingError
from .eventlog import EventLog, parse_csv, split_chronological
from .features import prepare
from .models import MODEL_TYPES, ModelConfig, build
from .training import TrainConfig, grid_search, train
from .evaluation import evaluate, select_model

__version__ = "0.1.0"

__all__ = ["ConfigError", "DataError", "PPMError", "TrainingError", "EventLog", "parse_csv",
           "split_chronological", "prepare", "MODEL_TYPES", "ModelConfig", "build",
           "TrainConfig", "grid_search", "train", "evaluate", "select_model"]
