"""Command-line experiments: configs, replica harness, runners and CSV output."""
from .config import ExperimentConfig, load_config
from .metric import WeakStarMetric
from .replicas import mean_stderr, replica_seeds, run_replicas
from .runners import RUNNERS, ExperimentResult

__all__ = [
    "ExperimentConfig", "load_config", "WeakStarMetric", "mean_stderr", "replica_seeds",
    "run_replicas", "RUNNERS", "ExperimentResult",
]
