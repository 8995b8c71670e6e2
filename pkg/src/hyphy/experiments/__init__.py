"""Config-driven experiment harness."""

from .config import ExperimentConfig, load_config, parse_config
from .metrics import ResultTable, evaluate_accuracy, evaluate_ber
from .runners import run_experiment

__all__ = ["ExperimentConfig", "load_config", "parse_config", "ResultTable", "evaluate_accuracy",
           "evaluate_ber", "run_experiment"]
