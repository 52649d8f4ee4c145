"""Experiment orchestration, file formats and the command line."""

from .config import ConfigError, ExperimentConfig
from .runner import ExperimentResult, RunReport, analyze, run_experiment, run_sequence, simulate

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "ExperimentResult",
    "RunReport",
    "analyze",
    "run_experiment",
    "run_sequence",
    "simulate",
]
