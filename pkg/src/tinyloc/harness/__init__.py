"""Experiment orchestration: config, artifacts, pipeline stages, metrics and CLI."""

from .config import ConfigError, ExperimentConfig, default_config_path, load_config
from .metrics import EvaluationReport, error_cdf
from .pipeline import StageError, compare_baselines, run_pipeline, run_stage

__all__ = ["ConfigError", "EvaluationReport", "ExperimentConfig", "StageError",
           "compare_baselines", "default_config_path", "error_cdf", "load_config",
           "run_pipeline", "run_stage"]
