"""Experiment configuration, grid execution, reporting and the CLI."""

from .config import ExperimentConfig, load_config, parse_config_text, render_config
from .experiment import ResultRow, run_experiment

__all__ = ["ExperimentConfig", "ResultRow", "load_config", "parse_config_text", "render_config", "run_experiment"]
