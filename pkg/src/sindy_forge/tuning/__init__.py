"""Hyperparameter search, the ARX baseline, and the experiment pipeline."""

from .arx import ArxModel, fit_arx, simulate_arx
from .config import ExperimentConfig, load_config, parse_config
from .pipeline import run_pipeline, strip_timing, write_plot_data, write_report
from .search import SearchResult, SearchSpace, TrialRecord, categorical, log_uniform, search, uniform

__all__ = [
    "ArxModel",
    "ExperimentConfig",
    "SearchResult",
    "SearchSpace",
    "TrialRecord",
    "categorical",
    "fit_arx",
    "load_config",
    "log_uniform",
    "parse_config",
    "run_pipeline",
    "search",
    "simulate_arx",
    "strip_timing",
    "uniform",
    "write_plot_data",
    "write_report",
]
