"""Benchmark harness: configs, Monte Carlo runners and the command line."""

from .config import AlgorithmSpec, ExperimentConfig, FilterSpec, config_from_dict, load_config
from .runner import (
    ErrorRecord,
    gain_error,
    run_filter_experiment,
    run_gain_benchmark,
    run_gain_eval,
    summarize_errors,
)
