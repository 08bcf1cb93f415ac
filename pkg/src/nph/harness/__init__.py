"""Synthetic data, pattern/result files and the retrieval experiments."""

from .data import gen_sphere_patterns, half_mask_query, noisy_query
from .experiments import ExperimentSpec, ResultTable, run_experiment
from .io import load_patterns, save_patterns, save_results

__all__ = [
    "ExperimentSpec",
    "ResultTable",
    "gen_sphere_patterns",
    "half_mask_query",
    "load_patterns",
    "noisy_query",
    "run_experiment",
    "save_patterns",
    "save_results",
]
