"""Disc benchmark: exact solution, experiment configurations and drivers."""
from .config import ConfigError, ExperimentConfig, canned_config
from .exact import ExactSolution, exact_u, exact_z, l2_error_u
from .runner import build_meshes, run_test

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "canned_config",
    "ExactSolution",
    "exact_u",
    "exact_z",
    "l2_error_u",
    "build_meshes",
    "run_test",
]
