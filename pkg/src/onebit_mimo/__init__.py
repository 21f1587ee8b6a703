"""One-bit mmWave MIMO channel estimation by band-aware gradient pursuit."""

__version__ = "0.1.0"

from ._accel import USE_NUMBA, backend_name
from .harness import EstimatorSpec, ExperimentConfig, run_experiment
from .likelihood import ObjectiveContext, eval_h, grad_h
from .linops import DenseOperator, FFTOperator, build_operator
from .metrics import extract_paths, match_paths, mse_metrics, nmse
from .model import (
    ConfigError,
    GridCollisionError,
    PathSet,
    SystemConfig,
    VirtualChannel,
    make_channel,
    make_dictionary,
    make_zc_training,
    nearest_grid_map,
    simulate_measurement,
)
from .solvers import SolverOptions, calibrate_gamma, fista, run_estimator
from .threshold import be_threshold, bms_threshold, build_bands, hard_threshold

__all__ = [
    "USE_NUMBA",
    "backend_name",
    "EstimatorSpec",
    "ExperimentConfig",
    "run_experiment",
    "ObjectiveContext",
    "eval_h",
    "grad_h",
    "DenseOperator",
    "FFTOperator",
    "build_operator",
    "extract_paths",
    "match_paths",
    "mse_metrics",
    "nmse",
    "ConfigError",
    "GridCollisionError",
    "PathSet",
    "SystemConfig",
    "VirtualChannel",
    "make_channel",
    "make_dictionary",
    "make_zc_training",
    "nearest_grid_map",
    "simulate_measurement",
    "SolverOptions",
    "calibrate_gamma",
    "fista",
    "run_estimator",
    "be_threshold",
    "bms_threshold",
    "build_bands",
    "hard_threshold",
]
