"""Gated recurrent cells, time-scale aware bias initialization and synthetic
long-dependency benchmarks, all in NumPy with hand-written BPTT."""

from .cells import RecurrentModel, grad_check
from .estimator import SequenceClassifier, SequenceRegressor
from .exceptions import ConfigurationError, NumericalError
from .init import InitPolicy, chrono_init, gate_range_init
from .tasks import TaskSpec, WarpSpec, adding_baseline, copy_baseline
from .train import TrainConfig, evaluate, multi_run, run_experiment, train_model

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError", "InitPolicy", "NumericalError", "RecurrentModel", "SequenceClassifier",
    "SequenceRegressor", "TaskSpec", "TrainConfig", "WarpSpec", "adding_baseline",
    "chrono_init", "copy_baseline", "evaluate", "gate_range_init", "grad_check", "multi_run",
    "run_experiment", "train_model",
]
