"""Continuous-time multivariate Hawkes modeling: a CDE-driven hidden state
with exact non-event likelihood integration, plus classical exponential-kernel
simulation and scoring utilities."""

import os as _os

# The solver works on small matrices where BLAS thread fan-out costs more
# than it saves; single-threaded kernels keep runs fast and deterministic.
# Only effective if numpy has not been imported yet.
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    _os.environ.setdefault(_var, "1")

__version__ = "0.1.0"

from .data import Batch, Dataset, EventSequence, load_dataset, save_dataset
from .engine import SolverConfig
from .hawkes import ExpHawkesParams, exact_exp_hawkes_loglik, generate_hawkes
from .model import ModelConfig, ModelParams, load_checkpoint, save_checkpoint
from .training import MetricsReport, TrainConfig, ablate_integration, evaluate, repeat_trials, train

__all__ = [
    "Batch", "Dataset", "EventSequence", "load_dataset", "save_dataset",
    "SolverConfig", "ExpHawkesParams", "exact_exp_hawkes_loglik", "generate_hawkes",
    "ModelConfig", "ModelParams", "load_checkpoint", "save_checkpoint",
    "MetricsReport", "TrainConfig", "ablate_integration", "evaluate",
    "repeat_trials", "train", "__version__",
]
