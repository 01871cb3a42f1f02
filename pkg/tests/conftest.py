import os
import sys

for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(var, "1")

sys.path.insert(0, os.path.dirname(__file__))

import numpy as np
import pytest

from cdehawkes.data import Dataset
from cdehawkes.hawkes import ExpHawkesParams, generate_hawkes
from cdehawkes.model import ModelConfig, ModelParams


@pytest.fixture(scope="session")
def two_type_hawkes() -> ExpHawkesParams:
    """Symmetric self-exciting two-type process, mean sequence length ~20."""
    return ExpHawkesParams(mu=np.array([0.2, 0.2]), alpha=np.diag([0.6, 0.6]),
                           beta_decay=np.full((2, 2), 1.0), horizon=20.0)


@pytest.fixture(scope="session")
def synthetic_sequences(two_type_hawkes):
    return generate_hawkes(two_type_hawkes, 64, seed=11)


@pytest.fixture(scope="session")
def synthetic_dataset(synthetic_sequences) -> Dataset:
    return Dataset(2, [s for s in synthetic_sequences if len(s) >= 2])


@pytest.fixture
def tiny_params() -> ModelParams:
    cfg = ModelConfig(num_types=2, dim_embed=6, dim_hidden=8,
                      field_layers=2, field_hidden=8)
    return ModelParams.init(cfg, seed=3)
