"""Event embeddings: trainable type vectors plus trigonometric time encoding.

The discrete representation of event j is the elementwise sum of a learned
per-type vector and a fixed sinusoidal encoding of its timestamp.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .data import EventSequence


def positional_encoding(t, dim: int) -> np.ndarray:
    """Sinusoidal time encoding; entry u is sin(t / 10000^(u/dim)) for even u
    and cos(t / 10000^((u-1)/dim)) for odd u (0-indexed).

    Accepts a scalar or an array of times; output appends the ``dim`` encoding
    axis last.  Deterministic and non-trainable.
    """
    if dim < 2 or dim % 2 != 0:
        raise ValueError("encoding dim must be an even integer >= 2")
    t = np.asarray(t, dtype=np.float64)
    u = np.arange(dim)
    expo = np.where(u % 2 == 0, u, u - 1) / dim
    scaled = t[..., None] / np.power(10000.0, expo)
    out = np.where(u % 2 == 0, np.sin(scaled), np.cos(scaled))
    return out


def init_embedding_table(num_types: int, dim: int, rng: np.random.Generator) -> ad.Tensor:
    """K x dim table, zero-mean Gaussian with std 1/sqrt(dim)."""
    return ad.Tensor(rng.normal(0.0, 1.0 / np.sqrt(dim), size=(num_types, dim)))


def embed_sequence(seq: EventSequence, table: ad.Tensor) -> ad.Tensor:
    """Discrete hidden representations, one row per event: E_type(k_j) + E_time(t_j)."""
    num_types, dim = table.data.shape
    if np.any(seq.types < 1) or np.any(seq.types > num_types):
        raise ValueError(f"event type outside [1, {num_types}]")
    rows = ad.take_rows(table, seq.types - 1)
    return rows + ad.constant(positional_encoding(seq.times, dim))
