"""Assembly of the full forward pass: events -> embeddings -> control path ->
integrated hidden trajectory and non-event accumulator.

Two routes exist with identical semantics: a per-sequence route (reference,
used by oracles and ablation) and a lockstep batched route used for training,
where padded rows receive exactly-zero updates.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .data import Batch, EventSequence
from .embedding import embed_sequence, positional_encoding
from .engine import IntegrationResult, SolverConfig, integrate, integrate_batch, mc_nonevent
from .model import ModelParams


def sequence_knots(params: ModelParams, seq: EventSequence):
    """Time-augmented knot values of one sequence, on the tape."""
    z = embed_sequence(seq, params["embedding"])                       # (N, dz)
    zc = ad.concat([z, ad.constant(seq.times[:, None])], axis=1)       # (N, C)
    values = [zc[j] for j in range(len(seq))]
    return seq.times, values


def sequence_forward(params: ModelParams, seq: EventSequence,
                     solver: SolverConfig, record_dense: bool = False) -> IntegrationResult:
    times, values = sequence_knots(params, seq)
    h1 = params.initial_hidden(values[0])
    return integrate(times, values, h1, params.make_field_matvec(),
                     params.make_intensity_fn(), solver, record_dense=record_dense)


def sequence_mc_nonevent(params: ModelParams, seq: EventSequence,
                         solver: SolverConfig, n_samples: int, seed: int) -> float:
    times, values = sequence_knots(params, seq)
    h1 = params.initial_hidden(values[0])
    return mc_nonevent(times, values, h1, params.make_field_matvec(),
                       params.make_intensity_fn(), solver, n_samples, seed)


def batch_knots(params: ModelParams, batch: Batch):
    """Per-knot (S, C) value tensors for a padded batch."""
    dz = params.cfg.dim_embed
    values = []
    for j in range(batch.max_len):
        rows = ad.take_rows(params["embedding"], batch.types[:, j] - 1)
        pe = ad.constant(positional_encoding(batch.times[:, j], dz))
        zj = rows + pe
        values.append(ad.concat([zj, ad.constant(batch.times[:, j][:, None])], axis=1))
    return values


def batch_forward(params: ModelParams, batch: Batch, solver: SolverConfig):
    """Returns (knot_h: list of (S, dh) tensors, a_final: (S,) tensor)."""
    values = batch_knots(params, batch)
    h1 = params.initial_hidden(values[0])
    return integrate_batch(batch.times, batch.mask, values, h1,
                           params.make_field_matvec(), params.make_intensity_fn(), solver)


def batch_forward_mc(params: ModelParams, batch: Batch, solver: SolverConfig,
                     n_samples: int, seed: int):
    """Batched forward where the non-event accumulator is replaced by a
    differentiable Monte Carlo estimate on the substep grid.

    For each row, sample times are drawn uniformly over its event span and
    snapped to the nearest substep state; the estimate is span * the weighted
    mean of intensities there.  Used by the integration-method ablation.
    """
    values = batch_knots(params, batch)
    h1 = params.initial_hidden(values[0])
    S, L = batch.times.shape
    n_sub = solver.substeps

    intensity_fn = params.make_intensity_fn()
    dense_h: list = []                          # (S, dh) tensors on the substep grid
    knot_h, _ = integrate_batch(batch.times, batch.mask, values, h1,
                                params.make_field_matvec(), intensity_fn, solver,
                                dense_out=dense_h)
    grid_t = _substep_grid_times(batch, n_sub)  # (n_grid, S)

    rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0x3C1)))
    span = batch.times[np.arange(S), batch.lengths - 1] - batch.times[:, 0]
    u = rng.uniform(0.0, 1.0, size=(n_samples, S)) * span + batch.times[:, 0]
    # nearest grid index per (sample, row)
    idx = np.abs(grid_t[None, :, :] - u[:, None, :]).argmin(axis=1)   # (n_samples, S)
    weights = np.zeros((len(dense_h), S))
    for s in range(S):
        cnt = np.bincount(idx[:, s], minlength=len(dense_h))
        weights[:, s] = cnt / n_samples

    a_mc = ad.constant(np.zeros(S))
    for g, hg in enumerate(dense_h):
        wg = weights[g]
        if np.any(wg):
            a_mc = a_mc + intensity_fn(hg) * ad.constant(wg)
    a_mc = a_mc * ad.constant(span)
    return knot_h, a_mc


def _substep_grid_times(batch: Batch, n_sub: int) -> np.ndarray:
    """Times of the substep grid per row, matching integrate_batch's stepping."""
    S, L = batch.times.shape
    grid = [batch.times[:, 0].copy()]
    for j in range(L - 1):
        dt = (batch.times[:, j + 1] - batch.times[:, j]) * batch.mask[:, j + 1]
        for i in range(1, n_sub + 1):
            grid.append(batch.times[:, j] + dt * i / n_sub)
    return np.array(grid)
