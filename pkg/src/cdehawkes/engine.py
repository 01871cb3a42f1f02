"""Fixed-step RK4 integration of the augmented system [hidden state; accumulator].

The hidden state follows dh/dt = field(h) @ dZ/dt with Z the piecewise-linear
control path; the accumulator follows da/dt = total_intensity(h), so its
terminal value is the non-event part of the log-likelihood, exact up to
solver truncation.  Steps are aligned to the path knots: the derivative of Z
is discontinuous exactly there, and an adaptive controller would only waste
effort rediscovering that.  The whole computation is recorded on the autodiff
tape, so gradients backpropagate through every solver stage
(discretize-then-optimize).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import NonFiniteError, Tensor


@dataclass
class SolverConfig:
    """Uniform RK4 substeps per inter-knot segment; steps never straddle a knot."""

    substeps: int = 8

    def __post_init__(self):
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")


@dataclass
class IntegrationResult:
    knot_h: list          # hidden state Tensor at every knot time
    a_final: Tensor       # accumulated non-event integral at the last knot
    dense_times: np.ndarray | None = None   # substep grid (record_dense only)
    dense_h: np.ndarray | None = None       # states on that grid, numpy values
    a_substeps: np.ndarray | None = None    # accumulator on that grid, values


def _as_value_tensors(values) -> list[Tensor]:
    return [v if isinstance(v, Tensor) else ad.constant(np.asarray(v, dtype=np.float64))
            for v in values]


def integrate(times, values, init_h: Tensor, field_matvec, intensity_fn,
              solver: SolverConfig, frozen_intensity=None,
              record_dense: bool = False) -> IntegrationResult:
    """Advance [h; a] across all knots of one sequence.

    times: (N,) strictly increasing knot times; values: N knot vectors (C,),
    tensors or arrays.  field_matvec(h, slope) -> dh/dt tensor (None freezes
    h); intensity_fn(h) -> scalar tensor, the accumulator's derivative.
    frozen_intensity(seg_index, t) -> float substitutes an analytic
    time-dependent integrand for the accumulator (oracle tests).
    """
    times = np.asarray(times, dtype=np.float64)
    values = _as_value_tensors(values)
    if len(times) < 1:
        raise ValueError("need at least one knot")
    h = init_h
    a = ad.constant(0.0)
    knot_h = [h]
    dense_t = [times[0]] if record_dense else None
    dense_h = [h.data.copy()] if record_dense else None
    a_sub = [0.0] if record_dense else None

    n_sub = solver.substeps
    for j in range(len(times) - 1):
        dt_seg = times[j + 1] - times[j]
        if dt_seg <= 0.0:
            raise ValueError(f"knot times not strictly increasing at segment {j}")
        slope = (values[j + 1] - values[j]) * (1.0 / dt_seg)
        hs = dt_seg / n_sub
        for i in range(n_sub):
            t0 = times[j] + i * hs
            h, a = _rk4_substep(h, a, slope, hs, t0, j, field_matvec, intensity_fn,
                                frozen_intensity)
            if record_dense:
                dense_t.append(t0 + hs)
                dense_h.append(h.data.copy())
                a_sub.append(float(a.data))
        if not np.all(np.isfinite(h.data)) or not np.isfinite(a.data):
            raise NonFiniteError(f"non-finite state after segment {j}")
        knot_h.append(h)

    return IntegrationResult(
        knot_h, a,
        dense_times=np.array(dense_t) if record_dense else None,
        dense_h=np.array(dense_h) if record_dense else None,
        a_substeps=np.array(a_sub) if record_dense else None,
    )


def _rk4_substep(h, a, slope, hs, t0, seg_index, field_matvec, intensity_fn, frozen_intensity):
    def dh(state):
        if field_matvec is None:
            return None
        return field_matvec(state, slope)

    def da(state, t):
        if frozen_intensity is not None:
            return ad.constant(float(frozen_intensity(seg_index, t)))
        if intensity_fn is None:
            return ad.constant(0.0)
        return intensity_fn(state)

    k1h = dh(h)
    k1a = da(h, t0)
    h2 = h if k1h is None else ad.axpy(h, k1h, hs / 2.0)
    k2h = dh(h2)
    k2a = da(h2, t0 + hs / 2.0)
    h3 = h if k2h is None else ad.axpy(h, k2h, hs / 2.0)
    k3h = dh(h3)
    k3a = da(h3, t0 + hs / 2.0)
    h4 = h if k3h is None else ad.axpy(h, k3h, hs)
    k4h = dh(h4)
    k4a = da(h4, t0 + hs)

    if k1h is not None:
        h = ad.rk4_combine(h, k1h, k2h, k3h, k4h, hs / 6.0)
    a = ad.rk4_combine(a, k1a, k2a, k3a, k4a, hs / 6.0)
    return h, a


def integrate_batch(times: np.ndarray, mask: np.ndarray, values, init_h: Tensor,
                    field_matvec, intensity_fn, solver: SolverConfig,
                    dense_out: list | None = None):
    """Lockstep RK4 over a padded batch.

    times, mask: (S, L); values: list of L tensors (S, C); init_h: (S, dh).
    field_matvec(H, W) -> (S, dh) field rows applied to W; intensity_fn(H) -> (S,).
    Padded segments carry zero time-steps and zero path increments, so frozen
    rows are updated by exactly zero and padding stays bitwise-neutral.
    Returns (knot_h: list of L tensors (S, dh), a_final: (S,) tensor).  If
    ``dense_out`` is a list, the state tensor at every substep grid point
    (initial state included) is appended to it.
    """
    S, L = times.shape
    n_sub = solver.substeps
    h = init_h
    a = ad.constant(np.zeros(S))
    knot_h = [h]
    if dense_out is not None:
        dense_out.append(h)
    for j in range(L - 1):
        seg_mask = mask[:, j + 1]
        dt = (times[:, j + 1] - times[:, j]) * seg_mask          # (S,)
        w = (values[j + 1] - values[j]) * ad.constant(seg_mask[:, None] / n_sub)  # per-substep dZ
        dt_over6 = dt / (6.0 * n_sub)                             # accumulator step weight, (S,)
        for _ in range(n_sub):
            m1 = field_matvec(h, w)
            l1 = intensity_fn(h)
            h2 = ad.axpy(h, m1, 0.5)
            m2 = field_matvec(h2, w)
            l2 = intensity_fn(h2)
            h3 = ad.axpy(h, m2, 0.5)
            m3 = field_matvec(h3, w)
            l3 = intensity_fn(h3)
            h4 = ad.axpy(h, m3, 1.0)
            m4 = field_matvec(h4, w)
            l4 = intensity_fn(h4)
            h = ad.rk4_combine(h, m1, m2, m3, m4, 1.0 / 6.0)
            a = ad.rk4_combine(a, l1, l2, l3, l4, dt_over6)
            if dense_out is not None:
                dense_out.append(h)
        if not np.all(np.isfinite(h.data)):
            raise NonFiniteError(f"non-finite state after segment {j}")
        knot_h.append(h)
    return knot_h, a


def mc_nonevent(times, values, init_h, field_matvec, intensity_fn,
                solver: SolverConfig, n_samples: int, seed: int) -> float:
    """Monte Carlo estimate of the non-event integral over [t_1, t_N].

    Draws uniform times, looks up the hidden state at the nearest point of
    the solver's substep grid, and averages the intensity there; unbiased for
    the grid-resolution integrand.  Evaluation only, never recorded.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    times = np.asarray(times, dtype=np.float64)
    span = times[-1] - times[0]
    if span <= 0.0:
        return 0.0
    with ad.no_grad():
        res = integrate(times, [v.data if isinstance(v, Tensor) else v for v in values],
                        ad.Tensor(init_h.data), field_matvec, intensity_fn, solver,
                        record_dense=True)
        rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0x3C)))
        u = rng.uniform(times[0], times[-1], size=n_samples)
        idx = np.searchsorted(res.dense_times, u)
        idx = np.clip(idx, 1, len(res.dense_times) - 1)
        left_closer = (u - res.dense_times[idx - 1]) < (res.dense_times[idx] - u)
        idx = np.where(left_closer, idx - 1, idx)
        lam = intensity_fn(ad.constant(res.dense_h[idx])).data
    return float(span * lam.mean())
