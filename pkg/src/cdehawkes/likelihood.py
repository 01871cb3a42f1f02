"""Sequence log-probability, prediction heads, and the three-part loss.

The log-probability of a sequence is the sum of log intensities at the
events minus the accumulated non-event integral.  As written, the event term
uses the *total* intensity; setting ``marked_event_term`` on the model config
switches to the per-type intensity of the observed mark (the classical
marked-process form).
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import Batch, EventSequence
from .model import ModelParams


def sequence_log_prob(event_intensities, a_final) -> Tensor:
    """log p = sum_j log lambda(t_j) - a(t_N); strictly decreasing in a with slope -1."""
    total = ad.constant(0.0)
    for lam in event_intensities:
        total = total + ad.log(lam if isinstance(lam, Tensor) else ad.constant(lam))
    return total - (a_final if isinstance(a_final, Tensor) else ad.constant(a_final))


def predict_type(h: Tensor, params: ModelParams) -> tuple[np.ndarray, int]:
    """Next-type distribution and its argmax (ties break to the smallest index).

    Returns (probabilities, 1-based predicted type).
    """
    probs = ad.softmax(params.type_logits(h)).data
    return probs, int(np.argmax(probs)) + 1


def predict_time(h: Tensor, params: ModelParams, t_prev: float,
                 clamp: bool = True) -> tuple[float, float]:
    """Predicted inter-arrival and absolute next-event time.

    The head regresses the inter-arrival; negative raw outputs are clamped to
    zero only here, in reported predictions (training sees the raw value).
    """
    tau = float(params.inter_arrival(h).data)
    if clamp:
        tau = max(tau, 0.0)
    return tau, t_prev + tau


def sequence_losses(seq: EventSequence, knot_h: list[Tensor], a_final: Tensor,
                    params: ModelParams, alpha1: float, alpha2: float) -> dict:
    """Loss terms of one sequence: negative log-probability, next-type
    cross-entropy, squared inter-arrival error, and their weighted total.

    Supervised positions are j = 2..N (each predicted from the hidden state
    at the previous event); a single-event sequence contributes only the
    likelihood term.
    """
    n = len(seq)
    event_lams = []
    for j in range(n):
        lam = params.type_intensities(knot_h[j])
        if params.cfg.marked_event_term:
            event_lams.append(lam[int(seq.types[j]) - 1])
        else:
            event_lams.append(ad.tensor_sum(lam))
    log_p = sequence_log_prob(event_lams, a_final)

    l_type = ad.constant(0.0)
    l_time = ad.constant(0.0)
    for j in range(1, n):
        logp_vec = ad.log_softmax(params.type_logits(knot_h[j - 1]))
        l_type = l_type - logp_vec[int(seq.types[j]) - 1]
        tau_hat = params.inter_arrival(knot_h[j - 1])
        diff = tau_hat - float(seq.times[j] - seq.times[j - 1])
        l_time = l_time + diff * diff

    total = log_p * (-alpha1) + l_type + l_time * alpha2
    return {"log_prob": log_p, "type": l_type, "time": l_time, "total": total}


def batch_losses(batch: Batch, knot_h: list[Tensor], a_final: Tensor,
                 params: ModelParams, alpha1: float, alpha2: float,
                 a_override: Tensor | None = None) -> dict:
    """Batched loss terms; padded positions are masked to exact zeros.

    Every component is a per-sequence vector (S,); the scalar training
    objective is the batch mean of the weighted totals.  ``a_override``
    substitutes a different non-event estimate (the Monte Carlo training
    ablation) while keeping everything else identical.
    """
    S, L = batch.types.shape
    K = params.cfg.num_types
    a_used = a_final if a_override is None else a_override

    event_term = ad.constant(np.zeros(S))
    for j in range(L):
        lam = params.type_intensities(knot_h[j])          # (S, K)
        if params.cfg.marked_event_term:
            onehot = np.zeros((S, K))
            onehot[np.arange(S), batch.types[:, j] - 1] = 1.0
            lam_j = ad.tensor_sum(lam * ad.constant(onehot), axis=-1)
        else:
            lam_j = ad.tensor_sum(lam, axis=-1)
        event_term = event_term + ad.log(lam_j) * ad.constant(batch.mask[:, j])
    log_p = event_term - a_used

    l_type = ad.constant(np.zeros(S))
    l_time = ad.constant(np.zeros(S))
    for j in range(1, L):
        m = batch.mask[:, j]
        logp_vec = ad.log_softmax(params.type_logits(knot_h[j - 1]))
        onehot = np.zeros((S, K))
        onehot[np.arange(S), batch.types[:, j] - 1] = m
        l_type = l_type - ad.tensor_sum(logp_vec * ad.constant(onehot), axis=-1)
        tau_hat = params.inter_arrival(knot_h[j - 1])
        diff = tau_hat - ad.constant(batch.times[:, j] - batch.times[:, j - 1])
        l_time = l_time + diff * diff * ad.constant(m)

    total = log_p * (-alpha1) + l_type + l_time * alpha2
    return {"log_prob": log_p, "type": l_type, "time": l_time, "total": total}
