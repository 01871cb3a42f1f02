"""Shared test helpers: finite-difference oracles and a tiny model fixture."""

import numpy as np

from cdehawkes import autodiff as ad


def rel_err(a, b, floor=1e-6):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def finite_diff_grads(tensors: dict, forward_fn, step=1e-6):
    """Central finite differences of a scalar function w.r.t. named tensors.

    ``forward_fn`` must read the tensors' current .data and return a float;
    it is evaluated with no tape active.
    """
    grads = {}
    with ad.no_grad():
        for name, t in tensors.items():
            g = np.zeros_like(t.data)
            flat = t.data.reshape(-1)
            gf = g.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + step
                lp = forward_fn()
                flat[i] = orig - step
                lm = forward_fn()
                flat[i] = orig
                gf[i] = (lp - lm) / (2.0 * step)
            grads[name] = g
    return grads


def tape_grads(tensors: dict, forward_fn):
    """Analytic gradients of forward_fn (returning a scalar Tensor) on a fresh tape."""
    for t in tensors.values():
        t.grad = None
    tape = ad.Tape()
    with ad.record(tape):
        out = forward_fn()
    tape.backward(out)
    return {name: (t.grad if t.grad is not None else np.zeros_like(t.data))
            for name, t in tensors.items()}
