"""Adam optimizer behavior."""

import numpy as np
import pytest

from cdehawkes import autodiff as ad
from cdehawkes.optim import Adam


def test_first_step_moves_by_lr_times_sign():
    p = ad.Tensor(np.array([1.0, -2.0, 3.0]))
    p.grad = np.array([0.5, -0.1, 2.0])
    opt = Adam({"p": p}, lr=0.01, weight_decay=0.0)
    before = p.data.copy()
    opt.step()
    move = p.data - before
    # bias-corrected first step is -lr * g/|g| up to eps
    assert np.allclose(move, -0.01 * np.sign([0.5, -0.1, 2.0]), atol=1e-6)


def test_zero_gradient_zero_decay_leaves_params():
    p = ad.Tensor(np.array([[1.0, 2.0]]))
    p.grad = np.zeros_like(p.data)
    opt = Adam({"p": p}, lr=0.1, weight_decay=0.0)
    opt.step()
    assert np.array_equal(p.data, [[1.0, 2.0]])


def test_scalar_quadratic_convergence():
    """200 steps on (w-3)^2 from 0 with lr 0.1 lands within 1e-2 of 3."""
    w = ad.Tensor(np.array(0.0))
    opt = Adam({"w": w}, lr=0.1, weight_decay=0.0)
    for _ in range(200):
        tape = ad.Tape()
        with ad.record(tape):
            diff = w - 3.0
            loss = diff * diff
        tape.backward(loss)
        opt.step()
        opt.zero_grad()
    assert abs(float(w.data) - 3.0) < 1e-2


def test_decoupled_weight_decay_shrinks_params_directly():
    p = ad.Tensor(np.array([10.0]))
    p.grad = np.zeros(1)
    opt = Adam({"p": p}, lr=0.1, weight_decay=0.5)
    opt.step()
    assert np.allclose(p.data, 10.0 * (1 - 0.1 * 0.5))


def test_step_counter_and_shape_check():
    p = ad.Tensor(np.zeros(3))
    opt = Adam({"p": p}, lr=0.1)
    p.grad = np.zeros(3)
    opt.step()
    assert opt.step_count == 1
    p.grad = np.zeros(4)
    with pytest.raises(ad.ShapeError):
        opt.step()
