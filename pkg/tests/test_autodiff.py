"""Autodiff engine: values, finite-difference gradient checks, determinism."""

import numpy as np
import pytest

from cdehawkes import autodiff as ad

from util import finite_diff_grads, rel_err, tape_grads


def _check_grads(tensors, forward_fn, tol=1e-5, step=1e-6):
    analytic = tape_grads(tensors, forward_fn)
    numeric = finite_diff_grads(tensors, lambda: float(forward_fn().data), step=step)
    for name in tensors:
        err = rel_err(analytic[name], numeric[name])
        assert err.max() < tol, f"{name}: max rel err {err.max():.2e}"


def test_matmul_value():
    out = ad.matmul(ad.Tensor([[1.0, 2.0], [3.0, 4.0]]), ad.Tensor([[1.0], [1.0]]))
    assert np.array_equal(out.data, [[3.0], [7.0]])


def test_add_identity():
    x = ad.Tensor(np.arange(6.0).reshape(2, 3))
    out = ad.add(x, ad.Tensor(np.zeros((2, 3))))
    assert np.array_equal(out.data, x.data)


def test_shape_mismatch_is_descriptive():
    with pytest.raises(ad.ShapeError, match="matmul"):
        ad.matmul(ad.Tensor(np.ones((2, 3))), ad.Tensor(np.ones((2, 3))))
    with pytest.raises(ad.ShapeError, match="add"):
        ad.add(ad.Tensor(np.ones(3)), ad.Tensor(np.ones(4)))


def test_matmul_sum_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    W = ad.Tensor(rng.normal(size=(3, 2)))
    x = ad.Tensor(np.array([1.0, 1.0]))
    _check_grads({"W": W}, lambda: ad.tensor_sum(ad.matmul(W, x)))


@pytest.mark.parametrize("trial", range(5))
def test_primitive_gradients_random_tensors(trial):
    """Every differentiable primitive vs central differences on random inputs."""
    rng = np.random.default_rng(100 + trial)
    a = ad.Tensor(rng.normal(size=(4, 3)))
    b = ad.Tensor(rng.normal(size=(4, 3)))
    w = ad.Tensor(rng.normal(size=(3, 5)))
    v = ad.Tensor(rng.normal(size=(4,)))
    beta = ad.Tensor(rng.uniform(0.5, 2.0, size=3))

    cases = {
        "add": ({"a": a, "b": b}, lambda: ad.tensor_sum(ad.mul(a + b, a + b))),
        "sub_mul": ({"a": a, "b": b}, lambda: ad.tensor_sum(ad.mul(a - b, b))),
        "matmul": ({"a": a, "w": w}, lambda: ad.tensor_sum(ad.mul(a @ w, a @ w))),
        "linear": ({"a": a, "w": w}, lambda: ad.tensor_sum(ad.elu(ad.linear(a, w, ad.Tensor(np.zeros(5)))))),
        "elu": ({"a": a}, lambda: ad.tensor_sum(ad.elu(a))),
        "tanh": ({"a": a}, lambda: ad.tensor_sum(ad.mul(ad.tanh(a), v.reshape(4, 1)))),
        "softmax": ({"a": a}, lambda: ad.tensor_sum(ad.mul(ad.softmax(a), b))),
        "log_softmax": ({"a": a}, lambda: ad.tensor_sum(ad.mul(ad.log_softmax(a), b))),
        "exp": ({"v": v}, lambda: ad.tensor_sum(ad.exp(v))),
        "softplus_beta": ({"a": a, "beta": beta},
                          lambda: ad.tensor_sum(ad.softplus_beta(a, beta))),
        "concat_slice": ({"a": a, "b": b},
                         lambda: ad.tensor_sum(ad.mul(ad.concat([a, b], axis=1)[:, 2:5], a))),
        "sum_axis": ({"a": a}, lambda: ad.tensor_sum(ad.mul(ad.tensor_sum(a, axis=1), v))),
        "take_rows": ({"a": a}, lambda: ad.tensor_sum(ad.mul(ad.take_rows(a, [0, 2, 2]),
                                                             ad.Tensor(np.ones((3, 3)))))),
    }
    for name, (tensors, fn) in cases.items():
        analytic = tape_grads(tensors, fn)
        numeric = finite_diff_grads(tensors, lambda: float(fn().data))
        for pname in tensors:
            err = rel_err(analytic[pname], numeric[pname])
            assert err.max() < 1e-5, f"{name}/{pname}: {err.max():.2e}"


def test_fused_ops_gradients():
    rng = np.random.default_rng(7)
    h = ad.Tensor(rng.normal(size=(4, 5)))
    vec = ad.Tensor(rng.normal(size=(4, 3)))
    w0 = ad.Tensor(rng.normal(size=(5, 6)))
    b0 = ad.Tensor(rng.normal(size=6))
    w1 = ad.Tensor(rng.normal(size=(6, 5 * 3)))
    b1 = ad.Tensor(rng.normal(size=5 * 3))
    wi = ad.Tensor(rng.normal(size=(5, 4)))
    beta = ad.Tensor(rng.uniform(0.5, 2.0, size=4))
    tensors = {"h": h, "vec": vec, "w0": w0, "b0": b0, "w1": w1, "b1": b1,
               "wi": wi, "beta": beta}

    def fn():
        m = ad.mlp_tanh_matvec(h, vec, [w0, w1], [b0, b1], 5)
        lam = ad.intensity_total(ad.axpy(h, m, 0.3), wi, beta)
        y = ad.rk4_combine(lam, lam, lam, lam, lam, 0.25)
        return ad.tensor_sum(ad.mul(y, y))

    _check_grads(tensors, fn, tol=2e-5)


def test_fused_mlp_matches_unfused():
    rng = np.random.default_rng(8)
    h = ad.Tensor(rng.normal(size=(4, 5)))
    vec = ad.Tensor(rng.normal(size=(4, 3)))
    ws = [ad.Tensor(rng.normal(size=(5, 6))), ad.Tensor(rng.normal(size=(6, 15)))]
    bs = [ad.Tensor(rng.normal(size=6)), ad.Tensor(rng.normal(size=15))]
    fused = ad.mlp_tanh_matvec(h, vec, ws, bs, 5)
    x = ad.tanh(ad.linear(ad.elu(ad.linear(h, ws[0], bs[0])), ws[1], bs[1]))
    unfused = ad.rowwise_matvec(x, vec, 5)
    assert np.allclose(fused.data, unfused.data, atol=1e-14)


def test_elu_tanh_softmax_values():
    assert ad.elu(ad.Tensor(0.0)).data == 0.0
    assert ad.tanh(ad.Tensor(0.0)).data == 0.0
    out = ad.softmax(ad.Tensor([3.3, 3.3, 3.3, 3.3]))
    assert np.allclose(out.data, 0.25)
    rng = np.random.default_rng(1)
    rows = ad.softmax(ad.Tensor(rng.normal(size=(5, 7)) * 10))
    assert np.allclose(rows.data.sum(axis=1), 1.0, atol=1e-12)


def test_elu_gradient_at_minus_one():
    x = ad.Tensor(-1.0)
    tape = ad.Tape()
    with ad.record(tape):
        y = ad.elu(x)
    tape.backward(y)
    assert abs(x.grad - np.exp(-1.0)) < 1e-12
    numeric = finite_diff_grads({"x": x}, lambda: float(ad.elu(x).data))
    assert rel_err(x.grad, numeric["x"]).max() < 1e-6


def test_softplus_beta_values():
    assert abs(ad.softplus_beta(ad.Tensor(0.0), ad.Tensor(1.0)).data - np.log(2.0)) < 1e-15
    assert abs(ad.softplus_beta(ad.Tensor(0.0), ad.Tensor(2.0)).data - 2.0 * np.log(2.0)) < 1e-15
    big = ad.softplus_beta(ad.Tensor(100.0), ad.Tensor(1.0)).data
    assert abs(big - 100.0) / 100.0 < 1e-12
    # no overflow far beyond float range of exp
    assert np.isfinite(ad.softplus_beta(ad.Tensor(5000.0), ad.Tensor(1.0)).data)


def test_softplus_beta_positive_everywhere():
    rng = np.random.default_rng(2)
    x = ad.Tensor(rng.normal(size=200) * 50)
    for beta in (0.1, 1.0, 7.5):
        out = ad.softplus_beta(x, ad.Tensor(beta))
        assert np.all(out.data > 0.0)


def test_activation_lipschitz_bound():
    """Max |derivative| of Tanh and ELU on a dense grid stays within 1."""
    grid = ad.Tensor(np.linspace(-10.0, 10.0, 200001))
    for act in (ad.tanh, ad.elu):
        tape = ad.Tape()
        x = ad.Tensor(grid.data.copy())
        with ad.record(tape):
            y = ad.tensor_sum(act(x))
        tape.backward(y)
        assert np.abs(x.grad).max() <= 1.0 + 1e-12


def test_backward_deterministic_bitwise():
    rng = np.random.default_rng(3)
    w = ad.Tensor(rng.normal(size=(6, 6)))
    x = ad.Tensor(rng.normal(size=(6, 6)))
    tape = ad.Tape()
    with ad.record(tape):
        y = ad.tensor_sum(ad.softmax(ad.tanh(x @ w) @ w))
    tape.backward(y)
    first = {id(t): t.grad.copy() for t in (w, x)}
    for t in (w, x):
        t.grad = None
    y.grad = None
    for node in tape.nodes:
        node.grad = None
    tape.backward(y)
    assert np.array_equal(first[id(w)], w.grad)
    assert np.array_equal(first[id(x)], x.grad)


def test_checked_mode_flags_nonfinite():
    ad.set_checked(True)
    try:
        with np.errstate(divide="ignore"):
            with pytest.raises(ad.NonFiniteError):
                ad.log(ad.Tensor(np.array([0.0])))
    finally:
        ad.set_checked(False)


def test_no_grad_skips_recording():
    tape = ad.Tape()
    with ad.record(tape):
        with ad.no_grad():
            _ = ad.tanh(ad.Tensor(1.0))
        assert len(tape) == 0
        _ = ad.tanh(ad.Tensor(1.0))
        assert len(tape) == 1
