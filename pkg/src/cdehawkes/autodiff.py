"""Reverse-mode automatic differentiation on dense float64 tensors.

Define-by-run: operations executed while a tape is active are recorded in
creation order (which is a valid topological order), and the backward pass
walks the tape once in reverse.  Everything is float64; the likelihood
integral accumulates over hundreds of solver steps and float32 drift would
contaminate gradient checks.

Besides the generic primitives there are a few fused ops (linear, axpy,
rk4_combine, intensity_total) that collapse the solver's innermost
arithmetic into single nodes; a training iteration records a few thousand
nodes and per-node Python overhead is what bounds throughput.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np


class ShapeError(ValueError):
    """Operands have incompatible shapes."""


class NonFiniteError(FloatingPointError):
    """A NaN or Inf appeared while checked mode was on."""


_TAPE = None          # currently recording Tape, or None
_CHECK_FINITE = False


def set_checked(flag: bool) -> None:
    """Enable/disable NaN/Inf detection on every produced value."""
    global _CHECK_FINITE
    _CHECK_FINITE = bool(flag)


class Tensor:
    """A dense float64 array plus a gradient slot.

    Leaf tensors (parameters, constants) are created directly; interior
    tensors are produced by ops and carry a backward closure while their
    tape is alive.
    """

    __slots__ = ("data", "grad", "_bw")

    def __init__(self, data):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self._bw = None

    @classmethod
    def _raw(cls, data: np.ndarray) -> "Tensor":
        t = cls.__new__(cls)
        t.data = data
        t.grad = None
        t._bw = None
        return t

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"

    # operator sugar; all dispatch to the module-level ops
    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __truediv__(self, c):
        if isinstance(c, Tensor):
            raise TypeError("tensor/tensor division is not a recorded op; multiply by a reciprocal constant")
        return mul(self, _wrap(1.0 / float(c)))

    def __neg__(self):
        return mul(self, _wrap(-1.0))

    def __matmul__(self, other):
        return matmul(self, _wrap(other))

    def __getitem__(self, key):
        return getitem(self, key)

    def sum(self, axis=None):
        return tensor_sum(self, axis=axis)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def item(self) -> float:
        return float(self.data)


class Tape:
    """Recorded computation graph: nodes in topological (creation) order."""

    __slots__ = ("nodes",)

    def __init__(self):
        self.nodes = []

    def __len__(self):
        return len(self.nodes)

    def backward(self, out: Tensor, seed=None) -> None:
        """Accumulate d(out)/d(leaf) into .grad of every reachable tensor.

        Deterministic: one reverse sweep of the tape in fixed order, so two
        passes over the same tape produce bitwise-identical gradients.
        """
        if seed is None:
            if out.data.shape != ():
                raise ShapeError("backward() needs a scalar output or an explicit seed")
            seed = np.ones((), dtype=np.float64)
        _accum(out, np.asarray(seed, dtype=np.float64))
        for node in reversed(self.nodes):
            if node.grad is not None and node._bw is not None:
                node._bw(node.grad)


@contextmanager
def record(tape: Tape):
    """Make ``tape`` the active recording target within the block."""
    global _TAPE
    prev = _TAPE
    _TAPE = tape
    try:
        yield tape
    finally:
        _TAPE = prev


@contextmanager
def no_grad():
    """Run ops without recording; values only."""
    global _TAPE
    prev = _TAPE
    _TAPE = None
    try:
        yield
    finally:
        _TAPE = prev


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def constant(x) -> Tensor:
    """A tensor leaf holding fixed data."""
    return _wrap(x)


def _accum(t: Tensor, g) -> None:
    if t.grad is None:
        t.grad = np.zeros(t.data.shape, dtype=np.float64)
    t.grad += g


def _out(data, bw) -> Tensor:
    if _CHECK_FINITE and not np.all(np.isfinite(data)):
        raise NonFiniteError("non-finite value produced by a primitive op")
    out = Tensor._raw(np.asarray(data, dtype=np.float64))
    out._bw = bw
    _TAPE.nodes.append(out)
    return out


def _value(data) -> Tensor:
    if _CHECK_FINITE and not np.all(np.isfinite(data)):
        raise NonFiniteError("non-finite value produced by a primitive op")
    return Tensor._raw(np.asarray(data, dtype=np.float64))


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# arithmetic primitives


def add(a: Tensor, b: Tensor) -> Tensor:
    try:
        data = a.data + b.data
    except ValueError as e:
        raise ShapeError(f"add: cannot broadcast {a.shape} with {b.shape}") from e
    if _TAPE is None:
        return _value(data)

    def bw(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    return _out(data, bw)


def sub(a: Tensor, b: Tensor) -> Tensor:
    try:
        data = a.data - b.data
    except ValueError as e:
        raise ShapeError(f"sub: cannot broadcast {a.shape} with {b.shape}") from e
    if _TAPE is None:
        return _value(data)

    def bw(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(-g, b.data.shape))

    return _out(data, bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    try:
        data = a.data * b.data
    except ValueError as e:
        raise ShapeError(f"mul: cannot broadcast {a.shape} with {b.shape}") from e
    if _TAPE is None:
        return _value(data)

    def bw(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return _out(data, bw)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    ad_, bd = a.data, b.data
    if ad_.ndim == 0 or bd.ndim == 0 or ad_.shape[-1] != bd.shape[0]:
        raise ShapeError(f"matmul: inner dimensions of {ad_.shape} and {bd.shape} do not agree")
    data = ad_ @ bd
    if _TAPE is None:
        return _value(data)

    def bw(g):
        if ad_.ndim == 2 and bd.ndim == 2:
            _accum(a, g @ bd.T)
            _accum(b, ad_.T @ g)
        elif ad_.ndim == 1 and bd.ndim == 2:
            _accum(a, bd @ g)
            _accum(b, np.outer(ad_, g))
        elif ad_.ndim == 2 and bd.ndim == 1:
            _accum(a, np.outer(g, bd))
            _accum(b, ad_.T @ g)
        else:  # 1D @ 1D -> scalar
            _accum(a, g * bd)
            _accum(b, g * ad_)

    return _out(data, bw)


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Fused x @ w + bias; one node instead of two on the solver's hot path."""
    xd, wd = x.data, w.data
    if xd.shape[-1] != wd.shape[0]:
        raise ShapeError(f"linear: input {xd.shape} does not match weight {wd.shape}")
    data = xd @ wd + b.data
    if _TAPE is None:
        return _value(data)

    def bw(g):
        if xd.ndim == 2:
            _accum(x, g @ wd.T)
            _accum(w, xd.T @ g)
            _accum(b, g.sum(axis=0))
        else:
            _accum(x, wd @ g)
            _accum(w, np.outer(xd, g))
            _accum(b, g)

    return _out(data, bw)


def axpy(y: Tensor, x: Tensor, c: float) -> Tensor:
    """Fused y + c * x with a scalar constant."""
    data = y.data + c * x.data
    if _TAPE is None:
        return _value(data)

    def bw(g):
        _accum(y, g)
        _accum(x, c * g)

    return _out(data, bw)


def rk4_combine(y: Tensor, k1: Tensor, k2: Tensor, k3: Tensor, k4: Tensor, c) -> Tensor:
    """Fused y + c * (k1 + 2*k2 + 2*k3 + k4); c is a scalar or a per-row
    constant column (the step size over 6)."""
    c = np.asarray(c, dtype=np.float64)
    data = y.data + c * (k1.data + 2.0 * k2.data + 2.0 * k3.data + k4.data)
    if _TAPE is None:
        return _value(data)

    def bw(g):
        gc = g * c
        _accum(y, g)
        _accum(k1, gc)
        _accum(k2, 2.0 * gc)
        _accum(k3, 2.0 * gc)
        _accum(k4, gc)

    return _out(data, bw)


def tensor_sum(x: Tensor, axis=None) -> Tensor:
    data = x.data.sum(axis=axis)
    if _TAPE is None:
        return _value(data)

    def bw(g):
        if axis is None:
            _accum(x, np.broadcast_to(g, x.data.shape))
        else:
            _accum(x, np.broadcast_to(np.expand_dims(g, axis), x.data.shape))

    return _out(data, bw)


def concat(parts, axis=0) -> Tensor:
    parts = [_wrap(p) for p in parts]
    data = np.concatenate([p.data for p in parts], axis=axis)
    if _TAPE is None:
        return _value(data)
    sizes = [p.data.shape[axis] for p in parts]

    def bw(g):
        off = 0
        for p, n in zip(parts, sizes):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(off, off + n)
            _accum(p, g[tuple(idx)])
            off += n

    return _out(data, bw)


def getitem(x: Tensor, key) -> Tensor:
    data = np.asarray(x.data[key], dtype=np.float64)
    if _TAPE is None:
        return _value(data)

    def bw(g):
        buf = np.zeros(x.data.shape, dtype=np.float64)
        buf[key] = g
        _accum(x, buf)

    return _out(data, bw)


def reshape(x: Tensor, shape) -> Tensor:
    data = x.data.reshape(shape)
    if _TAPE is None:
        return _value(data)

    def bw(g):
        _accum(x, g.reshape(x.data.shape))

    return _out(data, bw)


def take_rows(table: Tensor, idx) -> Tensor:
    """Gather rows of a 2-D table; gradient scatters back into those rows only."""
    idx = np.asarray(idx, dtype=np.intp)
    data = table.data[idx]
    if _TAPE is None:
        return _value(data)

    def bw(g):
        buf = np.zeros(table.data.shape, dtype=np.float64)
        np.add.at(buf, idx, g)
        _accum(table, buf)

    return _out(data, bw)


def rowwise_matvec(flat: Tensor, vec: Tensor, out_dim: int) -> Tensor:
    """Per-row matrix @ vector: row i of ``flat`` reshaped (out_dim, q) times row i of ``vec``.

    Applies the CDE field output (a matrix per batch row) to the control-path
    increment without materializing 3-D tensors elsewhere.
    """
    n, q = vec.data.shape
    f3 = flat.data.reshape(n, out_dim, q)
    data = (f3 @ vec.data[:, :, None])[:, :, 0]
    if _TAPE is None:
        return _value(data)

    def bw(g):
        _accum(flat, (g[:, :, None] @ vec.data[:, None, :]).reshape(n, out_dim * q))
        _accum(vec, (f3.transpose(0, 2, 1) @ g[:, :, None])[:, :, 0])

    return _out(data, bw)


# ---------------------------------------------------------------------------
# nonlinearities


def elu(x: Tensor) -> Tensor:
    xd = x.data
    e = np.exp(np.minimum(xd, 0.0))  # exp(0)=1 on the non-negative branch, never overflows
    data = np.where(xd >= 0.0, xd, e - 1.0)
    if _TAPE is None:
        return _value(data)
    deriv = np.where(xd >= 0.0, 1.0, e)

    def bw(g):
        _accum(x, g * deriv)

    return _out(data, bw)


def tanh(x: Tensor) -> Tensor:
    data = np.tanh(x.data)
    if _TAPE is None:
        return _value(data)

    def bw(g):
        _accum(x, g * (1.0 - data * data))

    return _out(data, bw)


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis; rows sum to 1."""
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=-1, keepdims=True)
    if _TAPE is None:
        return _value(data)

    def bw(g):
        dot = (g * data).sum(axis=-1, keepdims=True)
        _accum(x, data * (g - dot))

    return _out(data, bw)


def log_softmax(x: Tensor) -> Tensor:
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    data = shifted - lse
    if _TAPE is None:
        return _value(data)
    sm = np.exp(data)

    def bw(g):
        _accum(x, g - sm * g.sum(axis=-1, keepdims=True))

    return _out(data, bw)


def log(x: Tensor) -> Tensor:
    data = np.log(x.data)
    if _TAPE is None:
        return _value(data)

    def bw(g):
        _accum(x, g / x.data)

    return _out(data, bw)


def exp(x: Tensor) -> Tensor:
    data = np.exp(x.data)
    if _TAPE is None:
        return _value(data)

    def bw(g):
        _accum(x, g * data)

    return _out(data, bw)


_TINY = np.finfo(np.float64).tiny


def _softplus_pieces(xd: np.ndarray, bd: np.ndarray):
    u = xd / bd
    e = np.exp(-np.abs(u))
    l1p = np.log1p(e)
    # floor at the smallest normal: the true value underflows for u < -745
    # but the output contract is strict positivity (logs of it must be finite)
    val = np.maximum(np.where(u > 0.0, xd + bd * l1p, bd * l1p), _TINY)
    sig = np.where(u >= 0.0, 1.0 / (1.0 + e), e / (1.0 + e))   # sigmoid(u)
    dbeta = np.where(u > 0.0, u + l1p, l1p) - u * sig          # log(1+exp(u)) - u*sigmoid(u)
    return val, sig, dbeta


def softplus_beta(x: Tensor, beta: Tensor) -> Tensor:
    """Scaled softplus beta*log(1+exp(x/beta)); strictly positive for beta > 0.

    Overflow-safe via the identity beta*log(1+exp(x/beta)) =
    x + beta*log(1+exp(-x/beta)) on the positive branch.  Differentiable in
    both the input and the scale.
    """
    beta = _wrap(beta)
    data, sig, dbeta = _softplus_pieces(x.data, beta.data)
    if _TAPE is None:
        return _value(data)

    def bw(g):
        _accum(x, _unbroadcast(g * sig, x.data.shape))
        _accum(beta, _unbroadcast(g * dbeta, beta.data.shape))

    return _out(data, bw)


def mlp_tanh_matvec(h: Tensor, vec: Tensor, weights: list, biases: list,
                    out_dim: int) -> Tensor:
    """Fused CDE-field application: dense stack (ELU between layers, Tanh after
    the last) reshaped to a per-row matrix and applied to ``vec``.

    h: (dh,) or (S, dh); vec: matching (C,) or (S, C).  Returns (out_dim,) or
    (S, out_dim).  One tape node for the whole chain; the backward closure
    replays the chain rule in plain numpy, which is what keeps the solver's
    inner loop fast.
    """
    hd = h.data
    batched = hd.ndim == 2
    pre = []    # pre-activation of each layer
    xs = [hd]   # layer inputs
    x = hd
    n_layers = len(weights)
    for m in range(n_layers):
        s = x @ weights[m].data + biases[m].data
        pre.append(s)
        if m < n_layers - 1:
            e = np.exp(np.minimum(s, 0.0))
            x = np.where(s >= 0.0, s, e - 1.0)
        else:
            x = np.tanh(s)
        xs.append(x)
    y = x                                   # (..., out_dim * C)
    vd = vec.data
    if batched:
        n = hd.shape[0]
        f3 = y.reshape(n, out_dim, vd.shape[-1])
        data = (f3 @ vd[:, :, None])[:, :, 0]
    else:
        f3 = y.reshape(out_dim, vd.shape[-1])
        data = f3 @ vd
    if _TAPE is None:
        return _value(data)

    def bw(g):
        if batched:
            gy = (g[:, :, None] @ vd[:, None, :]).reshape(n, -1)
            _accum(vec, (f3.transpose(0, 2, 1) @ g[:, :, None])[:, :, 0])
        else:
            gy = np.outer(g, vd).reshape(-1)
            _accum(vec, f3.T @ g)
        gx = gy
        for m in range(n_layers - 1, -1, -1):
            s = pre[m]
            if m < n_layers - 1:
                e = np.exp(np.minimum(s, 0.0))
                gs = gx * np.where(s >= 0.0, 1.0, e)
            else:
                t = xs[m + 1]
                gs = gx * (1.0 - t * t)
            xin = xs[m]
            if batched:
                _accum(weights[m], xin.T @ gs)
                _accum(biases[m], gs.sum(axis=0))
            else:
                _accum(weights[m], np.outer(xin, gs))
                _accum(biases[m], gs)
            gx = gs @ weights[m].data.T
        _accum(h, gx)

    return _out(data, bw)


def intensity_total(h: Tensor, w: Tensor, beta: Tensor) -> Tensor:
    """Fused total intensity: softplus_beta(h @ w, beta) summed over types.

    One node for the solver's accumulator integrand; h is (dh,) or (S, dh),
    w is (dh, K), beta is (K,).
    """
    hd, wd = h.data, w.data
    s = hd @ wd
    val, sig, dbeta = _softplus_pieces(s, beta.data)
    data = val.sum(axis=-1)
    if _TAPE is None:
        return _value(data)

    def bw(g):
        gl = np.expand_dims(g, -1) * sig     # d total / d s
        if hd.ndim == 2:
            _accum(h, gl @ wd.T)
            _accum(w, hd.T @ gl)
        else:
            _accum(h, wd @ gl)
            _accum(w, np.outer(hd, gl))
        _accum(beta, _unbroadcast(np.expand_dims(g, -1) * dbeta, beta.data.shape))

    return _out(data, bw)
