"""Parameter container, initial-value map, checkpoints, batched consistency."""

import numpy as np
import pytest

from cdehawkes import autodiff as ad
from cdehawkes.data import EventSequence, make_batch
from cdehawkes.engine import SolverConfig
from cdehawkes.forward import batch_forward, sequence_forward
from cdehawkes.likelihood import batch_losses, sequence_losses
from cdehawkes.model import (ModelConfig, ModelParams, load_checkpoint, save_checkpoint)


def test_zero_init_layer_maps_to_zero(tiny_params):
    tiny_params["init_w"].data[:] = 0.0
    tiny_params["init_b"].data[:] = 0.0
    z1 = ad.Tensor(np.random.default_rng(0).normal(size=7))  # dim_embed 6 + time
    h = tiny_params.initial_hidden(z1)
    assert np.array_equal(h.data, np.zeros(8))
    seq = EventSequence([1], [0.3])
    res = sequence_forward(tiny_params, seq, SolverConfig(2))
    assert float(res.a_final.data) == 0.0       # accumulator starts at zero, always


def test_initial_hidden_deterministic(tiny_params):
    z1 = ad.Tensor(np.random.default_rng(1).normal(size=7))
    h1 = tiny_params.initial_hidden(z1)
    h2 = tiny_params.initial_hidden(z1)
    assert np.array_equal(h1.data, h2.data)


def test_initial_hidden_dimension_check(tiny_params):
    with pytest.raises(ad.ShapeError):
        tiny_params.initial_hidden(ad.Tensor(np.zeros(6)))  # missing the time channel


def test_field_output_bounded_by_tanh(tiny_params):
    rng = np.random.default_rng(2)
    for _ in range(10):
        out = tiny_params.field(ad.Tensor(rng.normal(size=8) * 5))
        assert out.data.shape == (8, 7)
        assert np.all(np.abs(out.data) < 1.0)


def test_init_is_seed_deterministic():
    cfg = ModelConfig(num_types=3, dim_embed=6, dim_hidden=8, field_layers=3, field_hidden=8)
    a = ModelParams.init(cfg, seed=42)
    b = ModelParams.init(cfg, seed=42)
    c = ModelParams.init(cfg, seed=43)
    for name in a.tensors:
        assert np.array_equal(a[name].data, b[name].data)
    assert any(not np.array_equal(a[name].data, c[name].data) for name in a.tensors)


def test_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(num_types=2, dim_embed=7)   # odd embedding size
    with pytest.raises(ValueError):
        ModelConfig(num_types=2, field_layers=0)


def test_single_layer_field_shape():
    cfg = ModelConfig(num_types=2, dim_embed=4, dim_hidden=5, field_layers=1, field_hidden=3)
    params = ModelParams.init(cfg, seed=0)
    out = params.field(ad.Tensor(np.zeros(5)))
    assert out.data.shape == (5, 5)


def test_checkpoint_roundtrip_bitwise(tmp_path, tiny_params):
    prefix = str(tmp_path / "ckpt")
    save_checkpoint(tiny_params, prefix)
    back = load_checkpoint(prefix)
    assert back.cfg == tiny_params.cfg
    for name in tiny_params.tensors:
        assert np.array_equal(back[name].data, tiny_params[name].data)


def test_batched_forward_matches_per_sequence(tiny_params, synthetic_dataset):
    solver = SolverConfig(3)
    seqs = synthetic_dataset.sequences[:6]
    per_seq = []
    for s in seqs:
        res = sequence_forward(tiny_params, s, solver)
        terms = sequence_losses(s, res.knot_h, res.a_final, tiny_params, 0.8, 0.05)
        per_seq.append([float(terms[k].data) for k in ("log_prob", "type", "time", "total")])
    per_seq = np.array(per_seq)
    batch = make_batch(seqs)
    knot_h, a = batch_forward(tiny_params, batch, solver)
    terms = batch_losses(batch, knot_h, a, tiny_params, 0.8, 0.05)
    batched = np.stack([terms[k].data for k in ("log_prob", "type", "time", "total")], axis=1)
    assert np.max(np.abs(batched - per_seq)) < 1e-9


def test_batched_gradients_match_per_sequence(tiny_params, synthetic_dataset):
    solver = SolverConfig(2)
    seqs = synthetic_dataset.sequences[:3]

    def grads_from(fn):
        for t in tiny_params.tensors.values():
            t.grad = None
        tape = ad.Tape()
        with ad.record(tape):
            out = fn()
        tape.backward(out)
        out_g = {k: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
                 for k, t in tiny_params.tensors.items()}
        for t in tiny_params.tensors.values():
            t.grad = None
        return out_g

    def seq_total():
        acc = ad.constant(0.0)
        for s in seqs:
            res = sequence_forward(tiny_params, s, solver)
            acc = acc + sequence_losses(s, res.knot_h, res.a_final,
                                        tiny_params, 1.0, 0.1)["total"]
        return acc

    def batch_total():
        batch = make_batch(seqs)
        knot_h, a = batch_forward(tiny_params, batch, solver)
        return ad.tensor_sum(batch_losses(batch, knot_h, a, tiny_params, 1.0, 0.1)["total"])

    ga = grads_from(seq_total)
    gb = grads_from(batch_total)
    for name in ga:
        denom = max(np.abs(ga[name]).max(), 1e-9)
        assert np.abs(ga[name] - gb[name]).max() / denom < 1e-8, name


def test_padding_is_bitwise_neutral(tiny_params, synthetic_dataset):
    """Doubling the pad length changes no loss component, bitwise."""
    solver = SolverConfig(2)
    seqs = synthetic_dataset.sequences[:5]
    base = make_batch(seqs)
    padded = make_batch(seqs, pad_to=2 * base.max_len)

    def losses_of(batch):
        knot_h, a = batch_forward(tiny_params, batch, solver)
        terms = batch_losses(batch, knot_h, a, tiny_params, 1.0, 0.01)
        return {k: terms[k].data.copy() for k in ("log_prob", "type", "time", "total")}

    lo = losses_of(base)
    hi = losses_of(padded)
    for k in lo:
        assert np.array_equal(lo[k], hi[k]), f"{k} changed under padding"


def test_padded_gradients_are_bitwise_neutral(tiny_params, synthetic_dataset):
    solver = SolverConfig(2)
    seqs = synthetic_dataset.sequences[:4]

    def grad_of(batch):
        for t in tiny_params.tensors.values():
            t.grad = None
        tape = ad.Tape()
        with ad.record(tape):
            knot_h, a = batch_forward(tiny_params, batch, solver)
            out = ad.tensor_sum(batch_losses(batch, knot_h, a, tiny_params, 1.0, 0.01)["total"])
        tape.backward(out)
        gs = {k: t.grad.copy() for k, t in tiny_params.tensors.items() if t.grad is not None}
        for t in tiny_params.tensors.values():
            t.grad = None
        return gs

    base = grad_of(make_batch(seqs))
    padded = grad_of(make_batch(seqs, pad_to=2 * make_batch(seqs).max_len))
    assert base.keys() == padded.keys()
    for k in base:
        assert np.array_equal(base[k], padded[k]), k
