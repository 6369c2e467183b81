import math
import struct

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import layer_cases, max_rel_error
from tactile_compliance.errors import HeadDivisibility, LengthMismatch, ShapeMismatch, UninitializedGradients
from tactile_compliance.nn import (
    ConvBlock,
    Dense,
    EncoderLayer,
    LayerNorm,
    LossConfig,
    LSTMCell,
    MultiHeadSelfAttention,
    ParamStore,
    adam_step,
    grad_check,
    mse_l2_loss,
)
from tactile_compliance.nn import checkpoint


def gen(seed=0):
    return torch.Generator().manual_seed(seed)


def set_(param, value):
    with torch.no_grad():
        param.copy_(torch.as_tensor(value, dtype=param.dtype))


# -- conv ------------------------------------------------------------------


def test_conv_identity_kernel_is_relu():
    conv = ConvBlock(1, 1, kernel_size=1, pool=False)
    set_(conv.weight, torch.ones(1, 1, 1, 1))
    x = torch.randn(2, 1, 4, 4, generator=gen())
    assert torch.equal(conv(x), torch.relu(x))


def test_conv_zero_params():
    conv = ConvBlock(3, 4, gen=gen())
    set_(conv.weight, torch.zeros_like(conv.weight))
    assert torch.count_nonzero(conv(torch.randn(1, 3, 6, 6, generator=gen()))) == 0


def test_conv_matches_sliding_window():
    conv = ConvBlock(1, 1, kernel_size=3, padding=0, pool=False, gen=gen(1))
    set_(conv.bias, [0.1])
    x = torch.randn(1, 1, 5, 5, generator=gen(2))
    y = conv(x)
    w = conv.weight[0, 0].detach().numpy()
    xn = x[0, 0].numpy()
    for i in range(3):
        for j in range(3):
            ref = max(0.0, float(np.sum(xn[i : i + 3, j : j + 3] * w)) + 0.1)
            assert y[0, 0, i, j].item() == pytest.approx(ref, abs=1e-6)


def test_conv_pool_and_shape_errors():
    conv = ConvBlock(2, 3, gen=gen())
    assert conv(torch.rand(1, 2, 8, 8)).shape == (1, 3, 4, 4)
    with pytest.raises(ShapeMismatch):
        conv(torch.rand(1, 3, 8, 8))
    with pytest.raises(ShapeMismatch):
        ConvBlock(1, 1, kernel_size=5, padding=0)(torch.rand(1, 1, 3, 3))


# -- dense -----------------------------------------------------------------


def test_dense_identity_and_sum():
    d = Dense(4, 4)
    set_(d.weight, torch.eye(4))
    x = torch.randn(3, 4, generator=gen())
    assert torch.equal(d(x), x)
    s = Dense(5, 2)
    set_(s.weight, torch.ones(2, 5))
    set_(s.bias, [0.5, -1.0])
    assert s(torch.ones(1, 5)).tolist() == [[5.5, 4.0]]


def test_dense_matches_naive_matmul():
    d = Dense(6, 3, gen=gen(3))
    set_(d.bias, [0.1, 0.2, 0.3])
    x = torch.randn(4, 6, generator=gen(4))
    w, b = d.weight.detach(), d.bias.detach()
    ref = [[sum(x[n, k].item() * w[o, k].item() for k in range(6)) + b[o].item() for o in range(3)] for n in range(4)]
    np.testing.assert_allclose(d(x).detach().numpy(), ref, atol=1e-6)


def test_dense_errors():
    with pytest.raises(ValueError):
        Dense(2, 2, "swish")
    with pytest.raises(ShapeMismatch):
        Dense(2, 2)(torch.zeros(1, 3))


# -- lstm ------------------------------------------------------------------


def test_lstm_zero_params():
    cell = LSTMCell(3, 4)
    set_(cell.weight, torch.zeros_like(cell.weight))
    h, c = cell(torch.randn(2, 3, generator=gen()), *cell.initial_state(2))
    assert torch.count_nonzero(h) == 0 and torch.count_nonzero(c) == 0


def test_lstm_memory_passthrough():
    cell = LSTMCell(2, 3, gen=gen())
    set_(cell.weight, torch.zeros_like(cell.weight))
    bias = torch.zeros(12)
    bias[0:3] = -50.0  # input gate closed
    bias[3:6] = 50.0  # forget gate open
    set_(cell.bias, bias)
    c_prev = torch.tensor([[0.3, -0.7, 1.2]])
    _, c = cell(torch.randn(1, 2, generator=gen()), torch.zeros(1, 3), c_prev)
    assert torch.allclose(c, c_prev, atol=1e-3)


def _reference_lstm(x, h, c, w, b, n):
    sig = lambda v: 1 / (1 + np.exp(-v))  # noqa: E731
    z = np.concatenate([x, h]) @ w.T + b
    i, f, o, g = sig(z[:n]), sig(z[n : 2 * n]), sig(z[2 * n : 3 * n]), np.tanh(z[3 * n :])
    c2 = f * c + i * g
    return o * np.tanh(c2), c2


def test_lstm_matches_reference():
    cell = LSTMCell(3, 2, gen=gen(5))
    set_(cell.bias, torch.linspace(-0.5, 0.5, 8))
    x, h, c = (torch.randn(1, n, generator=gen(k)) for k, n in ((6, 3), (7, 2), (8, 2)))
    h2, c2 = cell(x, h, c)
    rh, rc = _reference_lstm(x[0].numpy(), h[0].numpy(), c[0].numpy(), cell.weight.detach().numpy(), cell.bias.detach().numpy(), 2)
    np.testing.assert_allclose(h2[0].detach().numpy(), rh, atol=1e-6)
    np.testing.assert_allclose(c2[0].detach().numpy(), rc, atol=1e-6)


def test_lstm_shape_error():
    with pytest.raises(ShapeMismatch):
        LSTMCell(3, 2)(torch.zeros(1, 3), torch.zeros(1, 3), torch.zeros(1, 3))


# -- attention -------------------------------------------------------------


def _identity_attention(dim, heads=1):
    att = MultiHeadSelfAttention(dim, heads)
    for w in (att.w_q, att.w_k, att.w_v, att.w_o):
        set_(w, torch.eye(dim))
    return att


def test_attention_hand_case():
    att = _identity_attention(2)
    x = torch.tensor([[1.0, 0.0], [0.0, 1.0]])
    p = math.exp(1 / math.sqrt(2)) / (math.exp(1 / math.sqrt(2)) + 1)
    expected = [[p, 1 - p], [1 - p, p]]
    np.testing.assert_allclose(att(x).detach().numpy(), expected, atol=1e-6)


def test_attention_single_token():
    att = MultiHeadSelfAttention(4, 2, gen=gen())
    x = torch.randn(1, 4, generator=gen(1))
    out = att(x)
    assert torch.allclose(att.last_weights, torch.ones(1, 2, 1, 1))
    value_path = (x @ att.w_v.T + att.b_v) @ att.w_o.T + att.b_o
    assert torch.allclose(out, value_path, atol=1e-6)


def test_attention_identical_tokens():
    att = MultiHeadSelfAttention(4, 2, gen=gen())
    row = torch.randn(1, 4, generator=gen(2))
    out = att(row.repeat(3, 1))
    assert torch.allclose(out[0], out[1]) and torch.allclose(out[1], out[2])


def test_attention_head_divisibility():
    with pytest.raises(HeadDivisibility):
        MultiHeadSelfAttention(6, 4)
    with pytest.raises(ShapeMismatch):
        MultiHeadSelfAttention(4, 2)(torch.zeros(2, 3))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([1, 2, 4]), st.integers(1, 5))
def test_attention_permutation_equivariant(seed, heads, t):
    layer = EncoderLayer(8, heads, 16, gen=gen(seed))
    x = torch.randn(t, 8, generator=gen(seed + 1), dtype=torch.float32)
    perm = torch.randperm(t, generator=gen(seed + 2))
    assert torch.allclose(layer(x)[perm], layer(x[perm]), atol=1e-5)


def test_layer_norm_statistics():
    ln = LayerNorm(6)
    y = ln(torch.randn(5, 6, generator=gen()) * 3 + 2)
    assert torch.allclose(y.mean(-1), torch.zeros(5), atol=1e-6)
    assert torch.allclose(y.var(-1, unbiased=False), torch.ones(5), atol=1e-3)


# -- loss and optimizer ----------------------------------------------------


def test_loss_examples():
    cfg0 = LossConfig(0.0)
    t = torch.tensor([0.3, 0.7])
    assert mse_l2_loss(t, t.clone(), [], cfg0).item() == 0.0
    assert mse_l2_loss(torch.ones(2), torch.zeros(2), [], cfg0).item() == 1.0
    p = torch.tensor([2.0])
    assert mse_l2_loss(t, t.clone(), [p], LossConfig(0.1)).item() == pytest.approx(0.4)


def test_loss_errors():
    with pytest.raises(LengthMismatch):
        mse_l2_loss(torch.zeros(2), torch.zeros(3), [], LossConfig())
    with pytest.raises(LengthMismatch):
        mse_l2_loss(torch.zeros(0), torch.zeros(0), [], LossConfig())
    with pytest.raises(ValueError):
        LossConfig(-1.0)


def _single_param_store(value, grad):
    mod = torch.nn.Module()
    mod.p = torch.nn.Parameter(torch.tensor(value, dtype=torch.float64))
    mod.p.grad = torch.tensor(grad, dtype=torch.float64)
    return ParamStore(mod)


def test_adam_zero_gradient():
    store = _single_param_store([1.0, -2.0], [0.0, 0.0])
    adam_step(store, lr=0.1)
    assert store.params["p"].tolist() == [1.0, -2.0]


def test_adam_hand_step():
    store = _single_param_store([1.0], [0.5])
    store.m["p"].fill_(0.2)
    store.v["p"].fill_(0.04)
    store.step = 3
    lr, b1, b2, eps = 0.01, 0.9, 0.999, 1e-8
    m = b1 * 0.2 + (1 - b1) * 0.5
    v = b2 * 0.04 + (1 - b2) * 0.25
    expected = 1.0 - lr * (m / (1 - b1**4)) / (math.sqrt(v / (1 - b2**4)) + eps)
    adam_step(store, lr, b1, b2, eps)
    assert store.params["p"].item() == pytest.approx(expected, rel=1e-12)
    assert store.step == 4


def test_adam_constant_gradient_step_size():
    store = _single_param_store([0.0], [-3.0])
    for _ in range(200):
        before = store.params["p"].item()
        adam_step(store, lr=0.01)
    assert store.params["p"].item() - before == pytest.approx(0.01, rel=1e-3)


def test_adam_requires_gradients():
    mod = torch.nn.Linear(2, 2)
    with pytest.raises(UninitializedGradients):
        adam_step(ParamStore(mod))


def test_param_store_state_roundtrip():
    mod = Dense(3, 2, gen=gen())
    store = ParamStore(mod)
    saved = store.state_dict()
    set_(mod.weight, torch.zeros(2, 3))
    store.load_state_dict(saved)
    assert torch.equal(mod.weight, saved["weight"])
    assert len(store) == 2


# -- gradient checking -----------------------------------------------------


def test_grad_check_quadratic():
    x = torch.ones(5, dtype=torch.float64, requires_grad=True)
    assert grad_check(lambda: (x**2).sum(), x) < 1e-7


def test_grad_check_detects_wrong_gradient():
    x = torch.ones(3, dtype=torch.float64, requires_grad=True)

    class Wrong(torch.autograd.Function):
        @staticmethod
        def forward(ctx, v):
            return (v**2).sum()

        @staticmethod
        def backward(ctx, g):
            return g * torch.ones(3, dtype=torch.float64)

    assert grad_check(lambda: Wrong.apply(x), x) > 0.1


def test_grad_check_all_layers():
    errors = max_rel_error(layer_cases())
    assert max(errors.values()) < 1e-4, errors


# -- checkpoint ------------------------------------------------------------


def test_checkpoint_roundtrip(tmp_path):
    tensors = {"a.weight": torch.randn(3, 4, generator=gen()), "b": torch.tensor([1.5]), "scalar": torch.tensor(2.0)}
    meta = {"seed": 3, "model": {"arch": "ResTf"}}
    checkpoint.save(tmp_path / "x.tcck", tensors, meta)
    got, got_meta = checkpoint.load(tmp_path / "x.tcck")
    assert got_meta == meta and list(got) == list(tensors)
    for k in tensors:
        assert torch.equal(got[k], tensors[k])


def test_checkpoint_byte_layout():
    blob = checkpoint.dumps({"w": torch.tensor([[1.0, 2.0]])}, {})
    expected = (
        b"TCCK"
        + struct.pack("<HI", 1, 2)
        + b"{}"
        + struct.pack("<I", 1)
        + struct.pack("<H", 1)
        + b"w"
        + struct.pack("<B", 2)
        + struct.pack("<2I", 1, 2)
        + struct.pack("<2f", 1.0, 2.0)
    )
    assert blob == expected


def test_checkpoint_rejects_corruption():
    blob = checkpoint.dumps({"w": torch.ones(2)})
    with pytest.raises(checkpoint.CheckpointError):
        checkpoint.loads(b"XXXX" + blob[4:])
    with pytest.raises(checkpoint.CheckpointError):
        checkpoint.loads(blob + b"\0")
    with pytest.raises(checkpoint.CheckpointError):
        checkpoint.loads(blob[:4] + struct.pack("<H", 9) + blob[6:])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.lists(st.integers(1, 4), min_size=0, max_size=3), min_size=0, max_size=4), st.integers(0, 99))
def test_checkpoint_roundtrip_property(shapes, seed):
    rng = np.random.default_rng(seed)
    tensors = {f"t{i}": torch.from_numpy(rng.standard_normal(s).astype(np.float32)) for i, s in enumerate(shapes)}
    got, _ = checkpoint.loads(checkpoint.dumps(tensors, {"k": seed}))
    assert list(got) == list(tensors)
    for k in tensors:
        assert got[k].shape == tensors[k].shape and torch.equal(got[k], tensors[k])
