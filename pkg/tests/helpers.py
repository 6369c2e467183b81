"""Shared builders for the test suite."""

from __future__ import annotations

import numpy as np
import torch

from tactile_compliance.models import GraspBatch, ModelConfig, build_model
from tactile_compliance.nn import (
    ConvBlock,
    Dense,
    EncoderLayer,
    LayerNorm,
    LSTMCell,
    MultiHeadSelfAttention,
    ResidualBlock,
    grad_check,
)

TINY = dict(
    image_size=8,
    encoder_channels=(2,),
    embed_dim=4,
    lstm_hidden=4,
    tf_dim=4,
    tf_heads=2,
    tf_ffn=4,
    pos_dim=2,
    decoder_widths=(4,),
    small_decoder_widths=(3,),
)


def tiny_config(arch="VggLstm", strategy="Image", **kw) -> ModelConfig:
    return ModelConfig(architecture=arch, strategy=strategy, **(TINY | kw))


def random_batch(cfg: ModelConfig, n=2, seed=0, dtype=torch.float64) -> GraspBatch:
    g = torch.Generator().manual_seed(seed)
    s = cfg.image_size
    est = torch.rand(n, 2, generator=g, dtype=dtype) if cfg.strategy.uses_estimates else None
    return GraspBatch(
        frames=torch.rand(n, 3, 3, s, s, generator=g, dtype=dtype),
        force=torch.rand(n, 3, generator=g, dtype=dtype),
        width=torch.rand(n, 3, generator=g, dtype=dtype),
        estimates=est,
        targets=torch.rand(n, generator=g, dtype=dtype),
    )


def _double(module):
    return module.to(torch.float64)


def _params(module):
    return [p for p in module.parameters()]


def layer_cases(seed=0):
    """(name, scalar fn, tensors to check) for every layer in double precision."""
    g = torch.Generator().manual_seed(seed)

    def rnd(*shape):
        return torch.randn(*shape, generator=g, dtype=torch.float64).requires_grad_(True)

    cases = []

    dense = _double(Dense(5, 3, "tanh", gen=g))
    x = rnd(2, 5)
    cases.append(("dense", lambda: (dense(x) ** 2).sum(), [x, *_params(dense)]))

    dense_sig = _double(Dense(4, 2, "sigmoid", gen=g))
    xs = rnd(3, 4)
    cases.append(("dense_sigmoid", lambda: (dense_sig(xs) ** 2).sum(), [xs, *_params(dense_sig)]))

    conv = _double(ConvBlock(2, 3, pool=True, gen=g))
    xc = rnd(2, 2, 6, 6)
    with torch.no_grad():
        conv.bias.add_(0.3)  # keep pre-activations off the ReLU kink
    cases.append(("conv_block", lambda: (conv(xc) ** 2).sum(), [xc, *_params(conv)]))

    res = _double(ResidualBlock(2, gen=g))
    xr = rnd(1, 2, 4, 4)
    cases.append(("residual_block", lambda: (res(xr) ** 2).sum(), [xr, *_params(res)]))

    cell = _double(LSTMCell(3, 4, gen=g))
    xl = rnd(2, 3, 3)

    def lstm_unrolled():
        h, c = cell.initial_state(2)
        for t in range(3):
            h, c = cell(xl[:, t], h, c)
        return (h**2).sum() + c.sum()

    cases.append(("lstm_cell_3_steps", lstm_unrolled, [xl, *_params(cell)]))

    norm = _double(LayerNorm(5))
    xn = rnd(3, 5)
    wn = torch.randn(3, 5, generator=g, dtype=torch.float64)
    cases.append(("layer_norm", lambda: (norm(xn) * wn).sum(), [xn, *_params(norm)]))

    attn = _double(MultiHeadSelfAttention(4, 2, gen=g))
    xa = rnd(2, 3, 4)
    cases.append(("attention", lambda: (attn(xa) ** 2).sum(), [xa, *_params(attn)]))

    enc = _double(EncoderLayer(4, 2, 6, gen=g))
    xe = rnd(2, 3, 4)
    we = torch.randn(2, 3, 4, generator=g, dtype=torch.float64)
    cases.append(("encoder_layer", lambda: (enc(xe) * we).sum(), [xe, *_params(enc)]))
    return cases


def model_cases():
    """(name, scalar fn, parameters) for each full architecture in double precision."""
    cases = []
    for arch, strategy in (("Top10NN", "ALL"), ("VggLstm", "ALL"), ("ResTf", "ALL")):
        cfg = tiny_config(arch, strategy)
        model = build_model(cfg, seed=1).to(torch.float64)
        batch = random_batch(cfg, n=2, seed=2)
        cases.append(
            (arch, lambda m=model, b=batch: ((m(b) - b.targets) ** 2).sum(), list(model.parameters()))
        )
    return cases


def max_rel_error(cases, h=1e-5) -> dict[str, float]:
    return {name: grad_check(fn, inputs, h=h) for name, fn, inputs in cases}


def skewed_log10(n, rng: np.random.Generator) -> np.ndarray:
    """Log10 moduli concentrated in the soft decades."""
    return np.concatenate([rng.uniform(4, 5, size=int(n * 0.7)), rng.uniform(5, 9, size=n - int(n * 0.7))])
