"""Layer catalog written against torch tensor primitives.

Parameters are created with an explicit ``torch.Generator`` so model
construction never touches global random state.
"""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from ..errors import HeadDivisibility, ShapeMismatch


def _uniform(shape, bound: float, gen: torch.Generator | None) -> nn.Parameter:
    w = torch.empty(shape)
    w.uniform_(-bound, bound, generator=gen)
    return nn.Parameter(w)


def _zeros(*shape) -> nn.Parameter:
    return nn.Parameter(torch.zeros(*shape))


_ACTIVATIONS = {
    "linear": lambda x: x,
    "relu": torch.relu,
    "tanh": torch.tanh,
    "sigmoid": torch.sigmoid,
}


class ConvBlock(nn.Module):
    """Conv2d + bias + ReLU, optionally followed by a 2x2 max-pool. NCHW."""

    def __init__(self, in_channels, out_channels, kernel_size=3, padding=None, pool=True, gen=None):
        super().__init__()
        self.in_channels = in_channels
        self.padding = kernel_size // 2 if padding is None else padding
        self.pool = pool
        fan_in = in_channels * kernel_size * kernel_size
        self.weight = _uniform((out_channels, in_channels, kernel_size, kernel_size), math.sqrt(6.0 / fan_in), gen)
        self.bias = _zeros(out_channels)

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ShapeMismatch(f"ConvBlock expects N x {self.in_channels} x H x W, got {tuple(x.shape)}")
        k = self.weight.shape[-1]
        if x.shape[2] + 2 * self.padding < k or x.shape[3] + 2 * self.padding < k:
            raise ShapeMismatch(f"kernel {k} does not fit input {tuple(x.shape[2:])} with padding {self.padding}")
        y = torch.relu(F.conv2d(x, self.weight, self.bias, padding=self.padding))
        if self.pool:
            y = F.max_pool2d(y, 2)
        return y


class ResidualBlock(nn.Module):
    """relu(x + conv(relu(conv(x)))), channel- and size-preserving."""

    def __init__(self, channels, gen=None):
        super().__init__()
        bound = math.sqrt(6.0 / (channels * 9))
        self.conv1 = ConvBlock(channels, channels, pool=False, gen=gen)
        self.weight2 = _uniform((channels, channels, 3, 3), bound * 0.5, gen)
        self.bias2 = _zeros(channels)

    def forward(self, x: Tensor) -> Tensor:
        h = self.conv1(x)
        return torch.relu(x + F.conv2d(h, self.weight2, self.bias2, padding=1))


class Dense(nn.Module):
    """out = act(x W^T + b)."""

    def __init__(self, in_features, out_features, activation="linear", gen=None):
        super().__init__()
        if activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.in_features = in_features
        self.activation = activation
        self.weight = _uniform((out_features, in_features), math.sqrt(1.0 / in_features), gen)
        self.bias = _zeros(out_features)

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_features:
            raise ShapeMismatch(f"Dense expects last dim {self.in_features}, got {tuple(x.shape)}")
        return _ACTIVATIONS[self.activation](x @ self.weight.T + self.bias)


class LSTMCell(nn.Module):
    """Single LSTM step; gate rows are ordered input, forget, output, candidate."""

    def __init__(self, input_size, hidden_size, gen=None):
        super().__init__()
        self.input_size = input_size
        self.hidden_size = hidden_size
        self.weight = _uniform((4 * hidden_size, input_size + hidden_size), 1.0 / math.sqrt(hidden_size), gen)
        self.bias = _zeros(4 * hidden_size)

    def forward(self, x: Tensor, h: Tensor, c: Tensor) -> tuple[Tensor, Tensor]:
        if x.shape[-1] != self.input_size or h.shape[-1] != self.hidden_size or c.shape != h.shape:
            raise ShapeMismatch(
                f"LSTMCell({self.input_size}, {self.hidden_size}) got x{tuple(x.shape)} h{tuple(h.shape)} c{tuple(c.shape)}"
            )
        z = torch.cat([x, h], dim=-1) @ self.weight.T + self.bias
        i, f, o, g = z.chunk(4, dim=-1)
        c_next = torch.sigmoid(f) * c + torch.sigmoid(i) * torch.tanh(g)
        h_next = torch.sigmoid(o) * torch.tanh(c_next)
        return h_next, c_next

    def initial_state(self, batch: int, dtype=None) -> tuple[Tensor, Tensor]:
        dtype = dtype or self.weight.dtype
        z = torch.zeros(batch, self.hidden_size, dtype=dtype)
        return z, z.clone()


class LayerNorm(nn.Module):
    def __init__(self, dim, eps=1e-5):
        super().__init__()
        self.eps = eps
        self.gain = nn.Parameter(torch.ones(dim))
        self.shift = _zeros(dim)

    def forward(self, x: Tensor) -> Tensor:
        mu = x.mean(dim=-1, keepdim=True)
        var = ((x - mu) ** 2).mean(dim=-1, keepdim=True)
        return (x - mu) / torch.sqrt(var + self.eps) * self.gain + self.shift


class MultiHeadSelfAttention(nn.Module):
    def __init__(self, dim, num_heads, gen=None):
        super().__init__()
        if dim % num_heads:
            raise HeadDivisibility(f"model dim {dim} not divisible by {num_heads} heads")
        self.dim = dim
        self.num_heads = num_heads
        bound = math.sqrt(1.0 / dim)
        self.w_q = _uniform((dim, dim), bound, gen)
        self.w_k = _uniform((dim, dim), bound, gen)
        self.w_v = _uniform((dim, dim), bound, gen)
        self.w_o = _uniform((dim, dim), bound, gen)
        self.b_q, self.b_k, self.b_v, self.b_o = (_zeros(dim) for _ in range(4))
        self.last_weights: Tensor | None = None

    def forward(self, x: Tensor) -> Tensor:
        """x: (B, T, D) or (T, D)."""
        squeeze = x.ndim == 2
        if squeeze:
            x = x.unsqueeze(0)
        if x.shape[-1] != self.dim:
            raise ShapeMismatch(f"attention expects dim {self.dim}, got {tuple(x.shape)}")
        b, t, d = x.shape
        dh = d // self.num_heads

        def heads(y):
            return y.reshape(b, t, self.num_heads, dh).transpose(1, 2)

        q = heads(x @ self.w_q.T + self.b_q)
        k = heads(x @ self.w_k.T + self.b_k)
        v = heads(x @ self.w_v.T + self.b_v)
        weights = torch.softmax(q @ k.transpose(-1, -2) / math.sqrt(dh), dim=-1)
        self.last_weights = weights.detach()
        ctx = (weights @ v).transpose(1, 2).reshape(b, t, d)
        out = ctx @ self.w_o.T + self.b_o
        return out.squeeze(0) if squeeze else out


class EncoderLayer(nn.Module):
    """Post-norm transformer encoder layer: attention and feed-forward
    sublayers, each wrapped in residual + layer norm."""

    def __init__(self, dim, num_heads, ffn_dim, gen=None):
        super().__init__()
        self.attention = MultiHeadSelfAttention(dim, num_heads, gen=gen)
        self.norm1 = LayerNorm(dim)
        self.ffn_in = Dense(dim, ffn_dim, "relu", gen=gen)
        self.ffn_out = Dense(ffn_dim, dim, gen=gen)
        self.norm2 = LayerNorm(dim)

    def forward(self, x: Tensor) -> Tensor:
        x = self.norm1(x + self.attention(x))
        return self.norm2(x + self.ffn_out(self.ffn_in(x)))


def multi_head_attention(tokens: Tensor, layer: EncoderLayer) -> Tensor:
    return layer(tokens)
