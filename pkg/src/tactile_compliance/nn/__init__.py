from .gradcheck import grad_check
from .layers import (
    ConvBlock,
    Dense,
    EncoderLayer,
    LayerNorm,
    LSTMCell,
    MultiHeadSelfAttention,
    ResidualBlock,
    multi_head_attention,
)
from .optim import LossConfig, ParamStore, adam_step, mse_l2_loss

__all__ = [
    "ConvBlock",
    "Dense",
    "EncoderLayer",
    "LayerNorm",
    "LSTMCell",
    "LossConfig",
    "MultiHeadSelfAttention",
    "ParamStore",
    "ResidualBlock",
    "adam_step",
    "grad_check",
    "mse_l2_loss",
    "multi_head_attention",
]
