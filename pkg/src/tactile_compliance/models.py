"""The three regression architectures (Top10NN, VGG-LSTM, Res-Tf).

Every model maps a ``GraspBatch`` to one normalized log-modulus per item.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import torch
from torch import Tensor, nn

from .errors import ShapeMismatch, StrategyMismatch
from .nn import ConvBlock, Dense, EncoderLayer, LossConfig, LSTMCell, ResidualBlock
from .nn import checkpoint as ckpt


class Architecture(str, Enum):
    TOP10NN = "Top10NN"
    VGG_LSTM = "VggLstm"
    RES_TF = "ResTf"

    @classmethod
    def parse(cls, value) -> "Architecture":
        if isinstance(value, Architecture):
            return value
        key = str(value).replace("-", "").replace("_", "").lower()
        for member in cls:
            if member.value.lower() == key:
                return member
        raise ValueError(f"unknown architecture {value!r}")


class InputStrategy(str, Enum):
    IMAGE = "Image"
    IMAGE_F = "ImageF"
    IMAGE_FW = "ImageFW"
    ALL = "ALL"

    @classmethod
    def parse(cls, value) -> "InputStrategy":
        if isinstance(value, InputStrategy):
            return value
        for member in cls:
            if member.value.lower() == str(value).lower():
                return member
        raise ValueError(f"unknown input strategy {value!r}")

    @property
    def uses_force(self) -> bool:
        return self is not InputStrategy.IMAGE

    @property
    def uses_width(self) -> bool:
        return self in (InputStrategy.IMAGE_FW, InputStrategy.ALL)

    @property
    def uses_estimates(self) -> bool:
        return self is InputStrategy.ALL

    @property
    def scalars_per_step(self) -> int:
        """Force and width values per timestep (estimates counted separately)."""
        return int(self.uses_force) + int(self.uses_width)


@dataclass(frozen=True)
class ModelConfig:
    architecture: Architecture = Architecture.VGG_LSTM
    strategy: InputStrategy = InputStrategy.IMAGE
    image_size: int = 32
    encoder_channels: tuple[int, ...] = (8, 16, 32)
    embed_dim: int = 64
    shared_encoder: bool = True
    lstm_hidden: int = 64
    tf_dim: int = 64
    tf_heads: int = 4
    tf_depth: int = 1
    tf_ffn: int = 128
    pos_dim: int = 8
    decoder_widths: tuple[int, ...] = (64,)
    small_decoder_widths: tuple[int, ...] = (16,)
    encoder_weights: str | None = None
    loss: LossConfig = field(default_factory=LossConfig)

    def __post_init__(self):
        object.__setattr__(self, "architecture", Architecture.parse(self.architecture))
        object.__setattr__(self, "strategy", InputStrategy.parse(self.strategy))
        object.__setattr__(self, "encoder_channels", tuple(self.encoder_channels))
        object.__setattr__(self, "decoder_widths", tuple(self.decoder_widths))
        object.__setattr__(self, "small_decoder_widths", tuple(self.small_decoder_widths))
        if isinstance(self.loss, dict):
            object.__setattr__(self, "loss", LossConfig(**self.loss))
        sizes = [self.image_size, self.embed_dim, self.lstm_hidden, self.tf_dim, self.tf_heads, self.tf_ffn, self.pos_dim]
        sizes += list(self.encoder_channels) + list(self.decoder_widths) + list(self.small_decoder_widths)
        if any(s <= 0 for s in sizes) or self.tf_depth < 0:
            raise ValueError("model sizes must be positive")
        if self.tf_dim % self.tf_heads:
            raise ValueError(f"tf_heads ({self.tf_heads}) must divide tf_dim ({self.tf_dim})")
        if self.image_size % (2 ** len(self.encoder_channels)):
            raise ValueError("image_size must be divisible by 2**len(encoder_channels)")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["architecture"] = self.architecture.value
        d["strategy"] = self.strategy.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        if "loss" in d and isinstance(d["loss"], dict):
            d["loss"] = LossConfig(**d["loss"])
        return cls(**d)


@dataclass
class GraspBatch:
    """frames: (B, 3, C, H, W); force, width: (B, 3); estimates: (B, 2) or None."""

    frames: Tensor
    force: Tensor
    width: Tensor
    estimates: Tensor | None = None
    targets: Tensor | None = None

    def __len__(self):
        return self.frames.shape[0]

    def to(self, dtype) -> "GraspBatch":
        conv = lambda t: None if t is None else t.to(dtype)  # noqa: E731
        return GraspBatch(conv(self.frames), conv(self.force), conv(self.width), conv(self.estimates), conv(self.targets))


# --------------------------------------------------------------------------
# building blocks


class ImageEncoder(nn.Module):
    """Small trainable CNN standing in for a pretrained backbone."""

    def __init__(self, channels, image_size, embed_dim, residual=False, gen=None):
        super().__init__()
        layers = []
        c_in = 3
        for c in channels:
            layers.append(ConvBlock(c_in, c, pool=True, gen=gen))
            if residual:
                layers.append(ResidualBlock(c, gen=gen))
            c_in = c
        self.features = nn.Sequential(*layers)
        side = image_size // (2 ** len(channels))
        self.project = Dense(c_in * side * side, embed_dim, "relu", gen=gen)
        self.image_size = image_size

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.image_size or x.shape[-2] != self.image_size:
            raise ShapeMismatch(f"encoder expects {self.image_size}x{self.image_size} frames, got {tuple(x.shape)}")
        return self.project(self.features(x).flatten(1))


class FrameEncoders(nn.Module):
    """Encodes the three frames with one shared or three independent encoders."""

    def __init__(self, cfg: ModelConfig, residual: bool, gen=None):
        super().__init__()
        n = 1 if cfg.shared_encoder else 3
        self.encoders = nn.ModuleList(
            ImageEncoder(cfg.encoder_channels, cfg.image_size, cfg.embed_dim, residual, gen) for _ in range(n)
        )

    def forward(self, frames: Tensor) -> Tensor:
        """(B, 3, C, H, W) -> (B, 3, embed)."""
        b, t = frames.shape[:2]
        if len(self.encoders) == 1:
            emb = self.encoders[0](frames.reshape(b * t, *frames.shape[2:]))
            return emb.reshape(b, t, -1)
        return torch.stack([enc(frames[:, i]) for i, enc in enumerate(self.encoders)], dim=1)


def mlp(in_dim, widths, out_dim, gen=None) -> nn.Sequential:
    layers = []
    for w in widths:
        layers.append(Dense(in_dim, w, "relu", gen=gen))
        in_dim = w
    layers.append(Dense(in_dim, out_dim, gen=gen))
    return nn.Sequential(*layers)


def weighted_average(outputs: Tensor, logits: Tensor) -> Tensor:
    """softmax(logits) . outputs over the last axis (length 3)."""
    if outputs.shape[-1] != 3 or logits.shape[-1] != 3:
        raise ShapeMismatch("weighted_average needs exactly 3 outputs and 3 logits")
    return (torch.softmax(logits, dim=-1) * outputs).sum(dim=-1)


class ComplianceModel(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg

    @property
    def strategy(self) -> InputStrategy:
        return self.cfg.strategy

    def check(self, batch: GraspBatch) -> None:
        has_est = batch.estimates is not None
        if has_est != self.strategy.uses_estimates:
            raise StrategyMismatch(
                f"strategy {self.strategy.value} {'requires' if self.strategy.uses_estimates else 'forbids'} analytical estimates"
            )
        if batch.frames.ndim != 5 or batch.frames.shape[1] != 3:
            raise ShapeMismatch(f"frames must be (B, 3, C, H, W), got {tuple(batch.frames.shape)}")

    def step_scalars(self, batch: GraspBatch, t: int) -> list[Tensor]:
        cols = []
        if self.strategy.uses_force:
            cols.append(batch.force[:, t : t + 1])
        if self.strategy.uses_width:
            cols.append(batch.width[:, t : t + 1])
        return cols

    def forward(self, batch: GraspBatch) -> Tensor:
        self.check(batch)
        return self._forward(batch)

    def _forward(self, batch: GraspBatch) -> Tensor:
        raise NotImplementedError

    def encoder_modules(self) -> nn.Module:
        return self.encoders


class Top10NN(ComplianceModel):
    """CNN features of all frames + final force/width -> large decoder;
    its output + analytical estimates -> small decoder."""

    def __init__(self, cfg: ModelConfig, gen=None):
        super().__init__(cfg)
        self.encoders = FrameEncoders(cfg, residual=False, gen=gen)
        n_in = 3 * cfg.embed_dim + cfg.strategy.scalars_per_step
        self.large = mlp(n_in, cfg.decoder_widths[:-1], cfg.decoder_widths[-1], gen=gen)
        n_small = cfg.decoder_widths[-1] + (2 if cfg.strategy.uses_estimates else 0)
        self.small = mlp(n_small, cfg.small_decoder_widths, 1, gen=gen)

    def _forward(self, batch):
        emb = self.encoders(batch.frames).flatten(1)
        h = torch.relu(self.large(torch.cat([emb, *self.step_scalars(batch, 2)], dim=1)))
        parts = [h] + ([batch.estimates] if self.strategy.uses_estimates else [])
        return self.small(torch.cat(parts, dim=1)).squeeze(-1)

    def final_layer(self) -> Dense:
        return self.small[-1]


class VggLstm(ComplianceModel):
    """Per-frame embeddings through an LSTM; per-step outputs combined by
    softmax-weighted averaging with learnable logits."""

    def __init__(self, cfg: ModelConfig, gen=None):
        super().__init__(cfg)
        self.encoders = FrameEncoders(cfg, residual=False, gen=gen)
        n_est = 2 if cfg.strategy.uses_estimates else 0
        self.cell = LSTMCell(cfg.embed_dim + cfg.strategy.scalars_per_step + n_est, cfg.lstm_hidden, gen=gen)
        self.head = mlp(cfg.lstm_hidden, cfg.small_decoder_widths, 1, gen=gen)
        self.step_logits = nn.Parameter(torch.zeros(3))

    def step_outputs(self, batch: GraspBatch, embeddings: Tensor | None = None) -> Tensor:
        """(B, 3) per-timestep outputs; ``embeddings`` overrides the encoder."""
        emb = self.encoders(batch.frames) if embeddings is None else embeddings
        h, c = self.cell.initial_state(len(batch), dtype=emb.dtype)
        outs = []
        for t in range(3):
            parts = [emb[:, t], *self.step_scalars(batch, t)]
            if self.strategy.uses_estimates:
                parts.append(batch.estimates)
            h, c = self.cell(torch.cat(parts, dim=1), h, c)
            outs.append(self.head(h))
        return torch.cat(outs, dim=1)

    def _forward(self, batch, embeddings=None):
        return weighted_average(self.step_outputs(batch, embeddings), self.step_logits)

    def aggregation_weights(self) -> Tensor:
        return torch.softmax(self.step_logits.detach(), dim=-1)


class ResTf(ComplianceModel):
    """Residual CNN content tokens + learned positions -> transformer encoder
    -> mean pool -> concat scalars -> decoder."""

    def __init__(self, cfg: ModelConfig, gen=None):
        super().__init__(cfg)
        self.encoders = FrameEncoders(cfg, residual=True, gen=gen)
        pos = torch.empty(3, cfg.pos_dim).normal_(0.0, 1.0, generator=gen)
        self.positions = nn.Parameter(pos)
        self.token_proj = Dense(cfg.embed_dim + cfg.pos_dim, cfg.tf_dim, gen=gen)
        self.layers = nn.ModuleList(EncoderLayer(cfg.tf_dim, cfg.tf_heads, cfg.tf_ffn, gen=gen) for _ in range(cfg.tf_depth))
        n_scalar = 3 * cfg.strategy.scalars_per_step + (2 if cfg.strategy.uses_estimates else 0)
        self.decoder = mlp(cfg.tf_dim + n_scalar, cfg.decoder_widths, 1, gen=gen)

    def tokens(self, batch: GraspBatch) -> Tensor:
        emb = self.encoders(batch.frames)
        pos = self.positions.unsqueeze(0).expand(emb.shape[0], -1, -1).to(emb.dtype)
        x = self.token_proj(torch.cat([emb, pos], dim=-1))
        for layer in self.layers:
            x = layer(x)
        return x

    def _forward(self, batch):
        pooled = self.tokens(batch).mean(dim=1)
        parts = [pooled] + [c for t in range(3) for c in self.step_scalars(batch, t)]
        if self.strategy.uses_estimates:
            parts.append(batch.estimates)
        return self.decoder(torch.cat(parts, dim=1)).squeeze(-1)


_REGISTRY = {Architecture.TOP10NN: Top10NN, Architecture.VGG_LSTM: VggLstm, Architecture.RES_TF: ResTf}


def build_model(cfg: ModelConfig, seed: int = 0) -> ComplianceModel:
    gen = torch.Generator().manual_seed(int(seed))
    model = _REGISTRY[cfg.architecture](cfg, gen=gen)
    if cfg.encoder_weights:
        load_encoder_weights(model, cfg.encoder_weights)
    return model


def load_encoder_weights(model: ComplianceModel, path: str | Path) -> None:
    """Copy externally supplied encoder weights (checkpoint format, names
    relative to the encoder module) into the model's frame encoders."""
    tensors, _ = ckpt.load(path)
    target = dict(model.encoders.named_parameters())
    unknown = sorted(set(tensors) - set(target))
    if unknown:
        raise ShapeMismatch(f"encoder weights contain unknown parameters: {unknown[:5]}")
    with torch.no_grad():
        for name, t in tensors.items():
            if target[name].shape != t.shape:
                raise ShapeMismatch(f"{name}: expected {tuple(target[name].shape)}, got {tuple(t.shape)}")
            target[name].copy_(t)
