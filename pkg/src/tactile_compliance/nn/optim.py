from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import torch
from torch import Tensor, nn

from ..errors import LengthMismatch, UninitializedGradients


class ParamStore:
    """Named parameters of a module plus Adam moment accumulators."""

    def __init__(self, module: nn.Module):
        self.module = module
        self.params: dict[str, nn.Parameter] = dict(module.named_parameters())
        self.m = {k: torch.zeros_like(p) for k, p in self.params.items()}
        self.v = {k: torch.zeros_like(p) for k, p in self.params.items()}
        self.step = 0

    def __iter__(self):
        return iter(self.params.values())

    def __len__(self):
        return len(self.params)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def state_dict(self) -> dict[str, Tensor]:
        return {k: p.detach().clone() for k, p in self.params.items()}

    def load_state_dict(self, state: dict[str, Tensor]) -> None:
        with torch.no_grad():
            for k, p in self.params.items():
                p.copy_(state[k])


@dataclass(frozen=True)
class LossConfig:
    l2_lambda: float = 1e-6

    def __post_init__(self):
        if not (math.isfinite(self.l2_lambda) and self.l2_lambda >= 0):
            raise ValueError("l2_lambda must be finite and nonnegative")


def mse_l2_loss(preds: Tensor, targets: Tensor, params: Iterable[Tensor], cfg: LossConfig) -> Tensor:
    """Mean squared error plus l2_lambda times the sum of squared parameters."""
    if preds.shape != targets.shape or preds.numel() < 1:
        raise LengthMismatch(f"preds {tuple(preds.shape)} vs targets {tuple(targets.shape)}")
    loss = torch.mean((targets - preds) ** 2)
    if cfg.l2_lambda:
        loss = loss + cfg.l2_lambda * sum(torch.sum(p * p) for p in params)
    return loss


def adam_step(store: ParamStore, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8) -> ParamStore:
    """One Adam update with bias correction, applied in place."""
    missing = [k for k, p in store.params.items() if p.grad is None]
    if missing:
        raise UninitializedGradients(f"no gradient for {', '.join(missing[:5])}")
    store.step += 1
    c1 = 1 - beta1**store.step
    c2 = 1 - beta2**store.step
    with torch.no_grad():
        for k, p in store.params.items():
            g = p.grad
            m = store.m[k].mul_(beta1).add_(g, alpha=1 - beta1)
            v = store.v[k].mul_(beta2).addcmul_(g, g, value=1 - beta2)
            p.sub_(lr * (m / c1) / (torch.sqrt(v / c2) + eps))
    return store
