from __future__ import annotations

from typing import Callable, Sequence

import torch
from torch import Tensor


def grad_check(fn: Callable[[], Tensor], inputs: Tensor | Sequence[Tensor], h: float = 1e-5, floor: float = 1e-8) -> float:
    """Max elementwise relative error between reverse-mode and central
    finite-difference gradients of the scalar ``fn()`` w.r.t. ``inputs``.

    Where both gradients are smaller than ``floor`` the absolute difference
    is used instead, so entries that are zero up to roundoff do not divide
    noise by noise.

    ``inputs`` are perturbed in place and must be leaf tensors with
    ``requires_grad`` set; use double precision.
    """
    if isinstance(inputs, Tensor):
        inputs = [inputs]
    inputs = list(inputs)
    out = fn()
    analytic = torch.autograd.grad(out, inputs, allow_unused=True)
    worst = 0.0
    with torch.no_grad():
        for x, g in zip(inputs, analytic):
            g = torch.zeros_like(x) if g is None else g
            flat = x.view(-1)
            gflat = g.reshape(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + h
                f_plus = fn().item()
                flat[i] = orig - h
                f_minus = fn().item()
                flat[i] = orig
                numeric = (f_plus - f_minus) / (2 * h)
                a = gflat[i].item()
                scale = max(abs(a), abs(numeric))
                err = abs(a - numeric) / scale if scale >= floor else abs(a - numeric)
                worst = max(worst, err)
    return worst
