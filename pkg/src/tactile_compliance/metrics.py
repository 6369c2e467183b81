from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .errors import ConstantTruths, LengthMismatch, NonPositiveValue
from .physics import DEFAULT_BOUNDS, ModulusBounds, normalize_young


def _pair(preds, truths) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(preds, dtype=np.float64).ravel()
    t = np.asarray(truths, dtype=np.float64).ravel()
    if p.shape != t.shape:
        raise LengthMismatch(f"{p.size} predictions vs {t.size} truths")
    if p.size == 0:
        raise LengthMismatch("empty inputs")
    return p, t


def _positive(p, t):
    if np.any(~(p > 0)) or np.any(~(t > 0)):
        raise NonPositiveValue("moduli must be positive")


def log10_accuracy(preds_pa, truths_pa) -> float:
    """Fraction of predictions within one order of magnitude (inclusive)."""
    p, t = _pair(preds_pa, truths_pa)
    _positive(p, t)
    diff = np.abs(np.log10(t) - np.log10(p))
    # absorb rounding in log10 so exact decades count as correct
    return float(np.mean(diff <= 1.0 + 1e-12))


def n_mse(preds_pa, truths_pa, bounds: ModulusBounds = DEFAULT_BOUNDS) -> float:
    p, t = _pair(preds_pa, truths_pa)
    _positive(p, t)
    return float(np.mean((normalize_young(p, bounds) - normalize_young(t, bounds)) ** 2))


def r_squared(preds_norm, truths_norm) -> float:
    p, t = _pair(preds_norm, truths_norm)
    if p.size < 2:
        raise LengthMismatch("r_squared needs at least 2 items")
    ss_tot = float(np.sum((t - t.mean()) ** 2))
    if ss_tot == 0:
        raise ConstantTruths("truths are constant")
    return 1.0 - float(np.sum((t - p) ** 2)) / ss_tot


def mean_std(values: Sequence[float]) -> tuple[float, float]:
    """Mean and sample (n - 1) standard deviation; std is 0 for one value."""
    v = [x for x in values if x is not None and not math.isnan(x)]
    if not v:
        return math.nan, math.nan
    if len(v) == 1:
        return float(v[0]), 0.0
    return float(np.mean(v)), float(np.std(v, ddof=1))
