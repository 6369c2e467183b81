"""Hardness conversion, analytical contact estimators and modulus normalization."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientIndentation, NonPositiveModulus, OutOfRangeHardness

SENSOR_MODULUS_PA = 0.275e6


@dataclass(frozen=True)
class ContactParams:
    effective_radius_m: float = 0.01
    sensor_modulus_pa: float = SENSOR_MODULUS_PA
    poisson_object: float = 0.45
    poisson_sensor: float = 0.45

    def __post_init__(self):
        for name in ("effective_radius_m", "sensor_modulus_pa"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v}")
        for name in ("poisson_object", "poisson_sensor"):
            v = getattr(self, name)
            if not 0 < v <= 0.5:
                raise ValueError(f"{name} must lie in (0, 0.5], got {v}")

    @property
    def sensor_compliance(self) -> float:
        return (1 - self.poisson_sensor**2) / self.sensor_modulus_pa

    def effective_modulus(self, object_modulus_pa: float) -> float:
        """Combined contact modulus E* of object and sensor."""
        return 1.0 / ((1 - self.poisson_object**2) / object_modulus_pa + self.sensor_compliance)

    def object_modulus(self, effective_modulus_pa: float) -> float:
        """Invert ``effective_modulus``; inf when E* is at or above the sensor limit."""
        rest = 1.0 / effective_modulus_pa - self.sensor_compliance
        if rest <= 0:
            return math.inf
        return (1 - self.poisson_object**2) / rest


@dataclass(frozen=True)
class ModulusBounds:
    log10_min: float = 3.0
    log10_max: float = 12.0

    def __post_init__(self):
        if not self.log10_min < self.log10_max:
            raise ValueError(f"log10_min ({self.log10_min}) must be below log10_max ({self.log10_max})")

    @property
    def lower_pa(self) -> float:
        return 10.0**self.log10_min

    @property
    def upper_pa(self) -> float:
        return 10.0**self.log10_max

    def clamp(self, y_pa: float) -> float:
        return float(min(max(y_pa, self.lower_pa), self.upper_pa))


DEFAULT_BOUNDS = ModulusBounds()


# --------------------------------------------------------------------------
# hardness


def gent_shoreA_to_young(shore_a: float) -> float:
    """Young's modulus in Pa from Shore A hardness (Gent's relation)."""
    if not 0 <= shore_a < 100:
        raise OutOfRangeHardness(f"Shore A must lie in [0, 100), got {shore_a}")
    s = float(shore_a)
    return 1e6 * (0.0981 * (56 + 7.62336 * s)) / (0.137505 * (254 - 2.54 * s))


# Shore 00 -> Shore A correspondence. Approximate values read from commonly
# published durometer comparison charts; below 00-20 the A scale reads zero.
# Monotone; the last knot stays below 100 so Gent's relation is defined.
SHORE00_TO_SHOREA_KNOTS: tuple[tuple[float, float], ...] = (
    (0.0, 0.0),
    (20.0, 0.0),
    (30.0, 1.0),
    (40.0, 3.0),
    (45.0, 5.0),
    (55.0, 10.0),
    (62.0, 15.0),
    (70.0, 20.0),
    (75.0, 25.0),
    (80.0, 30.0),
    (85.0, 40.0),
    (90.0, 50.0),
    (93.0, 60.0),
    (95.0, 70.0),
    (97.0, 80.0),
    (98.5, 90.0),
    (100.0, 95.0),
)


def shore00_to_shoreA(shore_00: float) -> float:
    if not 0 <= shore_00 <= 100:
        raise OutOfRangeHardness(f"Shore 00 must lie in [0, 100], got {shore_00}")
    xs, ys = zip(*SHORE00_TO_SHOREA_KNOTS)
    return min(float(np.interp(shore_00, xs, ys)), 99.9)


def shore00_to_young(shore_00: float) -> float:
    return gent_shoreA_to_young(shore00_to_shoreA(shore_00))


# --------------------------------------------------------------------------
# analytical estimators


def indentation(width_m: np.ndarray) -> np.ndarray:
    """Per-contact indentation: half the width decrease since the first sample."""
    width_m = np.asarray(width_m, dtype=np.float64)
    return np.maximum(0.0, (width_m[0] - width_m) / 2.0)


@dataclass(frozen=True)
class HertzFit:
    modulus_pa: float
    effective_modulus_pa: float
    nonphysical: bool


def fit_hertz(force_n, indentation_m, params: ContactParams, bounds: ModulusBounds = DEFAULT_BOUNDS) -> HertzFit:
    """Least-squares fit of F = 4/3 E* sqrt(R) d^1.5 over samples with d > 0."""
    f = np.asarray(force_n, dtype=np.float64)
    d = np.asarray(indentation_m, dtype=np.float64)
    mask = d > 0
    if mask.sum() < 2:
        raise InsufficientIndentation(f"need >= 2 samples with positive indentation, got {int(mask.sum())}")
    f, d = f[mask], d[mask]
    d15 = d**1.5
    e_star = float(0.75 * np.dot(f, d15) / (math.sqrt(params.effective_radius_m) * np.dot(d15, d15)))
    if e_star <= 0:
        return HertzFit(bounds.lower_pa, e_star, False)
    e_obj = params.object_modulus(e_star)
    if math.isinf(e_obj):
        return HertzFit(bounds.upper_pa, e_star, True)
    return HertzFit(bounds.clamp(e_obj), e_star, False)


class NonPhysicalFitWarning(RuntimeWarning):
    pass


def hertz_fit(grasp, params: ContactParams, bounds: ModulusBounds = DEFAULT_BOUNDS) -> float:
    """Object modulus (Pa) from a grasp trajectory via Hertzian contact."""
    fit = fit_hertz(grasp.force_n, indentation(grasp.width_m), params, bounds)
    if fit.nonphysical:
        warnings.warn(
            f"{grasp.grasp_id}: contact stiffer than the sensor allows; clamped to {bounds.upper_pa:g} Pa",
            NonPhysicalFitWarning,
            stacklevel=2,
        )
    return fit.modulus_pa


def fit_elastic(force_n, indentation_m, params: ContactParams, bounds: ModulusBounds = DEFAULT_BOUNDS) -> float:
    """Hooke fit F = k d through the origin, converted with E = k L / A."""
    f = np.asarray(force_n, dtype=np.float64)
    d = np.asarray(indentation_m, dtype=np.float64)
    mask = d > 0
    if mask.sum() < 2:
        raise InsufficientIndentation(f"need >= 2 samples with positive indentation, got {int(mask.sum())}")
    f, d = f[mask], d[mask]
    k = float(np.dot(f, d) / np.dot(d, d))
    r = params.effective_radius_m
    e = k * (2 * r) / (math.pi * r * r)
    if e <= 0:
        return bounds.lower_pa
    return bounds.clamp(e)


def elastic_fit(grasp, params: ContactParams, bounds: ModulusBounds = DEFAULT_BOUNDS) -> float:
    return fit_elastic(grasp.force_n, indentation(grasp.width_m), params, bounds)


def estimate(grasp, params: ContactParams, bounds: ModulusBounds = DEFAULT_BOUNDS):
    """Both analytical estimates for a grasp, or None when the trajectory has too little indentation."""
    from .dataset import AnalyticalEstimate

    d = indentation(grasp.width_m)
    try:
        e_el = fit_elastic(grasp.force_n, d, params, bounds)
        e_hz = fit_hertz(grasp.force_n, d, params, bounds).modulus_pa
    except InsufficientIndentation:
        return None
    return AnalyticalEstimate(e_el, e_hz)


# --------------------------------------------------------------------------
# normalization


def normalize_young(y_pa, bounds: ModulusBounds = DEFAULT_BOUNDS):
    """Log10 min-max normalization to [0, 1]; accepts scalars or arrays."""
    y = np.asarray(y_pa, dtype=np.float64)
    if np.any(~(y > 0)):
        raise NonPositiveModulus(f"modulus must be positive, got {y_pa}")
    out = np.clip((np.log10(y) - bounds.log10_min) / (bounds.log10_max - bounds.log10_min), 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def denormalize_young(y_norm, bounds: ModulusBounds = DEFAULT_BOUNDS):
    z = np.asarray(y_norm, dtype=np.float64)
    out = 10.0 ** (bounds.log10_min + z * (bounds.log10_max - bounds.log10_min))
    return float(out) if out.ndim == 0 else out
