"""Synthetic grasp catalogs with rendered indentation images.

The gripper closes linearly from its initial width; force follows the
Hertz law with the combined object/sensor modulus until 60 N (or the
indentation cap) is reached. Frames render the gel's share of the
paraboloid indentation field

    z(x, y) = max(0, d - r(x, y)^2 / (2 R))

scaled by the fraction of the total approach taken up by the gel, so a
soft object leaves a wide shallow imprint and a hard one a narrower, deeper
imprint that stops changing once the object is much stiffer than the gel.
Shapes differ only in the distance norm r: Euclidean (Sphere), one axis
(Cylinder), Chebyshev (Rectangular), hexagonal (Hex), or a Euclidean norm
with an angular radius perturbation (Irregular).
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import (
    FORCE_LIMIT_N,
    FORCE_THRESHOLD_N,
    Catalog,
    GraspRecord,
    Material,
    ObjectMeta,
    Shape,
    frame_indices,
    write_catalog,
)
from .errors import DegenerateGeometry
from .physics import ContactParams, estimate
from .pipeline import stream_seed

# upper log10 modulus bound of each material, soft -> hard
MATERIAL_DECADES: tuple[tuple[float, Material], ...] = (
    (5.0, Material.FOAM),
    (6.0, Material.RUBBER),
    (7.5, Material.FOOD),
    (9.5, Material.PLASTIC),
    (10.2, Material.WOOD),
    (10.8, Material.GLASS),
    (11.3, Material.CERAMIC),
    (math.inf, Material.METAL),
)

BACKGROUND_RGB = np.array([0.30, 0.28, 0.45], dtype=np.float32)
_IMPRINT_RGB = np.array([0.60, 0.42, -0.25], dtype=np.float32)


def _default_mix() -> dict[str, float]:
    return {"Sphere": 0.3, "Cylinder": 0.2, "Rectangular": 0.2, "Hex": 0.15, "Irregular": 0.15}


@dataclass(frozen=True)
class SynthConfig:
    num_objects: int = 200
    grasps_per_object: int = 5
    log10_modulus_range: tuple[float, float] = (4.0, 9.0)
    shape_mix: dict = field(default_factory=_default_mix)
    image_size: int = 64
    radius_range_m: tuple[float, float] = (0.009, 0.011)
    initial_width_range_m: tuple[float, float] = (0.05, 0.08)
    fov_half_width_m: float = 0.03
    max_indentation_m: float = 0.02
    gel_thickness_m: float = 0.02
    trajectory_points: int = 20
    force_noise_n: float = 0.05
    width_noise_m: float = 1e-5
    pixel_noise: float = 0.01
    stiff_saturation: bool = True
    plateau_noise: float = 0.05
    contact: ContactParams = field(default_factory=ContactParams)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "log10_modulus_range", tuple(self.log10_modulus_range))
        object.__setattr__(self, "radius_range_m", tuple(self.radius_range_m))
        object.__setattr__(self, "initial_width_range_m", tuple(self.initial_width_range_m))
        if isinstance(self.contact, dict):
            object.__setattr__(self, "contact", ContactParams(**self.contact))
        lo, hi = self.log10_modulus_range
        if lo > hi or self.radius_range_m[0] > self.radius_range_m[1]:
            raise ValueError("ranges must be nonempty (low <= high)")
        if self.initial_width_range_m[0] > self.initial_width_range_m[1]:
            raise ValueError("initial width range must be nonempty")
        unknown = set(self.shape_mix) - {s.value for s in Shape}
        if unknown:
            raise ValueError(f"unknown shapes in mix: {sorted(unknown)}")
        total = sum(self.shape_mix.values())
        if any(v < 0 for v in self.shape_mix.values()) or not math.isclose(total, 1.0, abs_tol=1e-9):
            raise ValueError(f"shape mix proportions must be nonnegative and sum to 1, got {total}")
        if self.num_objects < 1 or self.grasps_per_object < 1 or self.trajectory_points < 3:
            raise ValueError("num_objects, grasps_per_object >= 1 and trajectory_points >= 3 required")
        if 2 * self.max_indentation_m >= self.initial_width_range_m[0]:
            raise ValueError("initial width must exceed twice the indentation cap")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def material_for(young_modulus_pa: float) -> Material:
    e = math.log10(young_modulus_pa)
    for upper, material in MATERIAL_DECADES:
        if e < upper:
            return material
    return Material.METAL


def synth_object(cfg: SynthConfig, rng: np.random.Generator, index: int = 0) -> ObjectMeta:
    lo, hi = cfg.log10_modulus_range
    y = 10.0 ** rng.uniform(lo, hi) if hi > lo else 10.0**lo
    shapes = [s for s in Shape]
    probs = np.array([cfg.shape_mix.get(s.value, 0.0) for s in shapes], dtype=np.float64)
    shape = shapes[int(rng.choice(len(shapes), p=probs / probs.sum()))]
    material = material_for(y)
    return ObjectMeta(
        object_id=f"obj{index:04d}",
        name=f"synthetic {material.value} {shape.value.lower()} {index}",
        shape=shape,
        material=material,
        young_modulus_pa=float(y),
    )


@dataclass(frozen=True)
class ObjectGeometry:
    radius_m: float
    orientation: float  # radians; Cylinder axis / Irregular lobe phase


def object_geometry(meta: ObjectMeta, cfg: SynthConfig) -> ObjectGeometry:
    rng = np.random.default_rng(stream_seed(cfg.seed, "geometry", meta.object_id))
    lo, hi = cfg.radius_range_m
    r = float(rng.uniform(lo, hi)) if hi > lo else lo
    return ObjectGeometry(r, float(rng.uniform(0, math.pi)))


# --------------------------------------------------------------------------
# physics of one grasp


def hertz_force(indentation_m: np.ndarray, effective_modulus_pa: float, radius_m: float) -> np.ndarray:
    return 4.0 / 3.0 * effective_modulus_pa * math.sqrt(radius_m) * np.asarray(indentation_m) ** 1.5


def final_indentation(effective_modulus_pa: float, radius_m: float, cfg: SynthConfig) -> float:
    """Indentation at which the force threshold is hit, capped."""
    d60 = (3.0 * FORCE_THRESHOLD_N / (4.0 * effective_modulus_pa * math.sqrt(radius_m))) ** (2.0 / 3.0)
    return min(d60, cfg.max_indentation_m)


def gel_share(object_modulus_pa: float, params: ContactParams) -> float:
    """Fraction of the total approach taken up by the gel."""
    c_obj = (1 - params.poisson_object**2) / object_modulus_pa
    return params.sensor_compliance / (params.sensor_compliance + c_obj)


def _distance_sq(shape: Shape, x, y, radius, orientation):
    """Squared distance measure whose paraboloid gives the imprint shape."""
    c, s = math.cos(orientation), math.sin(orientation)
    u, v = c * x + s * y, -s * x + c * y
    if shape is Shape.SPHERE:
        return x * x + y * y, radius
    if shape is Shape.CYLINDER:
        return u * u, radius
    if shape is Shape.RECTANGULAR:
        return np.maximum(np.abs(u), np.abs(v)) ** 2, radius
    if shape is Shape.HEX:
        a = np.abs(u)
        b = np.abs(v)
        return np.maximum(a * math.sqrt(3) / 2 + b / 2, b) ** 2, radius
    theta = np.arctan2(y, x)
    local_r = radius * (1.0 + 0.15 * np.cos(3 * theta + orientation))
    return x * x + y * y, local_r


def render_frame(
    depth_m: float,
    shape: Shape,
    geometry: ObjectGeometry,
    share: float,
    cfg: SynthConfig,
    rng: np.random.Generator | None = None,
    offset_m: tuple[float, float] = (0.0, 0.0),
) -> np.ndarray:
    n = cfg.image_size
    coords = (np.arange(n) + 0.5) / n * 2 * cfg.fov_half_width_m - cfg.fov_half_width_m
    yy, xx = np.meshgrid(coords - offset_m[1], coords - offset_m[0], indexing="ij")
    rho_sq, radius = _distance_sq(shape, xx, yy, geometry.radius_m, geometry.orientation)
    z = np.maximum(0.0, depth_m - rho_sq / (2.0 * radius))
    u = np.sqrt(np.clip(share * z / cfg.gel_thickness_m, 0.0, 1.0)).astype(np.float32)
    img = BACKGROUND_RGB + u[..., None] * _IMPRINT_RGB
    if rng is not None and cfg.pixel_noise > 0:
        img = img + rng.normal(0.0, cfg.pixel_noise, size=img.shape).astype(np.float32)
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def synth_grasp(
    meta: ObjectMeta,
    params: ContactParams,
    cfg: SynthConfig,
    rng: np.random.Generator,
    grasp_index: int = 0,
) -> GraspRecord:
    geom = object_geometry(meta, cfg)
    if geom.radius_m > cfg.fov_half_width_m:
        raise DegenerateGeometry(f"radius {geom.radius_m} m exceeds field of view half-width {cfg.fov_half_width_m} m")
    params = dataclasses.replace(params, effective_radius_m=geom.radius_m)
    e_star = params.effective_modulus(meta.young_modulus_pa)
    d_end = final_indentation(e_star, geom.radius_m, cfg)
    n = cfg.trajectory_points
    depth = d_end * np.arange(n) / (n - 1)

    w_lo, w_hi = cfg.initial_width_range_m
    w0 = float(rng.uniform(w_lo, w_hi)) if w_hi > w_lo else w_lo
    force = hertz_force(depth, e_star, geom.radius_m)
    if cfg.force_noise_n > 0:
        force = force + rng.normal(0.0, cfg.force_noise_n, size=n)
    if cfg.stiff_saturation and meta.young_modulus_pa > params.sensor_modulus_pa and cfg.plateau_noise > 0:
        plateau = force > 0.9 * FORCE_THRESHOLD_N
        force = np.where(plateau, force * (1.0 + cfg.plateau_noise * rng.standard_normal(n)), force)
    force = np.clip(force, 0.0, FORCE_LIMIT_N)
    width = w0 - 2.0 * depth
    if cfg.width_noise_m > 0:
        width = width + rng.normal(0.0, cfg.width_noise_m, size=n)

    share = gel_share(meta.young_modulus_pa, params)
    offset = tuple(rng.normal(0.0, 0.05 * cfg.fov_half_width_m, size=2)) if cfg.pixel_noise > 0 else (0.0, 0.0)
    frames = np.stack(
        [render_frame(depth[i], meta.shape, geom, share, cfg, rng, offset) for i in frame_indices(n)]
    )
    record = GraspRecord(
        grasp_id=f"{meta.object_id}__{grasp_index:02d}",
        object_id=meta.object_id,
        frames=frames,
        force_n=force,
        width_m=width,
    )
    return dataclasses.replace(record, estimates=estimate(record, params))


def generate(cfg: SynthConfig) -> Catalog:
    objects = []
    for i in range(cfg.num_objects):
        objects.append(synth_object(cfg, np.random.default_rng(stream_seed(cfg.seed, "object", i)), i))
    grasps = []
    for meta in objects:
        for k in range(cfg.grasps_per_object):
            rng = np.random.default_rng(stream_seed(cfg.seed, meta.object_id, k))
            grasps.append(synth_grasp(meta, cfg.contact, cfg, rng, k))
    return Catalog({m.object_id: m for m in objects}, grasps)


def write_synthetic(root: str | Path, cfg: SynthConfig) -> Catalog:
    """Generate a catalog and write it in the canonical layout plus
    ``synth-manifest.json``."""
    catalog = generate(cfg)
    root = Path(root)
    write_catalog(root, catalog)
    geometry = {oid: dataclasses.asdict(object_geometry(m, cfg)) for oid, m in sorted(catalog.objects.items())}
    manifest = {"config": cfg.to_dict(), "objects": geometry, "num_grasps": len(catalog.grasps)}
    (root / "synth-manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return catalog
