"""Adapter from a raw upstream dump to the canonical dataset layout.

Expected raw layout::

    <raw>/objects.csv                 one row per object
    <raw>/grasps/<object_id>/<run>/   one directory per grasp (``<raw>/<object_id>/<run>/`` also works)
        *.png | *.jpg                 tactile frames in time order (natural sort)
        *.csv                         force / width trajectory

Column names are matched case-insensitively against the aliases below. The
modulus comes from an explicit column when present, else from Shore 00 or
Shore A hardness. Widths larger than 1 are taken to be millimetres.

Objects or grasps that cannot be converted are logged and skipped; they never
abort the run.
"""

from __future__ import annotations

import csv
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .dataset import (
    Catalog,
    GraspRecord,
    Material,
    ObjectMeta,
    Shape,
    clean,
    frame_indices,
    with_estimates,
    write_catalog,
)
from .errors import ComplianceError, MissingFile, PhysicsError
from .physics import ContactParams, estimate, gent_shoreA_to_young, shore00_to_young

log = logging.getLogger(__name__)

ALIASES = {
    "object_id": ("object_id", "object", "id", "obj_id"),
    "name": ("name", "object_name", "label"),
    "shape": ("shape", "geometry"),
    "material": ("material", "category", "material_type"),
    "modulus": ("young_modulus_pa", "youngs_modulus_pa", "young_modulus", "modulus_pa", "e_pa", "e"),
    "shore_00": ("shore_00", "shore00", "shore_oo", "hardness_00"),
    "shore_a": ("shore_a", "shorea", "hardness_a"),
    "force": ("force_n", "force", "normal_force", "f"),
    "width": ("width_m", "width", "gripper_width", "w"),
}
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")


@dataclass
class IngestResult:
    catalog: Catalog
    failures: list[tuple[str, str]] = field(default_factory=list)  # (item, reason)
    raw_grasps: int = 0


def _column(fieldnames, key: str) -> str | None:
    lookup = {f.strip().lower(): f for f in fieldnames or ()}
    for alias in ALIASES[key]:
        if alias in lookup:
            return lookup[alias]
    return None


def _natural_key(path: Path):
    return [int(t) if t.isdigit() else t for t in re.split(r"(\d+)", path.name.lower())]


def _enum(enum_cls, text: str):
    t = text.strip().lower().replace("_", "").replace("-", "").replace(" ", "")
    for member in enum_cls:
        if member.value.lower().replace("-", "") == t:
            return member
    raise ValueError(f"unknown {enum_cls.__name__.lower()} {text!r}")


def _object_modulus(row: dict, cols: dict) -> float:
    for key, convert in (("modulus", float), ("shore_00", shore00_to_young), ("shore_a", gent_shoreA_to_young)):
        col = cols.get(key)
        cell = (row.get(col) or "").strip() if col else ""
        if cell:
            return convert(float(cell))
    raise ValueError("no modulus or hardness value")


def read_objects(path: Path) -> tuple[list[ObjectMeta], list[tuple[str, str]]]:
    if not path.is_file():
        raise MissingFile(str(path))
    objects, failures = [], []
    with path.open(newline="", encoding="utf-8-sig") as fh:
        reader = csv.DictReader(fh)
        cols = {k: _column(reader.fieldnames, k) for k in ("object_id", "name", "shape", "material", "modulus", "shore_00", "shore_a")}
        if cols["object_id"] is None:
            raise MissingFile(f"{path}: no object id column (tried {ALIASES['object_id']})")
        seen = set()
        for i, row in enumerate(reader, start=2):
            oid = (row.get(cols["object_id"]) or "").strip()
            try:
                if not oid:
                    raise ValueError("empty object id")
                if oid in seen:
                    raise ValueError("duplicate object id")
                meta = ObjectMeta(
                    object_id=oid,
                    name=(row.get(cols["name"]) or oid).strip() if cols["name"] else oid,
                    shape=_enum(Shape, row.get(cols["shape"]) or ""),
                    material=_enum(Material, row.get(cols["material"]) or ""),
                    young_modulus_pa=_object_modulus(row, cols),
                )
            except (ValueError, TypeError, PhysicsError) as exc:
                failures.append((f"objects.csv:{i}", str(exc)))
                continue
            seen.add(oid)
            objects.append(meta)
    return objects, failures


def _read_image(path: Path, size: int | None) -> np.ndarray:
    with Image.open(path) as im:
        im = im.convert("RGB")
        if size is not None and im.size != (size, size):
            im = im.resize((size, size), Image.Resampling.BOX)
        return np.asarray(im, dtype=np.float32) / 255.0


def _read_raw_trajectory(path: Path) -> tuple[np.ndarray, np.ndarray]:
    with path.open(newline="", encoding="utf-8-sig") as fh:
        reader = csv.DictReader(fh)
        fcol, wcol = _column(reader.fieldnames, "force"), _column(reader.fieldnames, "width")
        if fcol is None or wcol is None:
            raise ValueError(f"{path.name}: no force/width columns in {reader.fieldnames}")
        force, width = [], []
        for row in reader:
            f, w = (row.get(fcol) or "").strip(), (row.get(wcol) or "").strip()
            if f and w:
                force.append(float(f))
                width.append(float(w))
    width_arr = np.asarray(width, dtype=np.float64)
    if width_arr.size and np.nanmax(width_arr) > 1.0:
        width_arr = width_arr / 1000.0
    return np.asarray(force, dtype=np.float64), width_arr


def read_raw_grasp(gdir: Path, object_id: str, frame_size: int | None) -> GraspRecord:
    images = sorted((p for p in gdir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES), key=_natural_key)
    if len(images) < 3:
        raise ValueError(f"{len(images)} image(s), need >= 3")
    tables = sorted(p for p in gdir.iterdir() if p.suffix.lower() == ".csv")
    if not tables:
        raise ValueError("no trajectory csv")
    force, width = _read_raw_trajectory(tables[0])
    frames = np.stack([_read_image(images[i], frame_size) for i in frame_indices(len(images))])
    return GraspRecord(
        grasp_id=f"{object_id}__{gdir.name}",
        object_id=object_id,
        frames=frames,
        force_n=force,
        width_m=width,
    )


def _grasp_dirs(raw: Path, object_id: str) -> list[Path]:
    for base in (raw / "grasps" / object_id, raw / object_id):
        if base.is_dir():
            return sorted((p for p in base.iterdir() if p.is_dir()), key=_natural_key)
    return []


def ingest(raw: str | Path, params: ContactParams = ContactParams(), frame_size: int | None = 64) -> IngestResult:
    """Convert a raw dump into a cleaned catalog with analytical estimates."""
    raw = Path(raw)
    objects, failures = read_objects(raw / "objects.csv")
    grasps: list[GraspRecord] = []
    total = 0
    for meta in objects:
        for gdir in _grasp_dirs(raw, meta.object_id):
            total += 1
            try:
                g = read_raw_grasp(gdir, meta.object_id, frame_size)
                g = with_estimates(g, estimate(g, params))
            except (ValueError, OSError, ComplianceError) as exc:
                failures.append((str(gdir.relative_to(raw)), str(exc)))
                continue
            grasps.append(g)
    for item, reason in failures:
        log.warning("ingest skipped %s: %s", item, reason)
    catalog = clean(Catalog({m.object_id: m for m in objects}, grasps))
    log.info("ingested %d of %d grasps, %d objects", len(catalog.grasps), total, len(catalog.objects))
    return IngestResult(catalog, failures, total)


def ingest_to(raw: str | Path, out: str | Path, params: ContactParams = ContactParams(), frame_size: int | None = 64) -> IngestResult:
    result = ingest(raw, params, frame_size)
    write_catalog(out, result.catalog)
    return result
