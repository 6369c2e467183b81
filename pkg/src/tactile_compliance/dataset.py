"""Canonical data types and on-disk dataset layout.

Layout of a dataset root::

    objects.csv                       object_id,name,shape,material,young_modulus_pa
    grasps/<grasp_id>/frames/0.png    8-bit RGB, three frames 0..2
    grasps/<grasp_id>/trajectory.csv  force_n,width_m
    grasps/<grasp_id>/estimates.csv   e_elastic_pa,e_hertz_pa   (optional)
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
from PIL import Image

from .errors import (
    DuplicateObjectId,
    EmptyAfterCleaning,
    MalformedRow,
    MissingFile,
    MissingFrameFile,
    TrajectoryLengthMismatch,
    UnknownObjectId,
)

log = logging.getLogger(__name__)

METADATA_HEADER = ("object_id", "name", "shape", "material", "young_modulus_pa")
TRAJECTORY_HEADER = ("force_n", "width_m")
ESTIMATES_HEADER = ("e_elastic_pa", "e_hertz_pa")

FORCE_THRESHOLD_N = 60.0
FORCE_LIMIT_N = 66.0  # 10% overshoot allowance over the stop threshold
WIDTH_JITTER_M = 1e-4
MIN_CHANGE = 1e-6
MODULUS_RANGE_PA = (1e3, 1e12)


def frame_indices(n_samples: int) -> tuple[int, int, int]:
    """Trajectory samples the three frames correspond to: first, middle, last."""
    return 0, (n_samples - 1) // 2, n_samples - 1


class Shape(str, Enum):
    SPHERE = "Sphere"
    CYLINDER = "Cylinder"
    RECTANGULAR = "Rectangular"
    HEX = "Hex"
    IRREGULAR = "Irregular"


class Material(str, Enum):
    # ordered soft -> hard
    FOAM = "foam"
    RUBBER = "rubber"
    FOOD = "food"
    PLASTIC = "plastic"
    WOOD = "wood"
    GLASS = "glass"
    CERAMIC = "ceramic"
    METAL = "metal"


def _parse_enum(enum_cls, value: str):
    for member in enum_cls:
        if value.strip().lower() == member.value.lower():
            return member
    raise ValueError(f"unknown {enum_cls.__name__.lower()} {value!r}")


@dataclass(frozen=True)
class ObjectMeta:
    object_id: str
    name: str
    shape: Shape
    material: Material
    young_modulus_pa: float

    def __post_init__(self):
        y = self.young_modulus_pa
        if not (math.isfinite(y) and y > 0):
            raise ValueError(f"young_modulus_pa must be positive, got {y}")
        lo, hi = MODULUS_RANGE_PA
        if not lo <= y <= hi:
            raise ValueError(f"young_modulus_pa {y} outside [{lo:g}, {hi:g}]")


@dataclass(frozen=True)
class TactileFrame:
    pixels: np.ndarray  # H x W x 3, float in [0, 1]
    timestamp_index: int


@dataclass(frozen=True)
class AnalyticalEstimate:
    e_elastic_pa: float
    e_hertz_pa: float

    def __post_init__(self):
        for v in (self.e_elastic_pa, self.e_hertz_pa):
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"analytical estimate must be positive and finite, got {v}")


@dataclass(frozen=True, eq=False)
class GraspRecord:
    """One grasp. ``frames`` is a (3, H, W, 3) float32 array in [0, 1]."""

    grasp_id: str
    object_id: str
    frames: np.ndarray
    force_n: np.ndarray
    width_m: np.ndarray
    estimates: AnalyticalEstimate | None = None

    def __post_init__(self):
        if self.frames.ndim != 4 or self.frames.shape[0] != 3 or self.frames.shape[-1] != 3:
            raise ValueError(f"frames must have shape (3, H, W, 3), got {self.frames.shape}")
        if len(self.force_n) != len(self.width_m):
            raise TrajectoryLengthMismatch(
                f"{self.grasp_id}: len(force)={len(self.force_n)} != len(width)={len(self.width_m)}"
            )
        if len(self.force_n) < 2:
            raise TrajectoryLengthMismatch(f"{self.grasp_id}: trajectory needs >= 2 samples")

    def frame(self, i: int) -> TactileFrame:
        return TactileFrame(self.frames[i], i)

    def check_invariants(self) -> list[str]:
        """Return a list of violated invariants (empty when the record is valid)."""
        problems = []
        if self.frames.min() < 0 or self.frames.max() > 1:
            problems.append("pixel values outside [0, 1]")
        if np.any(self.force_n < 0):
            problems.append("negative force")
        if self.force_n.max() > FORCE_LIMIT_N:
            problems.append(f"force peak {self.force_n.max():.2f} N above {FORCE_LIMIT_N} N")
        if np.any(self.width_m <= 0):
            problems.append("non-positive width")
        if np.any(np.diff(self.width_m) > WIDTH_JITTER_M):
            problems.append("width increases by more than jitter tolerance")
        return problems

    def __eq__(self, other):
        if not isinstance(other, GraspRecord):
            return NotImplemented
        return (
            self.grasp_id == other.grasp_id
            and self.object_id == other.object_id
            and self.estimates == other.estimates
            and np.array_equal(self.frames, other.frames)
            and np.array_equal(self.force_n, other.force_n)
            and np.array_equal(self.width_m, other.width_m)
        )


@dataclass(frozen=True)
class Catalog:
    objects: Mapping[str, ObjectMeta]
    grasps: tuple[GraspRecord, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "grasps", tuple(self.grasps))

    def grasp(self, grasp_id: str) -> GraspRecord:
        return self._index[grasp_id]

    @property
    def _index(self) -> dict[str, GraspRecord]:
        idx = self.__dict__.get("_grasp_index")
        if idx is None:
            idx = {g.grasp_id: g for g in self.grasps}
            object.__setattr__(self, "_grasp_index", idx)
        return idx

    def modulus(self, grasp_id: str) -> float:
        return self.objects[self.grasp(grasp_id).object_id].young_modulus_pa

    def grasps_by_object(self) -> dict[str, list[GraspRecord]]:
        out: dict[str, list[GraspRecord]] = {}
        for g in self.grasps:
            out.setdefault(g.object_id, []).append(g)
        return out

    @property
    def has_estimates(self) -> bool:
        return all(g.estimates is not None for g in self.grasps)


# --------------------------------------------------------------------------
# reading


def load_metadata(path: str | Path) -> list[ObjectMeta]:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(str(path))
    objects: list[ObjectMeta] = []
    seen: set[str] = set()
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(METADATA_HEADER) - set(reader.fieldnames or ())
        if missing:
            raise MalformedRow(0, f"header missing columns {sorted(missing)}")
        for i, row in enumerate(reader, start=1):
            try:
                meta = ObjectMeta(
                    object_id=row["object_id"].strip(),
                    name=row["name"].strip(),
                    shape=_parse_enum(Shape, row["shape"]),
                    material=_parse_enum(Material, row["material"]),
                    young_modulus_pa=float(row["young_modulus_pa"]),
                )
            except (ValueError, TypeError, AttributeError) as exc:
                raise MalformedRow(i, str(exc)) from None
            if not meta.object_id:
                raise MalformedRow(i, "empty object_id")
            if meta.object_id in seen:
                raise DuplicateObjectId(meta.object_id)
            seen.add(meta.object_id)
            objects.append(meta)
    return objects


def read_png(path: Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0


def _read_table(path: Path, header: tuple[str, ...]) -> np.ndarray:
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(header) - set(reader.fieldnames or ())
        if missing:
            raise MalformedRow(0, f"{path}: header missing columns {sorted(missing)}")
        rows = []
        for i, row in enumerate(reader, start=1):
            values = []
            for col in header:
                cell = (row.get(col) or "").strip()
                values.append(float(cell) if cell else math.nan)
            rows.append(values)
    return np.asarray(rows, dtype=np.float64).reshape(-1, len(header))


def _read_trajectory(path: Path, grasp_id: str) -> tuple[np.ndarray, np.ndarray]:
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(TRAJECTORY_HEADER) - set(reader.fieldnames or ())
        if missing:
            raise MalformedRow(0, f"{path}: header missing columns {sorted(missing)}")
        force, width = [], []
        for row in reader:
            f, w = (row.get("force_n") or "").strip(), (row.get("width_m") or "").strip()
            if f:
                force.append(float(f))
            if w:
                width.append(float(w))
    if len(force) != len(width):
        raise TrajectoryLengthMismatch(f"{grasp_id}: len(force)={len(force)} != len(width)={len(width)}")
    return np.asarray(force), np.asarray(width)


def _read_estimates(path: Path) -> AnalyticalEstimate | None:
    if not path.is_file():
        return None
    table = _read_table(path, ESTIMATES_HEADER)
    if len(table) == 0 or not np.all(np.isfinite(table[0])) or np.any(table[0] <= 0):
        return None
    return AnalyticalEstimate(float(table[0, 0]), float(table[0, 1]))


def load_grasp_dir(gdir: Path, object_id: str) -> GraspRecord:
    grasp_id = gdir.name
    frame_paths = [gdir / "frames" / f"{i}.png" for i in range(3)]
    absent = [p.name for p in frame_paths if not p.is_file()]
    if absent:
        raise MissingFrameFile(f"{grasp_id}: missing {', '.join(absent)}")
    frames = np.stack([read_png(p) for p in frame_paths])
    if len({f.shape for f in frames}) != 1:
        raise MissingFrameFile(f"{grasp_id}: frames differ in size")
    traj = gdir / "trajectory.csv"
    if not traj.is_file():
        raise MissingFile(str(traj))
    force, width = _read_trajectory(traj, grasp_id)
    return GraspRecord(
        grasp_id=grasp_id,
        object_id=object_id,
        frames=frames,
        force_n=force,
        width_m=width,
        estimates=_read_estimates(gdir / "estimates.csv"),
    )


def _grasp_object_id(gdir: Path) -> str:
    meta = gdir / "object_id"
    if meta.is_file():
        return meta.read_text(encoding="utf-8").strip()
    # grasp ids are "<object_id>__<n>" when no object_id file is present
    return gdir.name.rsplit("__", 1)[0]


def load_grasps(
    path: str | Path,
    objects: Mapping[str, ObjectMeta] | Catalog,
    *,
    strict: bool = False,
    workers: int = 1,
) -> list[GraspRecord]:
    """Load every grasp directory under ``path`` in grasp_id order.

    Grasps whose object is not in ``objects`` are skipped and counted in a
    warning, or raise ``UnknownObjectId`` when ``strict`` is set.
    """
    path = Path(path)
    if not path.is_dir():
        raise MissingFile(str(path))
    if isinstance(objects, Catalog):
        objects = objects.objects
    gdirs = sorted((p for p in path.iterdir() if p.is_dir()), key=lambda p: p.name)
    jobs = []
    unknown = 0
    for gdir in gdirs:
        oid = _grasp_object_id(gdir)
        if oid not in objects:
            if strict:
                raise UnknownObjectId(f"{gdir.name}: {oid}")
            unknown += 1
            continue
        jobs.append((gdir, oid))
    if unknown:
        log.warning("skipped %d grasps referencing unknown objects", unknown)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(lambda job: load_grasp_dir(*job), jobs))
    return [load_grasp_dir(*job) for job in jobs]


def load_catalog(root: str | Path, *, strict: bool = False) -> Catalog:
    root = Path(root)
    objects = {m.object_id: m for m in load_metadata(root / "objects.csv")}
    grasps = load_grasps(root / "grasps", objects, strict=strict)
    return Catalog(objects, grasps)


# --------------------------------------------------------------------------
# writing


def write_png(path: Path, pixels: np.ndarray) -> None:
    data = np.clip(np.rint(pixels * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(data, mode="RGB").save(path, format="PNG", optimize=False)


def write_metadata(path: str | Path, objects: Iterable[ObjectMeta]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METADATA_HEADER)
        for m in objects:
            writer.writerow([m.object_id, m.name, m.shape.value, m.material.value, repr(float(m.young_modulus_pa))])


def write_grasp(root: str | Path, grasp: GraspRecord) -> Path:
    gdir = Path(root) / grasp.grasp_id
    (gdir / "frames").mkdir(parents=True, exist_ok=True)
    for i in range(3):
        write_png(gdir / "frames" / f"{i}.png", grasp.frames[i])
    (gdir / "object_id").write_text(grasp.object_id + "\n", encoding="utf-8")
    with (gdir / "trajectory.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRAJECTORY_HEADER)
        for f, w in zip(grasp.force_n, grasp.width_m):
            writer.writerow([repr(float(f)), repr(float(w))])
    est = gdir / "estimates.csv"
    if grasp.estimates is not None:
        with est.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(ESTIMATES_HEADER)
            writer.writerow([repr(grasp.estimates.e_elastic_pa), repr(grasp.estimates.e_hertz_pa)])
    elif est.exists():
        est.unlink()
    return gdir


def write_catalog(root: str | Path, catalog: Catalog) -> None:
    root = Path(root)
    (root / "grasps").mkdir(parents=True, exist_ok=True)
    write_metadata(root / "objects.csv", sorted(catalog.objects.values(), key=lambda m: m.object_id))
    for g in catalog.grasps:
        write_grasp(root / "grasps", g)


# --------------------------------------------------------------------------
# cleaning


def _usable(g: GraspRecord) -> bool:
    if g.estimates is None:
        return False
    if np.ptp(g.force_n) < MIN_CHANGE or np.ptp(g.width_m) < MIN_CHANGE:
        return False
    return bool(np.all(np.isfinite(g.force_n)) and np.all(np.isfinite(g.width_m)))


def clean(catalog: Catalog) -> Catalog:
    """Drop grasps without estimates or without force/width change, then drop
    objects left with fewer than two grasps (and those grasps).

    Objects that never had a grasp are kept as-is.
    """
    kept = [g for g in catalog.grasps if _usable(g)]
    counts: dict[str, int] = {}
    for g in kept:
        counts[g.object_id] = counts.get(g.object_id, 0) + 1
    kept = [g for g in kept if counts[g.object_id] >= 2]
    if not kept:
        raise EmptyAfterCleaning("no usable grasps remain after cleaning")
    grasped = {g.object_id for g in catalog.grasps}
    live = {g.object_id for g in kept}
    objects = {oid: m for oid, m in catalog.objects.items() if oid in live or oid not in grasped}
    return Catalog(objects, kept)


def subset(catalog: Catalog, grasp_ids: Iterable[str]) -> Catalog:
    grasps = [catalog.grasp(gid) for gid in grasp_ids]
    live = {g.object_id for g in grasps}
    return Catalog({k: v for k, v in catalog.objects.items() if k in live}, grasps)


def with_estimates(grasp: GraspRecord, estimates: AnalyticalEstimate | None) -> GraspRecord:
    return replace(grasp, estimates=estimates)
