"""Splitting, bucketed oversampling and frame augmentation."""

from __future__ import annotations

import json
import math
import zlib
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import Catalog, TactileFrame
from .errors import TooFewObjects

TEST_FRACTION = 0.2
VALIDATION_FRACTION = 0.2


class SplitMode(str, Enum):
    SEEN = "SeenObject"
    UNSEEN = "UnseenObject"

    @classmethod
    def parse(cls, value: "str | SplitMode") -> "SplitMode":
        if isinstance(value, SplitMode):
            return value
        key = value.strip().lower()
        aliases = {"seen": cls.SEEN, "seenobject": cls.SEEN, "unseen": cls.UNSEEN, "unseenobject": cls.UNSEEN}
        if key not in aliases:
            raise ValueError(f"unknown split mode {value!r}")
        return aliases[key]


@dataclass(frozen=True)
class SplitSet:
    mode: SplitMode
    train: tuple[str, ...]
    validation: tuple[str, ...]
    test: tuple[str, ...]

    def __post_init__(self):
        for name in ("train", "validation", "test"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        a, b, c = set(self.train), set(self.validation), set(self.test)
        if a & b or a & c or b & c:
            raise ValueError("split lists overlap")

    def to_json(self) -> str:
        return json.dumps(
            {"mode": self.mode.value, "train": list(self.train), "validation": list(self.validation), "test": list(self.test)},
            indent=1,
        )

    @classmethod
    def from_json(cls, text: str) -> "SplitSet":
        raw = json.loads(text)
        return cls(SplitMode.parse(raw["mode"]), raw["train"], raw["validation"], raw["test"])

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "SplitSet":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def _partition(items: list[str], rng: np.random.Generator) -> tuple[list[str], list[str], list[str]]:
    order = [items[i] for i in rng.permutation(len(items))]
    n_test = math.floor(TEST_FRACTION * len(order))
    n_val = math.floor(VALIDATION_FRACTION * (len(order) - n_test))
    test = order[:n_test]
    val = order[n_test : n_test + n_val]
    train = order[n_test + n_val :]
    return train, val, test


def split(catalog: Catalog, mode: SplitMode | str, rng_seed: int) -> SplitSet:
    """20% test, 20% of the remainder validation, rest train.

    In UnseenObject mode the fractions apply to objects and every grasp
    follows its object.
    """
    mode = SplitMode.parse(mode)
    rng = np.random.default_rng(rng_seed)
    if mode is SplitMode.SEEN:
        ids = sorted(g.grasp_id for g in catalog.grasps)
        train, val, test = _partition(ids, rng)
        return SplitSet(mode, sorted(train), sorted(val), sorted(test))

    by_object = catalog.grasps_by_object()
    objects = sorted(by_object)
    if len(objects) < 5:
        raise TooFewObjects(f"UnseenObject split needs >= 5 objects, got {len(objects)}")
    train_o, val_o, test_o = _partition(objects, rng)

    def grasps_of(oids):
        return sorted(g.grasp_id for oid in oids for g in by_object[oid])

    return SplitSet(mode, grasps_of(train_o), grasps_of(val_o), grasps_of(test_o))


# --------------------------------------------------------------------------
# balancing


@dataclass(frozen=True)
class BalanceConfig:
    t_balance: int = 500
    bucket_edges: tuple[float, ...] = tuple(float(e) for e in range(3, 13))

    def __post_init__(self):
        if self.t_balance < 1:
            raise ValueError("t_balance must be >= 1")
        if len(self.bucket_edges) != 10 or list(self.bucket_edges) != sorted(self.bucket_edges):
            raise ValueError("bucket_edges must be 10 increasing log10 edges (nine buckets)")


def bucket_index(y_pa: float, cfg: BalanceConfig) -> int:
    """Bucket of a modulus; values outside the edges go to the end buckets."""
    edges = cfg.bucket_edges
    i = int(np.searchsorted(edges, math.log10(y_pa), side="right")) - 1
    return min(max(i, 0), len(edges) - 2)


def bucket_counts(grasp_ids: Sequence[str], catalog: Catalog, cfg: BalanceConfig) -> list[int]:
    counts = [0] * (len(cfg.bucket_edges) - 1)
    for gid in grasp_ids:
        counts[bucket_index(catalog.modulus(gid), cfg)] += 1
    return counts


def balance(grasp_ids: Sequence[str], catalog: Catalog, cfg: BalanceConfig, rng_seed: int) -> list[str]:
    """Oversample each nonempty bucket with replacement up to ``t_balance``.

    Every original id is kept; only train/validation lists should be passed.
    """
    rng = np.random.default_rng(rng_seed)
    buckets: list[list[str]] = [[] for _ in range(len(cfg.bucket_edges) - 1)]
    for gid in grasp_ids:
        buckets[bucket_index(catalog.modulus(gid), cfg)].append(gid)
    out: list[str] = []
    for members in buckets:
        out.extend(members)
        short = cfg.t_balance - len(members)
        if members and short > 0:
            picks = rng.integers(0, len(members), size=short)
            out.extend(members[i] for i in picks)
    return [out[i] for i in rng.permutation(len(out))]


# --------------------------------------------------------------------------
# augmentation


@dataclass(frozen=True)
class AugmentConfig:
    flip_prob: float = 0.5
    gaussian_sigma: float = 0.02
    brightness: float = 0.4
    contrast: float = 0.4
    saturation: float = 0.4
    hue: float = 0.1

    def __post_init__(self):
        if not 0 <= self.flip_prob <= 1:
            raise ValueError("flip_prob must lie in [0, 1]")
        if not 0 <= self.gaussian_sigma <= 1:
            raise ValueError("gaussian_sigma must lie in [0, 1]")
        for name in ("brightness", "contrast", "saturation", "hue"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} range must be nonnegative")
        if self.hue > 0.5:
            raise ValueError("hue range must be <= 0.5")

    @classmethod
    def identity(cls) -> "AugmentConfig":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class GraspAugmentation:
    """Random decisions shared by the three frames of one grasp."""

    flip_h: bool
    flip_v: bool
    brightness: float = 1.0
    contrast: float = 1.0
    saturation: float = 1.0
    hue: float = 0.0


def stream_seed(*parts) -> int:
    """Stable 64-bit seed derived from arbitrary parts (ints or strings)."""
    words = []
    for p in parts:
        if isinstance(p, str):
            words.append(zlib.crc32(p.encode("utf-8")))
        else:
            words.append(int(p) & 0xFFFFFFFF)
    return int(np.random.SeedSequence(words).generate_state(2, dtype=np.uint64)[0])


def draw_augmentation(cfg: AugmentConfig, rng: np.random.Generator) -> GraspAugmentation:
    u = rng.random(2)

    def factor(r):
        return float(rng.uniform(max(0.0, 1 - r), 1 + r)) if r > 0 else 1.0

    return GraspAugmentation(
        flip_h=bool(u[0] < cfg.flip_prob),
        flip_v=bool(u[1] < cfg.flip_prob),
        brightness=factor(cfg.brightness),
        contrast=factor(cfg.contrast),
        saturation=factor(cfg.saturation),
        hue=float(rng.uniform(-cfg.hue, cfg.hue)) if cfg.hue > 0 else 0.0,
    )


def _flip(pixels: np.ndarray, aug: GraspAugmentation) -> np.ndarray:
    """pixels: (..., H, W, 3)."""
    if aug.flip_h:
        pixels = pixels[..., :, ::-1, :]
    if aug.flip_v:
        pixels = pixels[..., ::-1, :, :]
    return pixels


_LUMA = np.array([0.299, 0.587, 0.114], dtype=np.float32)
_RGB_TO_YIQ = np.array(
    [[0.299, 0.587, 0.114], [0.596, -0.274, -0.322], [0.211, -0.523, 0.312]], dtype=np.float64
)
_YIQ_TO_RGB = np.linalg.inv(_RGB_TO_YIQ)


def _hue_matrix(shift: float) -> np.ndarray:
    """RGB -> RGB matrix rotating chroma by ``shift`` turns in YIQ space."""
    a = 2 * np.pi * shift
    rot = np.array([[1, 0, 0], [0, np.cos(a), -np.sin(a)], [0, np.sin(a), np.cos(a)]])
    return (_YIQ_TO_RGB @ rot @ _RGB_TO_YIQ).astype(np.float32)


def jitter(pixels: np.ndarray, factors: Sequence[GraspAugmentation]) -> np.ndarray:
    """Color jitter a (B, ..., H, W, 3) stack, one factor set per leading item.

    Brightness scales, contrast blends with the per-image mean luma,
    saturation blends with per-pixel luma, hue rotates chroma; each step is
    clamped to [0, 1].
    """
    b = len(factors)
    shape = (b,) + (1,) * (pixels.ndim - 1)
    bright = np.array([f.brightness for f in factors], dtype=np.float32).reshape(shape)
    contrast = np.array([f.contrast for f in factors], dtype=np.float32).reshape(shape)
    sat = np.array([f.saturation for f in factors], dtype=np.float32).reshape(shape)
    out = np.clip(pixels * bright, 0.0, 1.0)
    luma = out @ _LUMA
    mean = luma.mean(axis=(-2, -1), keepdims=True)[..., None]
    out = np.clip(contrast * out + (1 - contrast) * mean, 0.0, 1.0)
    out = np.clip(sat * out + (1 - sat) * (out @ _LUMA)[..., None], 0.0, 1.0)
    if any(f.hue != 0.0 for f in factors):
        mats = np.stack([_hue_matrix(f.hue) for f in factors])  # (B, 3, 3)
        flat = out.reshape(b, -1, 3)
        out = np.clip(np.einsum("bnc,bdc->bnd", flat, mats).reshape(out.shape), 0.0, 1.0)
    return out.astype(pixels.dtype, copy=False)


def _is_identity(aug: GraspAugmentation) -> bool:
    return (aug.brightness, aug.contrast, aug.saturation, aug.hue) == (1.0, 1.0, 1.0, 0.0)


def _noise(pixels: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    if sigma <= 0:
        return pixels
    return np.clip(pixels + rng.normal(0.0, sigma, size=pixels.shape).astype(pixels.dtype), 0.0, 1.0)


def augment(
    frame: TactileFrame,
    cfg: AugmentConfig,
    rng_seed: int,
    decision: GraspAugmentation | None = None,
) -> TactileFrame:
    """Flip, add Gaussian noise, then color-jitter one frame.

    Pass the grasp-level ``decision`` so all frames of a grasp share flips and
    jitter factors; otherwise one is drawn from ``rng_seed``.
    """
    rng = np.random.default_rng(rng_seed)
    if decision is None:
        decision = draw_augmentation(cfg, rng)
    out = _noise(_flip(frame.pixels, decision), cfg.gaussian_sigma, rng)
    if not _is_identity(decision):
        out = jitter(out[None], [decision])[0]
    return TactileFrame(np.ascontiguousarray(out, dtype=frame.pixels.dtype), frame.timestamp_index)


def augment_batch(
    frames: np.ndarray, cfg: AugmentConfig, seed: int, grasp_ids: Sequence[str], draws: Sequence[int]
) -> np.ndarray:
    """Augment a (B, 3, H, W, 3) stack of grasps.

    Grasp ``k`` takes its shared flip/jitter decision from the stream
    (seed, grasp_id, draw) and the noise of frame ``i`` from
    (seed, grasp_id, draw, i), so results do not depend on batch layout.
    """
    out = np.empty_like(frames)
    decisions = []
    for k, (gid, draw) in enumerate(zip(grasp_ids, draws)):
        decision = draw_augmentation(cfg, np.random.default_rng(stream_seed(seed, gid, draw)))
        decisions.append(decision)
        flipped = _flip(frames[k], decision)
        for i in range(frames.shape[1]):
            out[k, i] = _noise(flipped[i], cfg.gaussian_sigma, np.random.default_rng(stream_seed(seed, gid, draw, i)))
    if not all(_is_identity(d) for d in decisions):
        out = jitter(out, decisions)
    return out


def augment_grasp_frames(frames: np.ndarray, cfg: AugmentConfig, seed: int, grasp_id: str, draw: int = 0) -> np.ndarray:
    """Augment the (3, H, W, 3) frames of one grasp; see ``augment_batch``."""
    return augment_batch(frames[None], cfg, seed, [grasp_id], [draw])[0]
