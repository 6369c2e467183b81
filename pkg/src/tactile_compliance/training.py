"""Training loop, evaluation and the multi-seed experiment runner."""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F

from .dataset import Catalog, frame_indices
from .errors import DivergedTraining, StrategyMismatch, TrainingError
from .metrics import log10_accuracy, mean_std, n_mse, r_squared
from .models import ComplianceModel, GraspBatch, ModelConfig, build_model
from .nn import LossConfig, ParamStore, adam_step, mse_l2_loss
from .pipeline import AugmentConfig, BalanceConfig, SplitMode, SplitSet, augment_batch, balance, split, stream_seed
from .physics import DEFAULT_BOUNDS, ModulusBounds, denormalize_young, normalize_young

log = logging.getLogger(__name__)


class Sampling(str, Enum):
    RANDOM = "Random"
    BALANCED = "Balanced"

    @classmethod
    def parse(cls, value) -> "Sampling":
        if isinstance(value, Sampling):
            return value
        for member in cls:
            if member.value.lower() == str(value).lower():
                return member
        raise ValueError(f"unknown sampling {value!r}")


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    split_mode: SplitMode = SplitMode.SEEN
    sampling: Sampling = Sampling.RANDOM
    balance: BalanceConfig = field(default_factory=BalanceConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    epochs: int = 60
    batch_size: int = 32
    lr: float = 1e-4
    patience: int = 10
    seeds: tuple[int, ...] = tuple(range(10))
    bounds: ModulusBounds = field(default_factory=ModulusBounds)

    def __post_init__(self):
        object.__setattr__(self, "split_mode", SplitMode.parse(self.split_mode))
        object.__setattr__(self, "sampling", Sampling.parse(self.sampling))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if not self.seeds:
            raise ValueError("seeds must be nonempty")
        if self.lr <= 0:
            raise ValueError("lr must be positive")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["model"] = self.model.to_dict()
        d["split_mode"] = self.split_mode.value
        d["sampling"] = self.sampling.value
        d["seeds"] = list(self.seeds)
        d["balance"]["bucket_edges"] = list(self.balance.bucket_edges)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        if "model" in d:
            d["model"] = ModelConfig.from_dict(d["model"])
        if "balance" in d:
            bal = dict(d["balance"])
            if "bucket_edges" in bal:
                bal["bucket_edges"] = tuple(float(e) for e in bal["bucket_edges"])
            d["balance"] = BalanceConfig(**bal)
        if "augment" in d:
            d["augment"] = AugmentConfig(**d["augment"])
        if "bounds" in d:
            d["bounds"] = ModulusBounds(**d["bounds"])
        return cls(**d)


# --------------------------------------------------------------------------
# feature preparation


@dataclass
class PreparedData:
    """Model-ready arrays for a catalog, rows indexed by ``row[grasp_id]``.

    frames: (N, 3, S, S, 3) float32 in [0, 1]; force, width: (N, 3) scaled;
    estimates: (N, 2) normalized or None; targets: (N,) normalized.
    """

    grasp_ids: list[str]
    frames: np.ndarray
    force: np.ndarray
    width: np.ndarray
    estimates: np.ndarray | None
    targets: np.ndarray
    truths_pa: np.ndarray

    def __post_init__(self):
        self.row = {gid: i for i, gid in enumerate(self.grasp_ids)}


def _resize(frames: np.ndarray, size: int) -> np.ndarray:
    if frames.shape[1] == size and frames.shape[2] == size:
        return frames.astype(np.float32, copy=False)
    t = torch.from_numpy(np.ascontiguousarray(np.moveaxis(frames, -1, 1), dtype=np.float32))
    t = F.interpolate(t, size=(size, size), mode="area" if frames.shape[1] >= size else "bilinear")
    return np.ascontiguousarray(np.moveaxis(t.numpy(), 1, -1))


FORCE_SCALE_N = 60.0
# width enters as closure since the first sample, in centimetres; the raw
# ratio W/W0 hides the indentation behind the spread of initial openings
WIDTH_SCALE_M = 0.01


def prepare(catalog: Catalog, image_size: int, bounds: ModulusBounds = DEFAULT_BOUNDS) -> PreparedData:
    grasps = sorted(catalog.grasps, key=lambda g: g.grasp_id)
    n = len(grasps)
    frames = np.empty((n, 3, image_size, image_size, 3), dtype=np.float32)
    force = np.empty((n, 3), dtype=np.float32)
    width = np.empty((n, 3), dtype=np.float32)
    has_est = all(g.estimates is not None for g in grasps)
    est = np.empty((n, 2), dtype=np.float32) if has_est else None
    truths = np.empty(n, dtype=np.float64)
    for i, g in enumerate(grasps):
        frames[i] = _resize(g.frames, image_size)
        idx = list(frame_indices(len(g.force_n)))
        force[i] = g.force_n[idx] / FORCE_SCALE_N
        width[i] = (g.width_m[0] - g.width_m[idx]) / WIDTH_SCALE_M
        if est is not None:
            est[i] = normalize_young([g.estimates.e_elastic_pa, g.estimates.e_hertz_pa], bounds)
        truths[i] = catalog.objects[g.object_id].young_modulus_pa
    targets = normalize_young(truths, bounds).astype(np.float32)
    return PreparedData([g.grasp_id for g in grasps], frames, force, width, est, targets, truths)


def make_batch(data: PreparedData, rows: Sequence[int], cfg: ModelConfig, frames: np.ndarray | None = None) -> GraspBatch:
    rows = np.asarray(rows, dtype=np.int64)
    pix = data.frames[rows] if frames is None else frames
    est = None
    if cfg.strategy.uses_estimates:
        if data.estimates is None:
            raise StrategyMismatch("strategy ALL needs analytical estimates for every grasp")
        est = torch.from_numpy(data.estimates[rows])
    return GraspBatch(
        frames=torch.from_numpy(np.ascontiguousarray(np.moveaxis(pix, -1, 2))),
        force=torch.from_numpy(data.force[rows]),
        width=torch.from_numpy(data.width[rows]),
        estimates=est,
        targets=torch.from_numpy(data.targets[rows]),
    )


# --------------------------------------------------------------------------
# training


@dataclass
class TrainResult:
    model: ComplianceModel
    history: list[dict]
    best_epoch: int
    best_val_loss: float
    seed: int


def _augmented(data: PreparedData, ids: Sequence[str], cfg: AugmentConfig, seed: int, salt: int) -> np.ndarray:
    rows = [data.row[g] for g in ids]
    return augment_batch(data.frames[rows], cfg, seed, ids, [salt + k for k in range(len(ids))])


def predict(model: ComplianceModel, data: PreparedData, ids: Sequence[str], batch_size: int = 64) -> np.ndarray:
    """Normalized predictions for ``ids`` in evaluation mode."""
    model.eval()
    out = []
    with torch.no_grad():
        for start in range(0, len(ids), batch_size):
            rows = [data.row[g] for g in ids[start : start + batch_size]]
            out.append(model(make_batch(data, rows, model.cfg)).numpy())
    return np.concatenate(out).astype(np.float64) if out else np.empty(0)


def _check_finite(value: float, what: str, epoch: int) -> None:
    if not math.isfinite(value):
        raise DivergedTraining(f"{what} became {value} at epoch {epoch}")


def train(
    run: RunConfig,
    catalog: Catalog,
    split_set: SplitSet,
    seed: int,
    data: PreparedData | None = None,
) -> TrainResult:
    """Train one model; keeps the parameters with the lowest validation loss."""
    torch.use_deterministic_algorithms(True)
    mcfg = run.model
    if mcfg.strategy.uses_estimates and not catalog.has_estimates:
        raise StrategyMismatch("strategy ALL needs analytical estimates for every grasp")
    if data is None:
        data = prepare(catalog, mcfg.image_size, run.bounds)
    train_ids = list(split_set.train)
    val_ids = list(split_set.validation)
    if not train_ids:
        raise TrainingError("empty training split")
    if run.sampling is Sampling.BALANCED:
        train_ids = balance(train_ids, catalog, run.balance, stream_seed(seed, "balance-train"))
        if val_ids:
            val_ids = balance(val_ids, catalog, run.balance, stream_seed(seed, "balance-val"))

    model = build_model(mcfg, seed)
    store = ParamStore(model)
    val_frames = _augmented(data, val_ids, run.augment, seed, salt=-(10**6)) if val_ids else None
    val_rows = [data.row[g] for g in val_ids]

    best_state = store.state_dict()
    best_loss, best_epoch, stale = math.inf, -1, 0
    history: list[dict] = []
    for epoch in range(run.epochs):
        model.train()
        order = np.random.default_rng(stream_seed(seed, "epoch", epoch)).permutation(len(train_ids))
        total, count = 0.0, 0
        for start in range(0, len(order), run.batch_size):
            ids = [train_ids[i] for i in order[start : start + run.batch_size]]
            frames = _augmented(data, ids, run.augment, seed, salt=epoch * 1_000_003 + start)
            batch = make_batch(data, [data.row[g] for g in ids], mcfg, frames)
            store.zero_grad()
            preds = model(batch)
            loss = mse_l2_loss(preds, batch.targets, store, mcfg.loss)
            loss.backward()
            value = loss.item()
            _check_finite(value, "training loss", epoch)
            adam_step(store, lr=run.lr)
            total += value * len(ids)
            count += len(ids)
        train_loss = total / count

        if val_ids:
            val_loss = _batched_mse(model, data, val_rows, mcfg, val_frames)
            _check_finite(val_loss, "validation loss", epoch)
        else:
            val_loss = train_loss
        history.append({"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss})
        log.debug("seed %d epoch %d train %.5f val %.5f", seed, epoch, train_loss, val_loss)
        if val_loss < best_loss:
            best_loss, best_epoch, stale = val_loss, epoch, 0
            best_state = store.state_dict()
        else:
            stale += 1
            if stale >= run.patience:
                break
    store.load_state_dict(best_state)
    model.eval()
    return TrainResult(model, history, best_epoch, best_loss, seed)


def _batched_mse(model, data, rows, mcfg, frames, batch_size=128) -> float:
    model.eval()
    sse = 0.0
    with torch.no_grad():
        for start in range(0, len(rows), batch_size):
            sl = slice(start, start + batch_size)
            batch = make_batch(data, rows[sl], mcfg, frames[sl])
            sse += float(torch.sum((model(batch) - batch.targets) ** 2))
    return sse / len(rows)


# --------------------------------------------------------------------------
# evaluation


@dataclass(frozen=True)
class PredictionRow:
    grasp_id: str
    truth_pa: float
    pred_pa: float
    material: str
    shape: str
    se: float  # squared error of normalized values
    seed: int = 0


def evaluate(
    model: ComplianceModel,
    catalog: Catalog,
    ids: Sequence[str],
    bounds: ModulusBounds = DEFAULT_BOUNDS,
    seed: int = 0,
    data: PreparedData | None = None,
) -> list[PredictionRow]:
    if data is None:
        data = prepare(catalog, model.cfg.image_size, bounds)
    ids = sorted(set(ids))
    preds_norm = np.clip(predict(model, data, ids), 0.0, 1.0)
    rows = []
    for gid, p in zip(ids, preds_norm):
        meta = catalog.objects[catalog.grasp(gid).object_id]
        truth_norm = normalize_young(meta.young_modulus_pa, bounds)
        rows.append(
            PredictionRow(
                grasp_id=gid,
                truth_pa=meta.young_modulus_pa,
                pred_pa=float(denormalize_young(p, bounds)),
                material=meta.material.value,
                shape=meta.shape.value,
                se=float((p - truth_norm) ** 2),
                seed=seed,
            )
        )
    return rows


METRICS = ("log10_accuracy", "n_mse", "r_squared")


def row_metrics(rows: Sequence[PredictionRow], bounds: ModulusBounds = DEFAULT_BOUNDS) -> dict[str, float | None]:
    preds = [r.pred_pa for r in rows]
    truths = [r.truth_pa for r in rows]
    out: dict[str, float | None] = {
        "log10_accuracy": log10_accuracy(preds, truths),
        "n_mse": n_mse(preds, truths, bounds),
    }
    try:
        out["r_squared"] = r_squared(normalize_young(preds, bounds), normalize_young(truths, bounds))
    except ValueError:
        out["r_squared"] = None
    return out


@dataclass
class EvalReport:
    rows: list[PredictionRow]
    per_seed: dict[int, dict[str, float | None]]
    aggregates: dict[str, dict[str, float]]
    failures: dict[int, str] = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    bounds: ModulusBounds = field(default_factory=ModulusBounds)
    histories: dict[int, list[dict]] = field(default_factory=dict)

    @classmethod
    def from_rows(cls, rows, bounds=DEFAULT_BOUNDS, failures=None, config=None, histories=None) -> "EvalReport":
        seeds = sorted({r.seed for r in rows})
        per_seed = {s: row_metrics([r for r in rows if r.seed == s], bounds) for s in seeds}
        aggregates = {}
        for m in METRICS:
            mean, std = mean_std([per_seed[s][m] for s in seeds])
            aggregates[m] = {"mean": mean, "std": std}
        return cls(list(rows), per_seed, aggregates, dict(failures or {}), dict(config or {}), bounds, dict(histories or {}))

    def to_dict(self) -> dict:
        return {
            "aggregates": self.aggregates,
            "per_seed": {str(k): v for k, v in self.per_seed.items()},
            "failures": {str(k): v for k, v in self.failures.items()},
            "num_rows": len(self.rows),
            "bounds": dataclasses.asdict(self.bounds),
            "config": self.config,
        }


def constant_baseline_nmse(catalog: Catalog, split_set: SplitSet, bounds: ModulusBounds = DEFAULT_BOUNDS) -> float:
    """N-MSE of predicting the mean normalized training target for every test grasp."""
    train_t = normalize_young([catalog.modulus(g) for g in split_set.train], bounds)
    test_t = normalize_young([catalog.modulus(g) for g in split_set.test], bounds)
    return float(np.mean((test_t - np.mean(train_t)) ** 2))


def multi_seed(
    run: RunConfig,
    catalog: Catalog,
    split_set: SplitSet | None = None,
    data: PreparedData | None = None,
    keep_models: bool = False,
) -> EvalReport | tuple[EvalReport, dict[int, TrainResult]]:
    """Train once per seed and evaluate on the untouched test split.

    Without ``split_set`` each seed draws its own split with that seed.
    """
    if data is None:
        data = prepare(catalog, run.model.image_size, run.bounds)
    rows: list[PredictionRow] = []
    failures: dict[int, str] = {}
    histories: dict[int, list[dict]] = {}
    results: dict[int, TrainResult] = {}
    for seed in run.seeds:
        sp = split_set if split_set is not None else split(catalog, run.split_mode, seed)
        try:
            result = train(run, catalog, sp, seed, data)
        except TrainingError as exc:
            log.warning("seed %d failed: %s", seed, exc)
            failures[seed] = str(exc)
            continue
        histories[seed] = result.history
        rows.extend(evaluate(result.model, catalog, sp.test, run.bounds, seed, data))
        if keep_models:
            results[seed] = result
    if not rows:
        raise TrainingError(f"all seeds failed: {failures}")
    report = EvalReport.from_rows(rows, run.bounds, failures, run.to_dict(), histories)
    return (report, results) if keep_models else report
