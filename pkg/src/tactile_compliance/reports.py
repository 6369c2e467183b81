"""Analysis reports over per-grasp predictions and their on-disk formats."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import UnknownKey
from .metrics import log10_accuracy, mean_std, n_mse
from .physics import DEFAULT_BOUNDS, SENSOR_MODULUS_PA, ModulusBounds
from .pipeline import stream_seed
from .training import EvalReport, PredictionRow

PREDICTION_FIELDS = ("grasp_id", "truth_pa", "pred_pa", "material", "shape", "se", "seed")
BREAKDOWN_KEYS = ("material", "shape")


# --------------------------------------------------------------------------
# rolling windows


@dataclass(frozen=True)
class WindowResult:
    log10_lo: float
    log10_hi: float
    available: dict[int, int]  # rows per seed before undersampling
    used: dict[int, int]  # rows per seed after undersampling
    n_mse: dict[int, float]  # per seed; missing seeds had no rows
    empty: bool

    @property
    def mean_std(self) -> tuple[float, float]:
        return mean_std(list(self.n_mse.values()))


@dataclass(frozen=True)
class WindowReport:
    windows: list[WindowResult]

    @property
    def complete(self) -> bool:
        return not any(w.empty for w in self.windows)

    def nonempty(self) -> list[WindowResult]:
        return [w for w in self.windows if not w.empty]


def rolling_window_report(
    rows: Sequence[PredictionRow],
    windows: int = 7,
    span_decades: float = 3.0,
    first_decade: float = 3.0,
    seed: int = 0,
) -> WindowReport:
    """Per-window N-MSE over sliding decade windows [10^(a+k), 10^(a+k+span)).

    Within each prediction seed, every nonempty window is undersampled to the
    size of the smallest nonempty one. N-MSE is normalized with the window's
    own bounds so the error is limited to the span of the window. Windows
    with no rows at all are flagged empty.
    """
    seeds = sorted({r.seed for r in rows})
    log_truth = {id(r): math.log10(r.truth_pa) for r in rows}
    edges = [(first_decade + k, first_decade + k + span_decades) for k in range(windows)]

    members: dict[tuple[int, int], list[PredictionRow]] = {}
    for s in seeds:
        seed_rows = sorted((r for r in rows if r.seed == s), key=lambda r: r.grasp_id)
        for k, (lo, hi) in enumerate(edges):
            members[(s, k)] = [r for r in seed_rows if lo <= log_truth[id(r)] < hi]

    results = []
    for k, (lo, hi) in enumerate(edges):
        available, used, scores = {}, {}, {}
        for s in seeds:
            counts = [len(members[(s, j)]) for j in range(windows) if members[(s, j)]]
            group = members[(s, k)]
            available[s] = len(group)
            if not group:
                continue
            n = min(counts)
            rng = np.random.default_rng(stream_seed(seed, "window", s, k))
            picked = [group[i] for i in sorted(rng.choice(len(group), size=n, replace=False))]
            used[s] = n
            scores[s] = n_mse([r.pred_pa for r in picked], [r.truth_pa for r in picked], ModulusBounds(lo, hi))
        results.append(WindowResult(lo, hi, available, used, scores, empty=not scores))
    return WindowReport(results)


# --------------------------------------------------------------------------
# breakdown by material or shape


@dataclass(frozen=True)
class ScatterPoint:
    grasp_id: str
    seed: int
    truth_pa: float
    pred_pa: float
    group: str
    se: float
    inside_band: bool
    sensor_pa: float = SENSOR_MODULUS_PA


@dataclass(frozen=True)
class BreakdownReport:
    key: str
    groups: dict[str, dict[str, float]]  # group -> count, log10_accuracy, n_mse
    overall: dict[str, float]
    scatter: list[ScatterPoint]


def _group_of(row: PredictionRow, key: str) -> str:
    if key not in BREAKDOWN_KEYS:
        raise UnknownKey(f"unknown breakdown key {key!r}; expected one of {BREAKDOWN_KEYS}")
    return getattr(row, key)


def _metrics(rows: Sequence[PredictionRow], bounds: ModulusBounds) -> dict[str, float]:
    preds = [r.pred_pa for r in rows]
    truths = [r.truth_pa for r in rows]
    return {"count": len(rows), "log10_accuracy": log10_accuracy(preds, truths), "n_mse": n_mse(preds, truths, bounds)}


def breakdown_report(rows: Sequence[PredictionRow], key: str, bounds: ModulusBounds = DEFAULT_BOUNDS) -> BreakdownReport:
    """Per-group metrics plus a scatter table.

    A point is inside the band when its squared error is at most the overall
    mean squared error (ties count as inside).
    """
    if key not in BREAKDOWN_KEYS:
        raise UnknownKey(f"unknown breakdown key {key!r}; expected one of {BREAKDOWN_KEYS}")
    groups: dict[str, list[PredictionRow]] = {}
    for r in rows:
        groups.setdefault(_group_of(r, key), []).append(r)
    overall = _metrics(rows, bounds)
    mse = float(np.mean([r.se for r in rows]))
    scatter = [
        ScatterPoint(r.grasp_id, r.seed, r.truth_pa, r.pred_pa, _group_of(r, key), r.se, r.se <= mse)
        for r in sorted(rows, key=lambda r: (r.seed, r.grasp_id))
    ]
    return BreakdownReport(key, {g: _metrics(v, bounds) for g, v in sorted(groups.items())}, overall, scatter)


# --------------------------------------------------------------------------
# scatter plot


def band_half_width_decades(mse: float, bounds: ModulusBounds = DEFAULT_BOUNDS) -> float:
    """Half width, in decades, of the band |normalized residual| <= sqrt(mse)."""
    return math.sqrt(mse) * (bounds.log10_max - bounds.log10_min)


def write_scatter_svg(
    rows: Sequence[PredictionRow], path: str | Path, key: str = "material", bounds: ModulusBounds = DEFAULT_BOUNDS
) -> Path:
    """Log-log predicted vs true scatter with the truth diagonal, the sensor
    modulus line and the mean-error band. Output bytes depend only on the data."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    path = Path(path)
    mse = float(np.mean([r.se for r in rows]))
    half = band_half_width_decades(mse, bounds)
    lo, hi = bounds.log10_min, bounds.log10_max
    with matplotlib.rc_context({"svg.hashsalt": "tactile-compliance", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(5, 5))
        xs = np.array([lo, hi])
        ax.fill_between(10**xs, 10 ** (xs - half), 10 ** (xs + half), color="0.85", label="mean SE band")
        ax.plot(10**xs, 10**xs, color="k", lw=1, label="truth")
        ax.axvline(SENSOR_MODULUS_PA, color="tab:red", ls="--", lw=1, label="sensor modulus")
        groups = sorted({_group_of(r, key) for r in rows})
        for g in groups:
            sel = [r for r in rows if _group_of(r, key) == g]
            ax.scatter([r.truth_pa for r in sel], [r.pred_pa for r in sel], s=8, label=g)
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlim(10**lo, 10**hi)
        ax.set_ylim(10**lo, 10**hi)
        ax.set_xlabel("true modulus (Pa)")
        ax.set_ylabel("predicted modulus (Pa)")
        ax.legend(fontsize=7, loc="upper left")
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path


# --------------------------------------------------------------------------
# persistence


def _fmt(x: float) -> str:
    return repr(float(x))


def write_predictions(rows: Sequence[PredictionRow], path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PREDICTION_FIELDS)
        for r in sorted(rows, key=lambda r: (r.seed, r.grasp_id)):
            w.writerow([r.grasp_id, _fmt(r.truth_pa), _fmt(r.pred_pa), r.material, r.shape, _fmt(r.se), r.seed])
    return path


def read_predictions(path: str | Path) -> list[PredictionRow]:
    """Read predictions.csv; a missing ``seed`` column means seed 0."""
    from .errors import MalformedRow

    rows = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(PREDICTION_FIELDS[:-1]) - set(reader.fieldnames or ())
        if missing:
            raise MalformedRow(1, f"missing columns {sorted(missing)}")
        for i, rec in enumerate(reader, start=2):
            try:
                rows.append(
                    PredictionRow(
                        grasp_id=rec["grasp_id"],
                        truth_pa=float(rec["truth_pa"]),
                        pred_pa=float(rec["pred_pa"]),
                        material=rec["material"],
                        shape=rec["shape"],
                        se=float(rec["se"]),
                        seed=int(rec.get("seed") or 0),
                    )
                )
            except ValueError as exc:
                raise MalformedRow(i, str(exc)) from exc
    return rows


def write_windows(report: WindowReport, path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["log10_lo", "log10_hi", "seed", "available", "used", "n_mse", "empty"])
        for win in report.windows:
            for s in sorted(win.available):
                score = win.n_mse.get(s)
                w.writerow(
                    [_fmt(win.log10_lo), _fmt(win.log10_hi), s, win.available[s], win.used.get(s, 0),
                     "" if score is None else _fmt(score), int(win.empty)]
                )
    return path


def write_breakdown(report: BreakdownReport, path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["grasp_id", "seed", "truth_pa", "pred_pa", report.key, "se", "inside_band", "sensor_pa",
                    "group_log10_accuracy", "group_n_mse"])
        for p in report.scatter:
            g = report.groups[p.group]
            w.writerow([p.grasp_id, p.seed, _fmt(p.truth_pa), _fmt(p.pred_pa), p.group, _fmt(p.se), int(p.inside_band),
                        _fmt(p.sensor_pa), _fmt(g["log10_accuracy"]), _fmt(g["n_mse"])])
    return path


def windows_summary(report: WindowReport) -> list[dict]:
    out = []
    for w in report.windows:
        mean, std = w.mean_std
        out.append({"log10_lo": w.log10_lo, "log10_hi": w.log10_hi, "empty": w.empty,
                    "n_mse_mean": None if w.empty else mean, "n_mse_std": None if w.empty else std})
    return out


def json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_safe(v) for v in obj]
    return obj


def write_json(obj, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(json_safe(obj), indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return path


def write_report(report: EvalReport, out_dir: str | Path, scatter: bool = True) -> dict[str, Path]:
    """Write report.json, predictions.csv, windows.csv, breakdown_<key>.csv and scatter.svg."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    windows = rolling_window_report(report.rows)
    breakdowns = {k: breakdown_report(report.rows, k, report.bounds) for k in BREAKDOWN_KEYS}
    summary = report.to_dict()
    summary["windows"] = windows_summary(windows)
    summary["breakdowns"] = {k: b.groups for k, b in breakdowns.items()}
    paths = {
        "report": write_json(summary, out / "report.json"),
        "predictions": write_predictions(report.rows, out / "predictions.csv"),
        "windows": write_windows(windows, out / "windows.csv"),
    }
    for k, b in breakdowns.items():
        paths[f"breakdown_{k}"] = write_breakdown(b, out / f"breakdown_{k}.csv")
    if scatter:
        paths["scatter"] = write_scatter_svg(report.rows, out / "scatter.svg", bounds=report.bounds)
    return paths
