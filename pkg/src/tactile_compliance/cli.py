"""Command-line entry point: ``tactile-compliance <subcommand> ...``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 training
error. Failures print one JSON line on stderr::

    {"error": "DataError", "type": "StrategyMismatch", "exit_code": 3, "message": "..."}
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import platform
import sys
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from . import __version__
from . import config as config_mod
from .dataset import Catalog, load_catalog
from .errors import ComplianceError, ConfigParseError, DataError, MissingFile, StrategyMismatch, TrainingError, UnknownObjectId
from .ingest import ingest_to
from .models import ModelConfig, build_model
from .nn import checkpoint as ckpt
from .physics import ModulusBounds
from .pipeline import SplitMode, SplitSet, split
from .reports import (
    BREAKDOWN_KEYS,
    breakdown_report,
    json_safe,
    read_predictions,
    rolling_window_report,
    windows_summary,
    write_breakdown,
    write_json,
    write_report,
    write_scatter_svg,
    write_windows,
)
from .synth import write_synthetic
from .training import EvalReport, evaluate, multi_seed, prepare

log = logging.getLogger("tactile_compliance")

EXIT_CODES = ((ConfigParseError, 2), (DataError, 3), (TrainingError, 4))


def exit_code_for(exc: BaseException) -> int:
    for cls, code in EXIT_CODES:
        if isinstance(exc, cls):
            return code
    return 3  # remaining package errors come from bad inputs (physics, keys, lengths)


def _family(exc: BaseException) -> str:
    for cls, _ in EXIT_CODES:
        if isinstance(exc, cls):
            return cls.__name__
    return "DataError"


# --------------------------------------------------------------------------
# helpers


def _versions() -> dict[str, str]:
    return {"tactile_compliance": __version__, "python": platform.python_version(), "numpy": np.__version__, "torch": torch.__version__}


def _hash_obj(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")).hexdigest()


def _file_hash(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out: Path, command: str, config_hash: str, seed, inputs: dict | None = None, extra: dict | None = None) -> Path:
    manifest = {
        "command": command,
        "config_hash": config_hash,
        "seed": seed,
        "versions": _versions(),
        "inputs": inputs or {},
    }
    manifest.update(extra or {})
    return write_json(manifest, out / "run-manifest.json")


def parse_seeds(text: str) -> tuple[int, ...]:
    """``"0,1,2"`` or ``"0-4"`` or a mix of both."""
    seeds: list[int] = []
    try:
        for part in text.split(","):
            part = part.strip()
            if not part:
                continue
            lo, sep, hi = part.partition("-")
            if sep and lo:
                seeds.extend(range(int(lo), int(hi) + 1))
            else:
                seeds.append(int(part))
    except ValueError as exc:
        raise ConfigParseError(f"bad seed list {text!r}") from exc
    if not seeds:
        raise ConfigParseError("seed list is empty")
    return tuple(seeds)


def _load_split(path: str) -> SplitSet:
    p = Path(path)
    if not p.is_file():
        raise MissingFile(str(p))
    try:
        return SplitSet.load(p)
    except (ValueError, KeyError, TypeError) as exc:
        raise DataError(f"{p}: not a valid split file ({exc})") from exc


def _check_split(catalog: Catalog, sp: SplitSet) -> None:
    known = {g.grasp_id for g in catalog.grasps}
    missing = [g for g in sp.train + sp.validation + sp.test if g not in known]
    if missing:
        raise UnknownObjectId(f"split references {len(missing)} grasp(s) absent from the dataset, e.g. {missing[0]}")


def _load_config(args) -> config_mod.ExperimentConfig:
    return config_mod.load(getattr(args, "config", None), getattr(args, "set", None) or ())


# --------------------------------------------------------------------------
# subcommands


def cmd_ingest(args) -> dict:
    cfg = _load_config(args)
    out = Path(args.out)
    result = ingest_to(args.raw, out, cfg.contact, args.frame_size or None)
    summary = {
        "raw_grasps": result.raw_grasps,
        "grasps": len(result.catalog.grasps),
        "objects": len(result.catalog.objects),
        "failures": [{"item": i, "reason": r} for i, r in result.failures],
    }
    write_json(summary, out / "ingest-report.json")
    write_manifest(out, "ingest", cfg.digest(), None, {"raw": str(args.raw)})
    return {k: v for k, v in summary.items() if k != "failures"} | {"failures": len(result.failures)}


def cmd_synth(args) -> dict:
    overrides = list(args.set or [])
    if args.seed is not None:
        overrides.append(f"synth.seed={args.seed}")
    cfg = config_mod.load(args.config, overrides)
    out = Path(args.out)
    catalog = write_synthetic(out, cfg.synth)
    write_manifest(out, "synth", cfg.digest(), cfg.synth.seed)
    return {"objects": len(catalog.objects), "grasps": len(catalog.grasps)}


def cmd_split(args) -> dict:
    catalog = load_catalog(args.data)
    try:
        mode = SplitMode.parse(args.mode)
    except ValueError as exc:
        raise ConfigParseError(str(exc)) from exc
    sp = split(catalog, mode, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sp.save(out / "split.json")
    write_manifest(out, "split", _hash_obj({"mode": mode.value}), args.seed, {"data": str(args.data)})
    return {"train": len(sp.train), "validation": len(sp.validation), "test": len(sp.test)}


def cmd_train(args) -> dict:
    overrides = list(args.set or [])
    cfg = config_mod.load(args.config, overrides)
    run = cfg.run
    if args.seeds is not None:
        run = run.__class__.from_dict(run.to_dict() | {"seeds": list(parse_seeds(args.seeds))})
    catalog = load_catalog(args.data)
    sp = _load_split(args.split) if args.split else None
    if sp is not None:
        _check_split(catalog, sp)
    data = prepare(catalog, run.model.image_size, run.bounds)
    report, results = multi_seed(run, catalog, sp, data, keep_models=True)

    out = Path(args.out)
    (out / "checkpoints").mkdir(parents=True, exist_ok=True)
    for seed, result in sorted(results.items()):
        meta = {
            "model": run.model.to_dict(),
            "bounds": {"log10_min": run.bounds.log10_min, "log10_max": run.bounds.log10_max},
            "seed": seed,
            "best_epoch": result.best_epoch,
            "best_val_loss": result.best_val_loss,
            "split_mode": run.split_mode.value,
        }
        ckpt.save(out / "checkpoints" / f"seed_{seed}.tcck", result.model.state_dict(), meta)
    write_report(report, out)
    write_json({str(s): h for s, h in sorted(report.histories.items())}, out / "history.json")
    config_hash = _hash_obj(cfg.to_dict() | {"run": run.to_dict()})
    inputs = {"data": str(args.data), "split": str(args.split) if args.split else None}
    if args.split:
        inputs["split_sha256"] = _file_hash(Path(args.split))
    write_manifest(out, "train", config_hash, list(run.seeds), inputs, {"failures": {str(k): v for k, v in report.failures.items()}})
    return {"aggregates": report.aggregates, "failures": len(report.failures)}


def load_checkpoint_model(path: str | Path):
    p = Path(path)
    if not p.is_file():
        raise MissingFile(str(p))
    try:
        tensors, meta = ckpt.load(p)
        mcfg = ModelConfig.from_dict(meta["model"])
        model = build_model(_without_encoder_weights(mcfg), int(meta.get("seed", 0)))
        model.load_state_dict(tensors)
    except (ckpt.CheckpointError, KeyError, RuntimeError, ValueError, TypeError) as exc:
        raise DataError(f"{p}: cannot load checkpoint ({exc})") from exc
    model.eval()
    return model, meta


def _without_encoder_weights(mcfg: ModelConfig) -> ModelConfig:
    # the checkpoint holds trained encoder weights already
    return ModelConfig.from_dict(mcfg.to_dict() | {"encoder_weights": None})


def cmd_eval(args) -> dict:
    model, meta = load_checkpoint_model(args.checkpoint)
    bounds = ModulusBounds(**meta["bounds"])
    catalog = load_catalog(args.data)
    sp = _load_split(args.split)
    _check_split(catalog, sp)
    if model.cfg.strategy.uses_estimates and not catalog.has_estimates:
        raise StrategyMismatch("checkpoint uses strategy ALL but the dataset lacks analytical estimates")
    seed = int(meta.get("seed", 0))
    rows = evaluate(model, catalog, sp.test, bounds, seed)
    report = EvalReport.from_rows(rows, bounds, config={"checkpoint": meta})
    out = Path(args.out)
    write_report(report, out)
    inputs = {"checkpoint_sha256": _file_hash(Path(args.checkpoint)), "split_sha256": _file_hash(Path(args.split)), "data": str(args.data)}
    write_manifest(out, "eval", _hash_obj(meta), seed, inputs)
    return {"aggregates": report.aggregates}


def cmd_report(args) -> dict:
    rows = read_predictions(args.predictions)
    if not rows:
        raise DataError(f"{args.predictions}: no prediction rows")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        bounds = ModulusBounds(args.log10_min, args.log10_max)
    except ValueError as exc:
        raise ConfigParseError(str(exc)) from exc
    if args.by == "window":
        windows = rolling_window_report(rows, seed=args.seed)
        write_windows(windows, out / "windows.csv")
        summary = {"windows": windows_summary(windows), "complete": windows.complete}
    else:
        b = breakdown_report(rows, args.by, bounds)
        write_breakdown(b, out / f"breakdown_{args.by}.csv")
        write_scatter_svg(rows, out / f"scatter_{args.by}.svg", key=args.by, bounds=bounds)
        summary = {"groups": b.groups, "overall": b.overall}
    write_json(summary, out / f"report_{args.by}.json")
    write_manifest(out, "report", _hash_obj({"by": args.by, "bounds": [bounds.log10_min, bounds.log10_max]}), args.seed,
                   {"predictions_sha256": _file_hash(Path(args.predictions))})
    return summary


# --------------------------------------------------------------------------
# parser


def _common(p: argparse.ArgumentParser, config: bool = True) -> None:
    if config:
        p.add_argument("--config", help="TOML config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="dotted-key override, repeatable")
    p.add_argument("--out", required=True, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tactile-compliance", description="Tactile compliance estimation toolkit")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="convert a raw upstream dump to the canonical layout")
    p.add_argument("--raw", required=True)
    p.add_argument("--frame-size", type=int, default=64, help="resize frames to N x N (0 keeps the original size)")
    _common(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--seed", type=int)
    _common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("split", help="write a train/validation/test split")
    p.add_argument("--data", required=True)
    p.add_argument("--mode", default="seen", help="seen | unseen")
    p.add_argument("--seed", type=int, default=0)
    _common(p, config=False)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train one model per seed and evaluate on the test split")
    p.add_argument("--data", required=True)
    p.add_argument("--split", help="split.json; without it each seed draws its own split")
    p.add_argument("--seeds", help="e.g. 0,1,2 or 0-9")
    _common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a split's test set")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--data", required=True)
    _common(p, config=False)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="breakdown or rolling-window report from predictions.csv")
    p.add_argument("--predictions", required=True)
    p.add_argument("--by", required=True, choices=[*BREAKDOWN_KEYS, "window"])
    p.add_argument("--seed", type=int, default=0, help="undersampling seed for window reports")
    p.add_argument("--log10-min", type=float, default=3.0)
    p.add_argument("--log10-max", type=float, default=12.0)
    _common(p, config=False)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        summary = args.func(args)
    except ComplianceError as exc:
        code = exit_code_for(exc)
        line = {"error": _family(exc), "type": type(exc).__name__, "exit_code": code, "message": str(exc)}
        print(json.dumps(line), file=sys.stderr)
        return code
    print(json.dumps(json_safe(summary), sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
