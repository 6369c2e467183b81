"""Experiment configuration files (TOML) with dotted-key overrides.

Layout::

    [synth]      SynthConfig fields; [synth.contact] for ContactParams
    [model]      ModelConfig fields
    [train]      RunConfig scalars: epochs, batch_size, lr, patience, seeds,
                 sampling, split_mode
    [augment]    AugmentConfig
    [balance]    BalanceConfig
    [bounds]     ModulusBounds
    [contact]    ContactParams used by ingest

Every section is optional; missing keys take the dataclass defaults.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import tomli

from .errors import ConfigParseError
from .models import ModelConfig
from .physics import ContactParams, ModulusBounds
from .pipeline import AugmentConfig, BalanceConfig
from .synth import SynthConfig
from .training import RunConfig

SECTIONS = ("synth", "model", "train", "augment", "balance", "bounds", "contact")
TRAIN_KEYS = ("epochs", "batch_size", "lr", "patience", "seeds", "sampling", "split_mode")


@dataclass(frozen=True)
class ExperimentConfig:
    synth: SynthConfig = field(default_factory=SynthConfig)
    run: RunConfig = field(default_factory=RunConfig)
    contact: ContactParams = field(default_factory=ContactParams)
    raw: dict = field(default_factory=dict)  # the merged table it was built from

    def to_dict(self) -> dict:
        return {"synth": self.synth.to_dict(), "run": self.run.to_dict(), "contact": dataclasses.asdict(self.contact)}

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()


def load_table(path: str | Path | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            return tomli.load(fh)
    except OSError as exc:
        raise ConfigParseError(f"cannot read config {path}: {exc}") from exc
    except tomli.TOMLDecodeError as exc:
        raise ConfigParseError(f"{path}: {exc}") from exc


def _parse_value(text: str):
    try:
        return tomli.loads(f"v = {text}")["v"]
    except tomli.TOMLDecodeError:
        return text


def apply_overrides(table: dict, overrides: Iterable[str]) -> dict:
    """Return a copy of ``table`` with ``a.b.c=value`` pairs applied.

    Values are read as TOML literals when they parse, else as bare strings.
    """
    out = json.loads(json.dumps(table))
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ConfigParseError(f"override {item!r} is not of the form key=value")
        parts = [p.strip() for p in key.split(".")]
        node = out
        for p in parts[:-1]:
            nxt = node.setdefault(p, {})
            if not isinstance(nxt, dict):
                raise ConfigParseError(f"override {item!r}: {p!r} is not a section")
            node = nxt
        node[parts[-1]] = _parse_value(value.strip())
    return out


def _check_keys(section: str, values: dict, allowed: Iterable[str]) -> None:
    unknown = set(values) - set(allowed)
    if unknown:
        raise ConfigParseError(f"[{section}] unknown keys: {sorted(unknown)}")


def _names(cls) -> list[str]:
    return [f.name for f in dataclasses.fields(cls)]


def build(table: dict) -> ExperimentConfig:
    _check_keys("top level", table, SECTIONS)
    for name, value in table.items():
        if not isinstance(value, dict):
            raise ConfigParseError(f"[{name}] must be a table")
    try:
        synth_t = dict(table.get("synth", {}))
        _check_keys("synth", synth_t, _names(SynthConfig))
        if "contact" in synth_t:
            _check_keys("synth.contact", synth_t["contact"], _names(ContactParams))
        synth = SynthConfig(**synth_t)

        model_t = table.get("model", {})
        _check_keys("model", model_t, _names(ModelConfig))
        train_t = table.get("train", {})
        _check_keys("train", train_t, TRAIN_KEYS)
        run_d = dict(train_t)
        run_d["model"] = model_t
        for section, cls in (("augment", AugmentConfig), ("balance", BalanceConfig), ("bounds", ModulusBounds)):
            if section in table:
                _check_keys(section, table[section], _names(cls))
                run_d[section] = table[section]
        run = RunConfig.from_dict(run_d)

        contact_t = table.get("contact", {})
        _check_keys("contact", contact_t, _names(ContactParams))
        contact = ContactParams(**contact_t)
    except (TypeError, ValueError) as exc:
        raise ConfigParseError(f"invalid configuration: {exc}") from exc
    return ExperimentConfig(synth, run, contact, table)


def load(path: str | Path | None, overrides: Iterable[str] = ()) -> ExperimentConfig:
    return build(apply_overrides(load_table(path), overrides))
