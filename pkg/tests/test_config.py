from pathlib import Path

import pytest

from tactile_compliance import config as config_mod
from tactile_compliance.errors import ConfigParseError
from tactile_compliance.models import Architecture
from tactile_compliance.pipeline import SplitMode

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def test_load_table_errors(tmp_path):
    assert config_mod.load_table(None) == {}
    with pytest.raises(ConfigParseError):
        config_mod.load_table(tmp_path / "absent.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("[synth\nseed = 1\n")
    with pytest.raises(ConfigParseError):
        config_mod.load_table(bad)


def test_overrides_parse_toml_literals():
    table = {"train": {"epochs": 3}}
    out = config_mod.apply_overrides(table, ["train.epochs=7", "train.seeds=[1, 2]", "model.strategy=ImageF", "train.lr=1e-3"])
    assert out["train"] == {"epochs": 7, "seeds": [1, 2], "lr": 1e-3}
    assert out["model"] == {"strategy": "ImageF"}  # bare word falls back to a string
    assert table == {"train": {"epochs": 3}}  # input untouched


@pytest.mark.parametrize("bad", ["train.epochs", "=3", "train.epochs.x=1"])
def test_bad_overrides(bad):
    with pytest.raises(ConfigParseError):
        config_mod.apply_overrides({"train": {"epochs": 3}}, [bad])


@pytest.mark.parametrize(
    "table",
    [
        {"trian": {}},
        {"train": {"epochz": 3}},
        {"synth": {"contact": {"radius": 1}}},
        {"model": {"strategy": "Everything"}},
        {"train": {"epochs": 0}},
        {"augment": []},
        {"bounds": {"log10_min": 5, "log10_max": 4}},
    ],
)
def test_invalid_tables(table):
    with pytest.raises(ConfigParseError):
        config_mod.build(table)


def test_build_defaults_and_sections():
    cfg = config_mod.build({})
    assert cfg.run.seeds and cfg.synth.num_objects > 0
    cfg = config_mod.build({"train": {"split_mode": "unseen", "seeds": [4]}, "model": {"architecture": "ResTf"}, "contact": {"sensor_modulus_pa": 2e5}})
    assert cfg.run.split_mode is SplitMode.UNSEEN and cfg.run.seeds == (4,)
    assert cfg.run.model.architecture is Architecture.RES_TF
    assert cfg.contact.sensor_modulus_pa == 2e5


def test_digest_is_stable_and_sensitive():
    a = config_mod.build({"train": {"epochs": 3}})
    assert a.digest() == config_mod.build({"train": {"epochs": 3}}).digest()
    assert a.digest() != config_mod.build({"train": {"epochs": 4}}).digest()
    assert len(a.digest()) == 64


@pytest.mark.parametrize("name", ["desk.toml", "full_grid.toml"])
def test_shipped_configs_load(name):
    cfg = config_mod.load(CONFIGS / name)
    assert cfg.run.epochs > 0


def test_desk_config_values():
    cfg = config_mod.load(CONFIGS / "desk.toml", ["train.seeds=[5]"])
    assert cfg.synth.num_objects == 200 and cfg.synth.grasps_per_object == 5
    assert cfg.run.seeds == (5,)
