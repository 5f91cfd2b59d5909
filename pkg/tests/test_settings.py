"""
設定管理のテスト
"""
import json
from pathlib import Path

import pytest

from app.causal_ceo.errors import ModelError
from app.causal_ceo.models import CurveMode, OutputFormat, RunConfig
from app.causal_ceo.settings import SettingsManager


@pytest.fixture
def manager(tmp_path):
    return SettingsManager(config_dir=tmp_path / "config")


def test_builtin_defaults_without_files(manager):
    assert manager.get_default_settings() == RunConfig()
    assert manager.list_profiles() == []


def test_repository_default_file():
    settings = SettingsManager(Path(__file__).parents[1] / "config").get_default_settings()
    assert settings.sigma_w2 == [1.0, 1.0]
    assert settings.bt.mc_samples == 0


def test_precedence(manager, tmp_path):
    manager.save_settings(RunConfig(a=0.3, trials=5), "default")
    extra = tmp_path / "run.json"
    extra.write_text(json.dumps({"a": 0.7, "bt": {"n": 2}}), encoding="utf-8")
    cfg = manager.resolve(extra, {"trials": 2, "format": "json", "seed": None})
    assert cfg.a == 0.7
    assert cfg.trials == 2
    assert cfg.format == OutputFormat.JSON
    assert cfg.bt.n == 2
    # bt の他の項目は既定値のまま残る
    assert cfg.bt.L == 1
    assert cfg.seed == 0


def test_save_and_resolve_profile(manager):
    path = manager.save_settings(RunConfig(mode=CurveMode.BOTH, sigma_w2=[0.5, 2.0, 1.0], subcommand="curve"), "three")
    assert path.name == "three.json"
    assert "subcommand" not in json.loads(path.read_text(encoding="utf-8"))
    loaded = manager.resolve(profile="three")
    assert loaded.mode == CurveMode.BOTH
    assert loaded.sigma_w2 == [0.5, 2.0, 1.0]
    assert manager.list_profiles() == ["three"]


def test_profile_sits_between_defaults_and_config_file(manager, tmp_path):
    manager.save_settings(RunConfig(a=0.3, trials=5), "default")
    manager.save_settings(RunConfig(a=0.4, seed=9), "mine")
    extra = tmp_path / "run.json"
    extra.write_text(json.dumps({"a": 0.7}), encoding="utf-8")
    cfg = manager.resolve(extra, profile="mine")
    assert cfg.a == 0.7
    assert cfg.seed == 9
    assert manager.resolve(profile="mine").a == 0.4


def test_missing_profile_lists_available(manager):
    manager.save_settings(RunConfig(), "kept")
    with pytest.raises(ModelError, match="kept"):
        manager.resolve(profile="nope")


@pytest.mark.parametrize("name", ["", "../outside", "strings"])
def test_invalid_profile_names(manager, name):
    with pytest.raises(ModelError):
        manager.save_settings(RunConfig(), name)


def test_invalid_values(manager):
    with pytest.raises(ModelError):
        manager.resolve(overrides={"sigma_v2": -1.0})


def test_unreadable_file(manager, tmp_path):
    broken = tmp_path / "broken.json"
    broken.write_text("{not json", encoding="utf-8")
    with pytest.raises(ModelError):
        manager.resolve(broken)
    listed = tmp_path / "list.json"
    listed.write_text("[1, 2]", encoding="utf-8")
    with pytest.raises(ModelError):
        manager.resolve(listed)
