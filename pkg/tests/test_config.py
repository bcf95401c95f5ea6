import json

import pytest

from vcath import config as cfgmod
from vcath.config import PipelineConfig
from vcath.errors import ConfigError


def test_defaults_round_trip():
    cfg = PipelineConfig()
    again = cfgmod.from_dict(json.loads(cfg.dumps()))
    assert again.to_dict() == cfg.to_dict()
    assert cfg.nonrigid.lr_long == 1e-3 and cfg.sdf.smooth_sigma == 1.0 and cfg.rigid.gamma == 30


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match="unknown key"):
        cfgmod.from_dict({"nonrigid": {"m_s": 30, "bogus": 1}})
    with pytest.raises(ConfigError, match="unknown key"):
        cfgmod.from_dict({"extra": {}})


@pytest.mark.parametrize("data", [
    {"stage": "half"},
    {"nonrigid": {"epochs": 1.5}},
    {"nonrigid": {"lr_rot": "fast"}},
    {"nonrigid": {"m_d": 2}},
    {"sdf": {"smooth_ksize": 4}},
    {"grid": {"frame_shape": [32]}},
    {"metrics": {"mm_per_frame": "wide"}},
    {"metrics": {"mm_per_frame": -0.4}},
])
def test_invalid_values(data):
    with pytest.raises(ConfigError):
        cfgmod.from_dict(data)


def test_set_value():
    cfg = PipelineConfig()
    cfgmod.set_value(cfg, "nonrigid.epochs", "50")
    cfgmod.set_value(cfg, "grid.frame_shape", "[24, 24]")
    cfgmod.set_value(cfg, "stage", "rigid-only")
    cfgmod.set_value(cfg, "phantom.motion", '{"twist_deg": 10}')
    assert cfg.nonrigid.epochs == 50 and cfg.grid.frame_shape == (24, 24)
    assert cfg.stage == "rigid-only" and cfg.phantom.motion == {"twist_deg": 10}
    with pytest.raises(ConfigError):
        cfgmod.set_value(cfg, "nonrigid.nothing", "1")
    with pytest.raises(ConfigError):
        cfgmod.set_value(cfg, "nowhere.epochs", "1")


def test_load_resolves_and_checks_paths(tmp_path):
    (tmp_path / "lumen.json").write_text("{}")
    (tmp_path / "c.json").write_text(json.dumps({"paths": {"ct_lumen": "lumen.json", "output": "out"}}))
    cfg = cfgmod.load(tmp_path / "c.json")
    assert cfg.paths.ct_lumen == str(tmp_path / "lumen.json")
    assert cfg.paths.output == str(tmp_path / "out")
    (tmp_path / "d.json").write_text(json.dumps({"paths": {"ct_wall": "missing.json"}}))
    with pytest.raises(ConfigError, match="does not exist"):
        cfgmod.load(tmp_path / "d.json")
    (tmp_path / "e.json").write_text("{not json")
    with pytest.raises(ConfigError):
        cfgmod.load(tmp_path / "e.json")
