import pytest

from fragrate.config import DEFAULTS, config_from_mapping, load_config
from fragrate.errors import ConfigError


def test_defaults():
    cfg = load_config(None)
    assert cfg.grid.x_min == 1e-4 and cfg.grid.x_max == pytest.approx(50.0) and cfg.grid.n == 512
    assert cfg.spec.is_explicit and cfg.spec.gamma == 1.0
    assert cfg.split_m == 0.75 and cfg.split_M is None
    assert cfg.bound_a == pytest.approx(0.9)
    assert len(cfg.config_hash) == 64


def test_hash_tracks_physics_not_output():
    base = load_config(None)
    assert load_config(None, {("output", "dir"): "elsewhere"}).config_hash == base.config_hash
    assert load_config(None, {("evolve", "cfl"): 0.4}).config_hash != base.config_hash


def test_toml_file(tmp_path):
    p = tmp_path / "run.toml"
    p.write_text(
        '[kernel]\ngamma = 1.0\nshape = "tabulated"\nz = [0.0, 1.0]\nh = [2.0, 4.0]\n'
        '[grid]\nn = 128\nx_max = 40.0\n[split]\nm = 0.8\n'
    )
    cfg = load_config(p)
    assert cfg.spec.c_h == pytest.approx(5 / 3)
    assert cfg.grid.n == 128 and cfg.grid.x_max == 40.0
    assert cfg.split_m == 0.8


@pytest.mark.parametrize(
    "raw",
    [
        {"kernal": {}},
        {"grid": {"size": 4}},
        {"grid": {"n": 8}},
        {"grid": {"x_min": 10.0, "x_max": 1.0}},
        {"weights": {"m": 0.3}},
        {"profile": {"source": "guess"}},
        {"kernel": {"gamma": 1.0, "c": 3.0}, "profile": {"source": "explicit"}},
        {"evolve": {"cfl": -1.0}},
        {"evolve": {"initial": "bump:x:1"}},
        {"evolve": {"window": [8.0, 2.0]}},
        {"audit": {"n_samples": -1}},
        {"kernel": {"gamma": 1.0, "shape": "weird"}},
        {"grid": "not a table"},
    ],
)
def test_invalid_configs(raw):
    with pytest.raises(ConfigError):
        config_from_mapping(raw)


def test_unreadable_and_malformed(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("[grid\nn=")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_defaults_are_not_mutated():
    config_from_mapping({"grid": {"n": 64}}, {("evolve", "t_end"): 20.0})
    assert DEFAULTS["grid"]["n"] == 512 and DEFAULTS["evolve"]["t_end"] == 10.0
