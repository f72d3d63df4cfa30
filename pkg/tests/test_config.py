import json

import pytest

from decon_rl.config import SEED_ENV, ConfigError, build_config, load_config, profile_overrides


def test_defaults_are_desk_scale():
    cfg = build_config({}, environ={})
    assert cfg.profile == "desk"
    assert (cfg.env.H, cfg.env.W, cfg.env.T) == (16, 16, 5)
    assert cfg.env.sizes.train == 2000
    assert cfg.policy.episodes == 300 and cfg.policy.steps == 50


def test_full_profile_overlay():
    cfg = build_config({"profile": "full"}, environ={})
    assert (cfg.env.H, cfg.env.W) == (28, 28)
    assert cfg.env.sizes.train == 140_000
    assert cfg.model.D_u == 2 and cfg.model.lr == 1e-4
    assert cfg.policy.episodes == 2000 and cfg.policy.steps == 200
    assert cfg.policy.hidden == 300 and cfg.policy.update_every == 1 and cfg.policy.entropy_coef == 0.0


def test_user_values_beat_profile():
    cfg = build_config({"profile": "full", "model": {"lr": 0.5}}, environ={})
    assert cfg.model.lr == 0.5 and cfg.model.D_u == 2


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match="model.nonsense"):
        build_config({"model": {"nonsense": 1}}, environ={})


def test_invalid_values_rejected():
    with pytest.raises(ConfigError):
        build_config({"env": {"kind": "atari"}}, environ={})
    with pytest.raises(ConfigError):
        build_config({"model": {"lr": -1}}, environ={})
    with pytest.raises(ConfigError):
        profile_overrides("huge")


def test_seed_precedence():
    doc = {"seed": 1}
    assert build_config(doc, environ={}).model.seed == 1
    assert build_config(doc, environ={SEED_ENV: "2"}).model.seed == 2
    cfg = build_config(doc, seed=3, environ={SEED_ENV: "2"})
    assert cfg.env.seed == cfg.model.seed == cfg.policy.seed == cfg.seed == 3


def test_section_seeds_kept_without_override():
    cfg = build_config({"env": {"seed": 9}}, environ={})
    assert cfg.env.seed == 9 and cfg.model.seed == 0


def test_bad_env_seed():
    with pytest.raises(ConfigError, match=SEED_ENV):
        build_config({}, environ={SEED_ENV: "abc"})


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "none.json")
    (tmp_path / "a.json").write_text("{oops")
    with pytest.raises(ConfigError, match="not valid JSON"):
        load_config(tmp_path / "a.json")
    (tmp_path / "b.json").write_text("[1]")
    with pytest.raises(ConfigError, match="object"):
        load_config(tmp_path / "b.json")


def test_resolved_json_round_trips(tmp_path):
    cfg = build_config({"model": {"epochs": 3}}, seed=4, environ={})
    (tmp_path / "c.json").write_text(cfg.to_json())
    again = load_config(tmp_path / "c.json", environ={})
    assert again == cfg
    assert json.loads(cfg.to_json())["model"]["epochs"] == 3
