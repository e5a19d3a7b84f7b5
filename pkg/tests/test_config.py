import pytest

from ginet.config import (ConfigError, RunConfig, default_config_path, load_config, parse_lines,
                          resolve_key)


def test_bundled_config_loads():
    cfg = load_config()
    assert cfg.validate() is cfg
    assert cfg.model.nodes == 8 and cfg.model.node_dim == 16 and cfg.model.classes == 6
    assert cfg.data.num_scenes == 8 and cfg.data.side == 32
    assert cfg.loss.lam == 0.2 and cfg.loss.alpha == 0.4
    assert cfg.train.total_iters == 2000
    assert default_config_path().endswith("toy.cfg")


def test_bare_keys_resolve():
    assert resolve_key("lambda") == "loss.lambda"
    assert resolve_key("nodes") == "model.nodes"
    with pytest.raises(ConfigError, match="unknown"):
        resolve_key("learning_rate")
    with pytest.raises(ConfigError, match="ambiguous"):
        resolve_key("seed")


def test_overrides_and_types():
    cfg = load_config(overrides=["lambda=0", "train.augment=off", "data.classes=sky, grass, road, ball"])
    assert cfg.loss.lam == 0.0 and cfg.train.augment is False
    assert cfg.data.classes == ("sky", "grass", "road", "ball") and cfg.model.classes == 4
    with pytest.raises(ConfigError):
        load_config(overrides=["model.nodes=eight"])
    with pytest.raises(ConfigError):
        load_config(overrides=["nodes"])


def test_comments_and_line_numbers():
    cfg = parse_lines(["# header", "", "model.nodes = 4  # fewer"])
    assert cfg.model.nodes == 4
    with pytest.raises(ConfigError, match=":2:"):
        parse_lines(["model.nodes = 4", "garbage"], source="x.cfg")


def test_cross_field_validation(tmp_path):
    with pytest.raises(ConfigError, match="divisible"):
        load_config(overrides=["data.side=30"]).validate()
    with pytest.raises(ConfigError, match="even"):
        load_config(overrides=["model.node_dim=15"]).validate()
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "nope.cfg"))
    cfg = RunConfig()
    cfg.embeddings = str(tmp_path / "missing.txt")
    with pytest.raises(ConfigError, match="embeddings"):
        cfg.validate()
