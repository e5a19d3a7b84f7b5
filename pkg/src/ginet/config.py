"""Run configuration: ``key = value`` text files with dotted section keys.

Lines may carry ``#`` comments. Values are parsed by the type of the
default. A bare key (``lambda``) resolves to the unique dotted key that ends
with it.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field, fields, replace
from importlib import resources

from ginet.data import DataConfigError, SceneConfig
from ginet.losses import LossWeights
from ginet.model import ConfigError as ModelConfigError
from ginet.model import GINetConfig
from ginet.training import ScheduleError, TrainConfig


class ConfigError(ValueError):
    pass


# dotted key -> (section attribute, field name)
KEYS = {
    **{f"model.{f.name}": ("model", f.name) for f in fields(GINetConfig) if f.name != "classes"},
    "data.side": ("data", "side"),
    "data.classes": ("data", "classes"),
    "data.min_shapes": ("data", "min_shapes"),
    "data.max_shapes": ("data", "max_shapes"),
    "data.seed": ("data", "seed"),
    "data.num_scenes": ("data", "num_scenes"),
    **{f"train.{f.name}": ("train", f.name) for f in fields(TrainConfig)},
    "loss.lambda": ("loss", "lam"),
    "loss.alpha": ("loss", "alpha"),
    "embeddings.path": ("run", "embeddings"),
    "output.dir": ("run", "out_dir"),
}


@dataclass
class RunConfig:
    model: GINetConfig = field(default_factory=GINetConfig)
    data: SceneConfig = field(default_factory=SceneConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    loss: LossWeights = field(default_factory=LossWeights)
    embeddings: str | None = None
    out_dir: str = "runs/default"

    def validate(self):
        """Check every cross-field constraint; raises ConfigError."""
        try:
            self.model.validate()
            self.data.validate(self.model.stride)
            self.train.validate()
        except (ModelConfigError, DataConfigError, ScheduleError) as exc:
            raise ConfigError(str(exc)) from None
        if self.model.classes != len(self.data.classes):
            raise ConfigError(f"model.classes={self.model.classes} but data.classes lists "
                              f"{len(self.data.classes)} names")
        if self.loss.lam < 0 or self.loss.alpha < 0:
            raise ConfigError("loss.lambda and loss.alpha must be >= 0")
        if self.embeddings is not None and not os.path.isfile(self.embeddings):
            raise ConfigError(f"embeddings.path: no such file {self.embeddings!r}")
        return self


def resolve_key(key):
    key = key.strip()
    if key in KEYS:
        return key
    matches = [k for k in KEYS if k.rsplit(".", 1)[1] == key]
    if len(matches) == 1:
        return matches[0]
    if matches:
        raise ConfigError(f"ambiguous key {key!r}: {', '.join(matches)}")
    raise ConfigError(f"unknown key {key!r}")


def _parse_value(key, text, current):
    text = text.strip()
    try:
        if key == "data.classes":
            return tuple(c.strip() for c in text.split(",") if c.strip())
        if isinstance(current, bool):
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(current, int):
            return int(text, 0)
        if isinstance(current, float):
            return float(text)
        if current is None and key == "embeddings.path":
            return text or None
        return text
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as {type(current).__name__}") from None


def apply(cfg: RunConfig, key, value_text):
    dotted = resolve_key(key)
    section, name = KEYS[dotted]
    target = cfg if section == "run" else getattr(cfg, section)
    value = _parse_value(dotted, value_text, getattr(target, name))
    if section == "run":
        setattr(cfg, name, value)
    else:
        setattr(cfg, section, replace(target, **{name: value}))
    if dotted == "data.classes":
        cfg.model = replace(cfg.model, classes=len(value))
    return cfg


def parse_lines(lines, cfg=None, source="<config>"):
    cfg = cfg or RunConfig()
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        try:
            apply(cfg, key, value)
        except ConfigError as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}") from None
    return cfg


def default_config_path():
    return str(resources.files("ginet") / "configs" / "toy.cfg")


def load_config(path=None, overrides=()):
    """Read ``path`` (the bundled toy config if None) and apply ``K=V`` overrides."""
    path = path or default_config_path()
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        cfg = parse_lines(fh, source=path)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects K=V, got {item!r}")
        k, v = item.split("=", 1)
        apply(cfg, k, v)
    return cfg
