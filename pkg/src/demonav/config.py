"""Declarative run configuration: one JSON file with env/dataset/model/train/eval
sections, strict schema (unknown keys are hard errors), and dot-path CLI
overrides like --train.lr=5e-5.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .env import RAY_LEN_FAR, RAY_LEN_NEAR
from .nets import ModelConfig
from .trainer import TrainerConfig

__all__ = ["ConfigError", "RunConfig", "EnvSection", "DatasetSection", "EvalSection", "load_config"]

CONFIG_VERSION = 1


class ConfigError(ValueError):
    pass


@dataclass
class EnvSection:
    grid_size: int = 24
    path_width: int = 2
    obstacles: bool = False
    coords: bool = True
    goal_radius: float = 0.5
    horizon: int = 50
    obstacle_prob: float = 0.1
    max_obstacles: int = 4
    ray_len: float | None = None  # default depends on the task setting

    def resolved_ray_len(self) -> float:
        if self.ray_len is not None:
            return self.ray_len
        # short local view in the simplest setting, long otherwise
        if self.coords and not self.obstacles:
            return RAY_LEN_NEAR
        return RAY_LEN_FAR


@dataclass
class DatasetSection:
    n_maps: int = 1
    held_out_maps: int = 0
    demos_per_map: int = 300
    train_fraction: float = 0.9
    seed: int = 0
    min_goal_cell_dist: int = 4
    max_step: float = 0.8


@dataclass
class EvalSection:
    episodes_per_split: int = 100
    seed: int = 0
    offsets: list = field(default_factory=lambda: [0.0, 0.5, 1.0, 2.0, 3.0])


@dataclass
class RunConfig:
    config_version: int = CONFIG_VERSION
    env: EnvSection = field(default_factory=EnvSection)
    dataset: DatasetSection = field(default_factory=DatasetSection)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainerConfig = field(default_factory=TrainerConfig)
    eval: EvalSection = field(default_factory=EvalSection)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_SECTIONS = {
    "env": EnvSection,
    "dataset": DatasetSection,
    "model": ModelConfig,
    "train": TrainerConfig,
    "eval": EvalSection,
}


def _build(cls, data: dict, path: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown keys in {path or 'config root'}: {sorted(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid {path or 'config'}: {e}") from e


def config_from_dict(data: dict) -> RunConfig:
    data = dict(data)
    version = data.pop("config_version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ConfigError(f"unsupported config_version {version}; this build reads {CONFIG_VERSION}")
    unknown = set(data) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    kwargs = {}
    for name, cls in _SECTIONS.items():
        section = data.get(name, {})
        if not isinstance(section, dict):
            raise ConfigError(f"section {name!r} must be an object")
        kwargs[name] = _build(cls, section, name)
    return RunConfig(config_version=CONFIG_VERSION, **kwargs)


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    """Apply ``--section.key=value`` overrides onto the raw config dict."""
    for item in overrides:
        if not item.startswith("--") or "=" not in item:
            raise ConfigError(f"override must look like --section.key=value, got {item!r}")
        dotted, raw = item[2:].split("=", 1)
        keys = dotted.split(".")
        if len(keys) < 2:
            raise ConfigError(f"override path needs a section prefix: {item!r}")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = data
        for k in keys[:-1]:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ConfigError(f"cannot override through non-object at {k!r} in {dotted}")
        node[keys[-1]] = value
    return data


def load_config(path: str | None, overrides: list[str] | None = None) -> RunConfig:
    if path is None:
        data: dict = {}
    else:
        try:
            with open(path) as f:
                data = json.load(f)
        except FileNotFoundError as e:
            raise ConfigError(f"config file not found: {path}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid JSON: {e}") from e
    if overrides:
        data = apply_overrides(data, overrides)
    return config_from_dict(data)
