"""Run configuration: nested YAML sections, validation and named presets."""

from __future__ import annotations

import copy
import dataclasses
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .net import NetConfig
from .ppo import PpoConfig


@dataclass
class NetworkSection:
    channels: int = 64
    hidden: int = 128
    dropout: float = 0.3
    dtype: str = "float32"

    def __post_init__(self):
        self.net_config()  # NetConfig validates ranges

    def net_config(self) -> NetConfig:
        return NetConfig(channels=self.channels, hidden=self.hidden, dropout=self.dropout, dtype=self.dtype)


@dataclass
class TrainSection:
    iterations: int = 1
    eval_games: int = 1000

    def __post_init__(self):
        if self.iterations < 1 or self.eval_games < 0:
            raise ValueError("train.iterations must be >= 1 and eval_games >= 0")


@dataclass
class SelfplaySection:
    iterations: int = 12
    epsilon: float = 0.5
    iteration_steps: int = 25_000
    eval_games: int = 1000

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("selfplay.iterations must be >= 0")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("selfplay.epsilon must be in [0, 1]")
        if self.iteration_steps < 1 or self.eval_games < 1:
            raise ValueError("selfplay.iteration_steps and eval_games must be >= 1")


@dataclass
class ArenaSection:
    games: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if self.games < 1:
            raise ValueError("arena.games must be >= 1")


@dataclass
class PretrainSection:
    games: int = 12_000
    depth: int = 2
    epochs: int = 10
    validation_fraction: float = 0.1
    learning_rate: float = 1e-3
    batch_size: int = 256
    max_positions: int = 100_000

    def __post_init__(self):
        if self.games < 1 or self.depth < 0 or self.epochs < 1 or self.batch_size < 2:
            raise ValueError("invalid pretrain section")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError("pretrain.validation_fraction must be in [0, 1)")


@dataclass
class PathsSection:
    workdir: str = "run"
    checkpoints: str = "checkpoints"
    logs: str = "logs"


@dataclass
class RunConfig:
    seed: int = 0
    workers: int = 1
    ppo: PpoConfig = field(default_factory=PpoConfig)
    network: NetworkSection = field(default_factory=NetworkSection)
    train: TrainSection = field(default_factory=TrainSection)
    selfplay: SelfplaySection = field(default_factory=SelfplaySection)
    arena: ArenaSection = field(default_factory=ArenaSection)
    pretrain: PretrainSection = field(default_factory=PretrainSection)
    paths: PathsSection = field(default_factory=PathsSection)

    def __post_init__(self):
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    @property
    def workdir(self) -> Path:
        return Path(self.paths.workdir)

    @property
    def checkpoint_dir(self) -> Path:
        return self.workdir / self.paths.checkpoints

    @property
    def log_dir(self) -> Path:
        return self.workdir / self.paths.logs

    def to_dict(self) -> dict:
        return asdict(self)

    def dump(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(yaml.safe_dump(self.to_dict(), sort_keys=True))
        return path


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ValueError(f"{where or 'config'} must be a mapping")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ValueError(f"unknown key(s) in {where or 'config'}: {', '.join(sorted(unknown))}")
    kwargs = {}
    for name, value in data.items():
        default = getattr(cls(), name) if name in fields else None
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value, f"{where}.{name}".lstrip("."))
        else:
            if isinstance(default, float) and isinstance(value, int) and not isinstance(value, bool):
                value = float(value)
            if default is not None and not isinstance(value, type(default)):
                raise ValueError(f"{where}.{name}: expected {type(default).__name__}, got {value!r}".lstrip("."))
            kwargs[name] = value
    return cls(**kwargs)


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def from_dict(data: dict) -> RunConfig:
    return _build(RunConfig, data or {}, "")


PRESETS: dict[str, dict[str, Any]] = {
    "default": {},
    # best single-agent gamma/lambda setting against Random
    "single-best": {
        "ppo": {
            "gamma": 0.3, "lam": 1.0, "learning_rate": 1e-5, "train_batch": 1000,
            "minibatch": 100, "entropy_coef": 0.0, "iteration_steps": 50_000,
        },
    },
    "selfplay-league": {
        "ppo": {
            "gamma": 0.3, "lam": 1.0, "learning_rate": 1e-5, "train_batch": 1000,
            "minibatch": 100, "entropy_coef": 0.0, "iteration_steps": 25_000,
        },
        "selfplay": {"iterations": 12, "epsilon": 0.5, "iteration_steps": 25_000},
    },
}


def load_config(source: str | None = None, overrides: dict | None = None) -> RunConfig:
    """Load a preset name or a YAML file, then apply nested overrides."""
    data: dict = {}
    if source:
        if source in PRESETS:
            data = copy.deepcopy(PRESETS[source])
        else:
            loaded = yaml.safe_load(Path(source).read_text())
            data = loaded or {}
    if overrides:
        data = _merge(data, overrides)
    return from_dict(data)


def parse_override(text: str) -> dict:
    """``"ppo.learning_rate=0"`` -> ``{"ppo": {"learning_rate": 0}}``."""
    if "=" not in text:
        raise ValueError(f"override must look like section.key=value, got {text!r}")
    key, raw = text.split("=", 1)
    value = yaml.safe_load(raw)
    out: dict = {}
    node = out
    parts = key.strip().split(".")
    for p in parts[:-1]:
        node = node.setdefault(p, {})
    node[parts[-1]] = value
    return out
