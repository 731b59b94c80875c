"""Aggregate runtime configuration, loadable from a JSON file.

Every numeric default in the system lives on one of the component config
dataclasses; a config file may override any subset via nested objects, e.g.

    {"policy": {"mlp_hidden": 1024}, "gate": {"pause_ticks": 5}}
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .arbitration import GateConfig
from .errors import ConfigError
from .incremental import FinetuneConfig
from .policy import DEFAULT_PRETRAIN_SCHEDULE, PolicyConfig, TrainConfig
from .simuser import OracleConfig
from .trajgen import GenConfig

DATA_DIR_ENV = "ILSA_DATA_DIR"


@dataclass(frozen=True)
class AppConfig:
    gen: GenConfig = field(default_factory=GenConfig)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    train: TrainConfig = field(
        default_factory=lambda: TrainConfig(schedule=DEFAULT_PRETRAIN_SCHEDULE))
    gate: GateConfig = field(default_factory=GateConfig)
    oracle: OracleConfig = field(default_factory=OracleConfig)
    finetune: FinetuneConfig = field(default_factory=FinetuneConfig)
    step_budget: int = 2000
    service_tick_hz: float = 10.0


def _merge(cls, overrides: dict):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(overrides) - known
    if unknown:
        raise ConfigError(f"{cls.__name__}: unknown config keys {sorted(unknown)}")
    if isinstance(overrides.get("trainable_partitions"), list):
        overrides = dict(overrides)
        overrides["trainable_partitions"] = frozenset(overrides["trainable_partitions"])
    if isinstance(overrides.get("schedule"), list):
        overrides = dict(overrides)
        overrides["schedule"] = tuple(
            (int(e), float(lr)) for e, lr in overrides["schedule"]
        )
    return cls(**overrides)


def load_config(path: str | Path | None) -> AppConfig:
    if path is None:
        return AppConfig()
    try:
        with open(path) as f:
            doc = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config root must be a JSON object")
    kwargs = {}
    sections = {
        "gen": GenConfig, "policy": PolicyConfig, "train": TrainConfig,
        "gate": GateConfig, "oracle": OracleConfig, "finetune": FinetuneConfig,
    }
    for key, value in doc.items():
        if key in sections:
            if not isinstance(value, dict):
                raise ConfigError(f"{path}: section {key!r} must be an object")
            kwargs[key] = _merge(sections[key], value)
        elif key in ("step_budget", "service_tick_hz"):
            kwargs[key] = value
        else:
            raise ConfigError(f"{path}: unknown config section {key!r}")
    return AppConfig(**kwargs)


def data_dir() -> Path:
    root = Path(os.environ.get(DATA_DIR_ENV, "ilsa_data"))
    root.mkdir(parents=True, exist_ok=True)
    return root
