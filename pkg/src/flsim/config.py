"""Experiment configuration: schema, validation, file parsing, overrides.

Configs are JSON documents; every key can also be set from the command
line (nested keys use dotted names, e.g. --attack.kind).  Unknown keys
are rejected by name.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from . import attacks

SCHEMES = ("mb", "mub")
INIT_MODES = ("server", "icmi")
MODELS = ("mlp", "cnn")
DATASETS = ("mnist", "synth")
PARTITIONS = ("iid", "label_shard")
PRECISIONS = ("single", "double")


@dataclass(frozen=True)
class AttackConfig:
    kind: str = attacks.NONE
    fraction: float = 0.0
    sigma: float = 0.5


@dataclass(frozen=True)
class SynthConfig:
    num_classes: int = 10
    per_class: int = 60
    test_per_class: int = 20
    dim: int = 16
    separation: float = 6.0


@dataclass(frozen=True)
class ExperimentConfig:
    scheme: str = "mb"
    init_mode: str = "server"
    model: str = "mlp"
    dataset: str = "mnist"
    partition: str = "iid"
    clients: int = 100
    participation: float = 1.0
    rounds: int = 200
    lr: float = 0.01
    batch_size: int = 5
    local_iters: int = 2
    attack: AttackConfig = field(default_factory=AttackConfig)
    seed: int = 1
    precision: str = "single"
    data_dir: str | None = None
    out_dir: str = "out"
    train_limit: int | None = None
    test_limit: int | None = None
    shards_per_client: int = 2
    synth: SynthConfig = field(default_factory=SynthConfig)


# Field name -> (type, may_be_null) for each schema section.
_TOP_FIELDS = {
    "scheme": (str, False), "init_mode": (str, False), "model": (str, False),
    "dataset": (str, False), "partition": (str, False),
    "clients": (int, False), "participation": (float, False),
    "rounds": (int, False), "lr": (float, False), "batch_size": (int, False),
    "local_iters": (int, False), "seed": (int, False), "precision": (str, False),
    "data_dir": (str, True), "out_dir": (str, False),
    "train_limit": (int, True), "test_limit": (int, True),
    "shards_per_client": (int, False),
}
_ATTACK_FIELDS = {"kind": (str, False), "fraction": (float, False),
                  "sigma": (float, False)}
_SYNTH_FIELDS = {"num_classes": (int, False), "per_class": (int, False),
                 "test_per_class": (int, False), "dim": (int, False),
                 "separation": (float, False)}

_ENUMS = {
    "scheme": SCHEMES,
    "init_mode": INIT_MODES,
    "model": MODELS,
    "dataset": DATASETS,
    "partition": PARTITIONS,
    "precision": PRECISIONS,
    "attack.kind": attacks.KINDS,
}


def _coerce(key: str, value, target_type, may_be_null: bool):
    if value is None:
        if may_be_null:
            return None
        raise ConfigError(f"{key}: may not be null")
    if target_type is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {type(value).__name__}")
        return float(value)
    if target_type is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer, got {type(value).__name__}")
        return value
    if not isinstance(value, str):
        raise ConfigError(f"{key}: expected a string, got {type(value).__name__}")
    return value


def _build_section(schema: dict, defaults, raw: dict, prefix: str):
    values = {}
    for key, value in raw.items():
        qualified = f"{prefix}{key}"
        if key not in schema:
            raise ConfigError(f"unknown config key {qualified!r}")
        ftype, nullable = schema[key]
        values[key] = _coerce(qualified, value, ftype, nullable)
    return dataclasses.replace(defaults, **values)


def from_dict(raw: dict) -> ExperimentConfig:
    """Build a validated config from a plain dict (e.g. parsed JSON)."""
    if not isinstance(raw, dict):
        raise ConfigError("config document must be a JSON object")
    raw = dict(raw)
    attack_raw = raw.pop("attack", None)
    synth_raw = raw.pop("synth", None)
    cfg = _build_section(_TOP_FIELDS, ExperimentConfig(), raw, "")
    if attack_raw is not None:
        if not isinstance(attack_raw, dict):
            raise ConfigError("attack: expected an object")
        cfg = dataclasses.replace(
            cfg, attack=_build_section(_ATTACK_FIELDS, cfg.attack, attack_raw, "attack."))
    if synth_raw is not None:
        if not isinstance(synth_raw, dict):
            raise ConfigError("synth: expected an object")
        cfg = dataclasses.replace(
            cfg, synth=_build_section(_SYNTH_FIELDS, cfg.synth, synth_raw, "synth."))
    validate(cfg)
    return cfg


def apply_overrides(cfg: ExperimentConfig, overrides: dict) -> ExperimentConfig:
    """Apply dotted-key overrides (flag values win over file values)."""
    merged = to_dict(cfg)
    for key, value in overrides.items():
        if value is None:
            continue
        parts = key.split(".")
        slot = merged
        for p in parts[:-1]:
            nxt = slot.get(p)
            if not isinstance(nxt, dict):
                raise ConfigError(f"unknown config key {key!r}")
            slot = nxt
        slot[parts[-1]] = value
    return from_dict(merged)


def validate(cfg: ExperimentConfig):
    for key, allowed in _ENUMS.items():
        value = cfg.attack.kind if key == "attack.kind" else getattr(cfg, key)
        if value not in allowed:
            raise ConfigError(f"{key}: {value!r} not one of {list(allowed)}")
    if cfg.clients < 1:
        raise ConfigError("clients: must be >= 1")
    if not 0.0 < cfg.participation <= 1.0:
        raise ConfigError("participation: must be in (0,1]")
    if cfg.rounds < 1:
        raise ConfigError("rounds: must be >= 1")
    if cfg.lr <= 0:
        raise ConfigError("lr: must be > 0")
    if cfg.batch_size < 1:
        raise ConfigError("batch_size: must be >= 1")
    if cfg.local_iters < 1:
        raise ConfigError("local_iters: must be >= 1")
    if not 0.0 <= cfg.attack.fraction <= 1.0:
        raise ConfigError("attack.fraction: must be in [0,1]")
    if cfg.attack.sigma < 0:
        raise ConfigError("attack.sigma: must be >= 0")
    if cfg.shards_per_client < 1:
        raise ConfigError("shards_per_client: must be >= 1")
    for name in ("train_limit", "test_limit"):
        v = getattr(cfg, name)
        if v is not None and v < 1:
            raise ConfigError(f"{name}: must be >= 1 when set")
    if cfg.synth.num_classes < 2 or cfg.synth.per_class < 1 or cfg.synth.dim < 1:
        raise ConfigError("synth: num_classes >= 2, per_class >= 1, dim >= 1")
    if cfg.synth.test_per_class < 1:
        raise ConfigError("synth.test_per_class: must be >= 1")
    if cfg.synth.separation <= 0:
        raise ConfigError("synth.separation: must be > 0")


def to_dict(cfg: ExperimentConfig) -> dict:
    return dataclasses.asdict(cfg)


def to_json(cfg: ExperimentConfig) -> str:
    return json.dumps(to_dict(cfg), indent=2) + "\n"


def parse_config(path: str | Path | None, overrides: dict | None = None) -> ExperimentConfig:
    """Load a JSON config file (or defaults when None) and apply overrides."""
    if path is None:
        cfg = ExperimentConfig()
        validate(cfg)
    else:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        cfg = from_dict(raw)
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    return cfg
