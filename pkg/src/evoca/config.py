"""Experiment configuration: typed sections, strict parsing, round-tripping.

Configs are plain JSON objects.  Unknown keys are rejected rather than
ignored so a typo cannot silently fall back to a default, and every
constraint violation reports the key path it belongs to.
"""

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .neuroevo import DEFAULT_POOL_CAPACITY, EvolutionRates
from .physics import PhysicsParams

__all__ = [
    "GridConfig",
    "HypernetConfig",
    "RunConfig",
    "ServeConfig",
    "ExperimentConfig",
    "load_config",
    "parse_config",
    "config_to_dict",
]


@dataclass
class GridConfig:
    width: int = 256
    height: int = 256

    def validate(self) -> None:
        if self.width < 4:
            raise ValueError("grid.width must be >= 4")
        if self.height < 4:
            raise ValueError("grid.height must be >= 4")


@dataclass
class HypernetConfig:
    hidden_size: int = 16
    tau: float = 0.2
    w_max: float = 3.0

    def validate(self) -> None:
        if self.hidden_size < 1:
            raise ValueError("hypernet.hidden_size must be >= 1")
        if not 0.0 <= self.tau < 1.0:
            raise ValueError("hypernet.tau must be in [0, 1)")
        if self.w_max <= 0:
            raise ValueError("hypernet.w_max must be positive")


@dataclass
class RunConfig:
    steps: int = 1000
    metrics_every: int = 100
    snapshot_every: int = 0  # 0 disables periodic snapshots
    frame_every: int = 100   # offline frame-dump cadence

    def validate(self) -> None:
        if self.steps < 0:
            raise ValueError("run.steps must be >= 0")
        for name in ("metrics_every", "snapshot_every", "frame_every"):
            if getattr(self, name) < 0:
                raise ValueError(f"run.{name} must be >= 0")
        if self.metrics_every == 0:
            raise ValueError("run.metrics_every must be >= 1")
        if self.frame_every == 0:
            raise ValueError("run.frame_every must be >= 1")


@dataclass
class ServeConfig:
    host: str = "127.0.0.1"
    port: int = 8765
    frame_fps: float = 10.0
    telemetry_fps: float = 2.0
    max_steps_per_second: float = 0.0  # 0 means unthrottled

    def validate(self) -> None:
        if not 0 <= self.port <= 65535:
            raise ValueError("serve.port must be in [0, 65535]")
        if self.frame_fps <= 0:
            raise ValueError("serve.frame_fps must be positive")
        if self.telemetry_fps <= 0:
            raise ValueError("serve.telemetry_fps must be positive")
        if self.max_steps_per_second < 0:
            raise ValueError("serve.max_steps_per_second must be >= 0")


@dataclass
class ExperimentConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    seed: int = 0
    initial_population: int = 64
    physics: PhysicsParams = field(default_factory=PhysicsParams)
    evolution: EvolutionRates = field(default_factory=EvolutionRates)
    hypernet: HypernetConfig = field(default_factory=HypernetConfig)
    run: RunConfig = field(default_factory=RunConfig)
    serve: ServeConfig = field(default_factory=ServeConfig)

    def validate(self) -> None:
        self.grid.validate()
        self.physics.validate()
        self.evolution.validate()
        self.hypernet.validate()
        self.run.validate()
        self.serve.validate()
        if self.seed < 0:
            raise ValueError("seed must be >= 0")
        if self.initial_population < 0:
            raise ValueError("initial_population must be >= 0")
        if self.initial_population > DEFAULT_POOL_CAPACITY:
            raise ValueError(
                f"initial_population must be <= {DEFAULT_POOL_CAPACITY}"
            )
        if self.initial_population > self.grid.width * self.grid.height:
            raise ValueError("initial_population must fit on the grid")


_SECTIONS = {
    "grid": GridConfig,
    "physics": PhysicsParams,
    "evolution": EvolutionRates,
    "hypernet": HypernetConfig,
    "run": RunConfig,
    "serve": ServeConfig,
}

_SCALAR_KEYS = ("seed", "initial_population")


def _coerce(path: str, default, value):
    """Type-check a config value against the field default."""
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ValueError(f"{path} must be a boolean")
        return value
    if isinstance(default, int):
        if not isinstance(value, int) or isinstance(value, bool):
            raise ValueError(f"{path} must be an integer")
        return value
    if isinstance(default, float):
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ValueError(f"{path} must be a number")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ValueError(f"{path} must be a string")
        return value
    return value


def _build_section(cls, data: dict, prefix: str):
    obj = cls()
    known = set(vars(obj))
    for key, value in data.items():
        if key not in known:
            raise ValueError(f"unknown key {prefix}.{key}")
        setattr(obj, key, _coerce(f"{prefix}.{key}", getattr(obj, key), value))
    return obj


def parse_config(data: dict) -> ExperimentConfig:
    """Build and validate a config from a parsed JSON object."""
    if not isinstance(data, dict):
        raise ValueError("config root must be an object")
    cfg = ExperimentConfig()
    for key, value in data.items():
        if key in _SECTIONS:
            if not isinstance(value, dict):
                raise ValueError(f"{key} must be an object")
            if key == "physics" and "energy_source_map" in value:
                raise ValueError("physics.energy_source_map is not configurable from file")
            setattr(cfg, key, _build_section(_SECTIONS[key], value, key))
        elif key in _SCALAR_KEYS:
            setattr(cfg, key, _coerce(key, getattr(cfg, key), value))
        else:
            raise ValueError(f"unknown key {key}")
    cfg.validate()
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    """Read a JSON config file; {} yields the defaults."""
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    return parse_config(data)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    """Dump a config to a JSON-ready dict that parse_config round-trips."""
    out = asdict(cfg)
    out["physics"].pop("energy_source_map", None)
    return out
