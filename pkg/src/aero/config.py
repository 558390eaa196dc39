"""Experiment configuration files (JSON).

Example::

    {
      "scenarios": [1, 2, 3, 4, 5, 6],
      "approaches": ["aero", "live", "intermittent"],
      "trace": "synthetic",
      "seed": 0,
      "runs": 100,
      "horizon_us": null,
      "costs": {"apply_uj_per_byte": 0.25},
      "deadline": {"margin_factor": 1.5}
    }

``trace`` is a bundled trace name or a CSV path; relative paths resolve
against the config file's directory.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

from .energy import TRACE_DIR, HarvestTrace
from .errors import AeroError, ConfigError
from .scheduler import DeadlinePolicy
from .sim import Approach
from .update import CostModel

CONFIG_ENV = "AERO_CONFIG_DIR"
_KEYS = {"scenarios", "approaches", "trace", "seed", "runs", "horizon_us", "costs", "deadline"}


@dataclass
class ExperimentConfig:
    scenarios: list = field(default_factory=lambda: [1, 2, 3, 4, 5, 6])
    approaches: list[Approach] = field(default_factory=lambda: list(Approach))
    trace: str = "synthetic"
    seed: int = 0
    runs: int = 100
    horizon_us: float | None = None
    costs: CostModel = field(default_factory=CostModel)
    deadline: DeadlinePolicy = field(default_factory=DeadlinePolicy)
    base_dir: Path = field(default_factory=Path.cwd)

    def load_trace(self) -> HarvestTrace:
        return load_trace(self.trace, self.base_dir)


def load_trace(spec: str, base_dir: Path | None = None) -> HarvestTrace:
    bundled = TRACE_DIR / f"{spec}.csv"
    if bundled.exists():
        return HarvestTrace.from_csv(bundled)
    path = Path(spec)
    if not path.is_absolute() and base_dir is not None:
        path = base_dir / path
    if not path.exists():
        raise ConfigError(f"trace {spec!r} is neither a bundled trace nor an existing file")
    try:
        return HarvestTrace.from_csv(path)
    except (AeroError, ValueError, KeyError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def resolve_config_path(path: str) -> Path:
    p = Path(path)
    if p.is_absolute() or p.exists():
        return p
    base = os.environ.get(CONFIG_ENV)
    if base and (Path(base) / p).exists():
        return Path(base) / p
    raise ConfigError(f"config file {path!r} not found" + (f" (also looked in ${CONFIG_ENV}={base})" if base else ""))


def _dataclass_from(cls, data, what: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{what} must be an object")
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown {what} keys: {sorted(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad {what}: {exc}") from exc


def parse_config(data: dict, base_dir: Path | None = None) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(data) - _KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg = ExperimentConfig(base_dir=base_dir or Path.cwd())
    if "scenarios" in data:
        if not isinstance(data["scenarios"], list) or not data["scenarios"]:
            raise ConfigError("scenarios must be a non-empty list")
        cfg.scenarios = list(data["scenarios"])
    if "approaches" in data:
        try:
            cfg.approaches = [Approach(a) for a in data["approaches"]]
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"bad approach list: {exc}") from exc
    if "trace" in data:
        cfg.trace = str(data["trace"])
    for key in ("seed", "runs"):
        if key in data:
            if not isinstance(data[key], int) or isinstance(data[key], bool):
                raise ConfigError(f"{key} must be an integer")
            setattr(cfg, key, data[key])
    if cfg.runs < 1:
        raise ConfigError("runs must be >= 1")
    if data.get("horizon_us") is not None:
        h = data["horizon_us"]
        if not isinstance(h, (int, float)) or h <= 0:
            raise ConfigError("horizon_us must be a positive number")
        cfg.horizon_us = float(h)
    if "costs" in data:
        cfg.costs = _dataclass_from(CostModel, data["costs"], "costs")
    if "deadline" in data:
        cfg.deadline = _dataclass_from(DeadlinePolicy, data["deadline"], "deadline")
    return cfg


def load_config(path: str) -> ExperimentConfig:
    p = resolve_config_path(path)
    try:
        data = json.loads(p.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{p}: {exc}") from exc
    return parse_config(data, p.parent)
