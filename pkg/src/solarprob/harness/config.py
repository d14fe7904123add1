"""Experiment configuration.

Config files are flat UTF-8 text: one ``key = value`` per line, ``#``
starts a comment, list values are comma-separated. Any key can be
overridden from the command line with ``--key value`` (underscores and
dashes are interchangeable).
"""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Mapping

from solarprob.calibrate import CALIBRATORS
from solarprob.errors import ConfigInvalid
from solarprob.ingest import normalize_resolution

DATA_DIR_ENV = "SOLARPROB_DATA_DIR"
MODELS = ("ngboost", "chp", "peen", "mcm")
INTRA_HOURLY_HORIZONS = tuple(range(5, 61, 5))  # minutes
HOURLY_HORIZONS = tuple(range(1, 7))  # hours


def bundled_data_dir() -> Path:
    return Path(str(resources.files("solarprob") / "data" / "sample"))


def default_data_dir() -> str:
    return os.environ.get(DATA_DIR_ENV) or str(bundled_data_dir())


@dataclass(frozen=True)
class ExperimentConfig:
    stations: tuple = ("syn",)
    data_dir: str = field(default_factory=default_data_dir)
    clearsky: str = "computed"  # or "csv" (<data_dir>/<station>/clearsky.csv) or "csv:<path>"
    resolution: str = "intra_hourly"
    horizons: tuple = ()  # minutes (intra-hourly) or hours (hourly); empty means all
    models: tuple = MODELS
    calibrators: tuple = CALIBRATORS
    train_year: int = 2016
    cal_year: int = 2017
    test_year: int = 2018
    repeats: int = 10
    sample_size: int = 2000
    seed: int = 0
    n_estimators: int = 500
    learning_rate: float = 0.01
    max_depth: int = 3
    min_samples_leaf: int = 1
    minibatch_frac: float = 0.0  # 0 means 1.0 intra-hourly, 0.5 hourly
    k_cap: float = 1.2
    daytime_threshold: float = 5.0
    solar_constant: float = 1361.0
    mcm_states: int = 30
    peen_min_members: int = 0  # 0 means 6 intra-hourly, 2 hourly
    fan_horizon: int = 0  # 0 means the first configured horizon
    fan_days: int = 3

    def __post_init__(self):
        try:
            object.__setattr__(self, "resolution", "hourly" if normalize_resolution(self.resolution) == "hourly" else "intra_hourly")
        except ValueError as exc:
            raise ConfigInvalid(str(exc)) from None
        if not self.horizons:
            object.__setattr__(self, "horizons", HOURLY_HORIZONS if self.hourly else INTRA_HOURLY_HORIZONS)
        self.validate()

    @property
    def hourly(self) -> bool:
        return self.resolution == "hourly"

    @property
    def grid_resolution(self) -> str:
        return "hourly" if self.hourly else "5min"

    @property
    def horizon_minutes(self) -> tuple:
        return tuple(h * 60 for h in self.horizons) if self.hourly else tuple(self.horizons)

    @property
    def effective_minibatch_frac(self) -> float:
        if self.minibatch_frac:
            return self.minibatch_frac
        return 0.5 if self.hourly else 1.0

    @property
    def effective_peen_min_members(self) -> int:
        if self.peen_min_members:
            return self.peen_min_members
        return 2 if self.hourly else 6

    @property
    def effective_fan_horizon(self) -> int:
        """Fan-chart horizon in minutes."""
        h = self.fan_horizon or self.horizons[0]
        return h * 60 if self.hourly else h

    def validate(self):
        years = (self.train_year, self.cal_year, self.test_year)
        if len(set(years)) != 3:
            raise ConfigInvalid(f"train/cal/test years must be distinct, got {years}")
        if not self.stations:
            raise ConfigInvalid("no stations configured")
        valid = HOURLY_HORIZONS if self.hourly else INTRA_HOURLY_HORIZONS
        bad = [h for h in self.horizons if h not in valid]
        if bad:
            raise ConfigInvalid(f"horizons {bad} invalid for {self.resolution}; allowed {valid}")
        if len(set(self.horizons)) != len(self.horizons):
            raise ConfigInvalid("duplicate horizons")
        if self.fan_horizon and self.fan_horizon not in self.horizons:
            raise ConfigInvalid("fan_horizon must be one of the configured horizons")
        for name, allowed in (("models", MODELS), ("calibrators", CALIBRATORS)):
            chosen = getattr(self, name)
            if not chosen or any(c not in allowed for c in chosen) or len(set(chosen)) != len(chosen):
                raise ConfigInvalid(f"{name} must be a nonempty subset of {allowed}, got {chosen}")
        if self.repeats < 1 or self.sample_size < 1:
            raise ConfigInvalid("repeats and sample_size must be at least 1")
        if self.n_estimators < 1 or self.max_depth < 1 or self.min_samples_leaf < 1 or self.mcm_states < 2:
            raise ConfigInvalid("model sizes must be positive (mcm_states >= 2)")
        if not 0.0 <= self.minibatch_frac <= 1.0 or not self.learning_rate > 0:
            raise ConfigInvalid("minibatch_frac must lie in [0, 1] and learning_rate be positive")
        if not (self.clearsky == "computed" or self.clearsky == "csv" or self.clearsky.startswith("csv:")):
            raise ConfigInvalid(f"clearsky must be 'computed', 'csv' or 'csv:<path>', got {self.clearsky!r}")
        if self.fan_days < 1 or self.k_cap <= 0:
            raise ConfigInvalid("fan_days and k_cap must be positive")

    @classmethod
    def from_mapping(cls, values: Mapping[str, str]) -> "ExperimentConfig":
        kwargs = {}
        types = {f.name: f for f in fields(cls)}
        for raw_key, raw_value in values.items():
            key = raw_key.strip().replace("-", "_")
            if key not in types:
                raise ConfigInvalid(f"unknown config key {raw_key!r}")
            kwargs[key] = _coerce(key, types[key], raw_value)
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigInvalid(str(exc)) from None

    @classmethod
    def from_file(cls, path: str | Path, overrides: Mapping[str, str] | None = None) -> "ExperimentConfig":
        values = parse_config_text(Path(path).read_text(encoding="utf-8"))
        values.update(overrides or {})
        return cls.from_mapping(values)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def echo(self) -> dict:
        """Canonical key/value view used in the run manifest."""
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out


def parse_config_text(text: str) -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigInvalid(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigInvalid(f"line {lineno}: empty key")
        values[key.replace("-", "_")] = value
    return values


def _coerce(key: str, f: dataclasses.Field, raw):
    if not isinstance(raw, str):
        return tuple(raw) if isinstance(raw, list) else raw
    default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
    try:
        if isinstance(default, tuple):
            items = [item.strip() for item in raw.split(",") if item.strip()]
            return tuple(int(i) for i in items) if key == "horizons" else tuple(items)
        if isinstance(default, bool):
            return raw.lower() in ("1", "true", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise ConfigInvalid(f"bad value for {key}: {raw!r}") from None
    return raw


CONFIG_KEYS = tuple(f.name for f in fields(ExperimentConfig))
