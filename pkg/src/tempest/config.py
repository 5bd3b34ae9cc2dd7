"""Run configuration: one JSON file, validated up front, defaults merged in."""

from __future__ import annotations

import copy
import json
import os
from dataclasses import fields
from datetime import date, timedelta
from pathlib import Path

from . import models
from .evaluation.experiments import DEFAULT_TEST_SIZES, Setup
from .ingest import CityId
from .synth import TENNESSEE, Physics, SynthConfig


class ConfigError(ValueError):
    pass


DEFAULT_CONFIG: dict = {
    "seed": 2018,
    "cities": [{"name": c.name, "lat": c.lat, "lon": c.lon} for c in TENNESSEE],
    "target_city": "nashville",
    "train_range": None,
    "test_range": None,
    "scaler_scope": "train",
    "model": {"variant": "rfr", "hyperparameters": {}},
    "experiments": {
        "weeks_max": 9,
        "test_sizes": list(DEFAULT_TEST_SIZES),
        "variants": list(models.VARIANTS),
        "hyperparameters": {},
        "svr_nonconvergence_fatal": False,
    },
    "synth": {
        "start": "2018-06-23",
        "days": 70,
        "test_days": 7,
        "dropout": 0.0,
        "physics": {},
    },
    "fetch": {
        "start": None,
        "end": None,
        "fixture_dir": None,
        "base_url": None,
        "parallelism": 4,
        "rate_per_second": None,
        "retries": 3,
        "backoff": 1.0,
    },
    "paths": {"out": "out", "observations": None},
}


def _merge(base: dict, override: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key not in base:
            raise ConfigError(f"unknown config key {where}{key!r}")
        if isinstance(base[key], dict) and key not in ("hyperparameters", "physics"):
            if not isinstance(value, dict):
                raise ConfigError(f"{where}{key} must be an object")
            out[key] = _merge(base[key], value, f"{where}{key}.")
        else:
            out[key] = copy.deepcopy(value)
    return out


def _date(value, name: str) -> date:
    try:
        return date.fromisoformat(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be an ISO date, got {value!r}") from None


class RunConfig:
    """Validated, fully merged configuration."""

    def __init__(self, raw: dict | None = None):
        self.data = _merge(DEFAULT_CONFIG, raw or {})
        self._validate()

    @classmethod
    def load(cls, path: str | os.PathLike | None, overrides: dict | None = None) -> "RunConfig":
        raw = {}
        if path is not None:
            try:
                raw = json.loads(Path(path).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config root must be an object")
        merged = _merge(DEFAULT_CONFIG, raw)
        for dotted, value in (overrides or {}).items():
            node = merged
            *parents, leaf = dotted.split(".")
            for p in parents:
                node = node[p]
            node[leaf] = value
        return cls(merged)

    def _validate(self) -> None:
        d = self.data
        try:
            self.cities = [CityId(c["name"], float(c["lat"]), float(c["lon"])) for c in d["cities"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad city entry: {exc}") from exc
        names = [c.name for c in self.cities]
        if len(set(names)) != len(names) or not names:
            raise ConfigError("city names must be unique and nonempty")
        if d["target_city"] not in names:
            raise ConfigError(f"target_city {d['target_city']!r} is not among the cities")
        if d["scaler_scope"] not in ("train", "union"):
            raise ConfigError("scaler_scope must be 'train' or 'union'")
        s = d["synth"]
        if not isinstance(s["days"], int) or s["days"] < 1:
            raise ConfigError("synth.days must be a positive integer")
        if not isinstance(s["test_days"], int) or s["test_days"] < 1:
            raise ConfigError("synth.test_days must be a positive integer")
        unknown = set(s["physics"]) - {f.name for f in fields(Physics)}
        if unknown:
            raise ConfigError(f"unknown synth.physics keys {sorted(unknown)}")
        self.synth_start = _date(s["start"], "synth.start")
        if d["train_range"] is None:
            self.train_range = (self.synth_start, self.synth_start + timedelta(days=s["days"]))
        else:
            self.train_range = tuple(_date(v, "train_range") for v in d["train_range"])
        if d["test_range"] is None:
            self.test_range = (self.train_range[1], self.train_range[1] + timedelta(days=s["test_days"]))
        else:
            self.test_range = tuple(_date(v, "test_range") for v in d["test_range"])
        for name, rng in (("train_range", self.train_range), ("test_range", self.test_range)):
            if len(rng) != 2 or not rng[0] < rng[1]:
                raise ConfigError(f"{name} must be [start, end) with start < end")
        if self.train_range[0] < self.test_range[1] and self.test_range[0] < self.train_range[1]:
            raise ConfigError("train_range and test_range overlap")
        try:
            self.model = models.ModelConfig(d["model"]["variant"], int(d["seed"]), d["model"]["hyperparameters"])
            for variant in d["experiments"]["variants"]:
                models.ModelConfig(variant, 0, d["experiments"]["hyperparameters"].get(variant, {}))
        except (KeyError, models.BadHyperparameter) as exc:
            raise ConfigError(f"bad model config: {exc}") from exc
        unknown = set(d["experiments"]["hyperparameters"]) - set(models.VARIANTS)
        if unknown:
            raise ConfigError(f"unknown variants in experiments.hyperparameters: {sorted(unknown)}")
        e = d["experiments"]
        if not isinstance(e["weeks_max"], int) or e["weeks_max"] < 1:
            raise ConfigError("experiments.weeks_max must be a positive integer")
        if not e["test_sizes"] or any(not isinstance(x, int) or x < 1 for x in e["test_sizes"]):
            raise ConfigError("experiments.test_sizes must be positive integers")

    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    @property
    def out(self) -> Path:
        return Path(self.data["paths"]["out"])

    @property
    def city_order(self) -> tuple[str, ...]:
        target = self.data["target_city"]
        return (target,) + tuple(c.name for c in self.cities if c.name != target)

    def setup(self, model: models.ModelConfig | None = None) -> Setup:
        return Setup(
            cities=self.city_order,
            train_range=self.train_range,
            test_range=self.test_range,
            model=model or self.model,
            scaler_scope=self.data["scaler_scope"],
            strict_convergence=bool(self.data["experiments"]["svr_nonconvergence_fatal"]),
        )

    def synth_config(self) -> SynthConfig:
        s = self.data["synth"]
        ordered = sorted(self.cities, key=lambda c: self.city_order.index(c.name))
        return SynthConfig(
            cities=tuple(ordered),
            start=self.synth_start,
            days=s["days"] + s["test_days"] + 1,
            seed=self.seed,
            physics=Physics(**s["physics"]),
            dropout=float(s["dropout"]),
        )

    def effective_json(self) -> str:
        return json.dumps(self.data, indent=1, sort_keys=True) + "\n"

    def echo(self, out: Path | None = None) -> None:
        out = out or self.out
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.json").write_text(self.effective_json())

    def as_dict(self) -> dict:
        return copy.deepcopy(self.data)

