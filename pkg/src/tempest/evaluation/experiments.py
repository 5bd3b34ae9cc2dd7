"""Experiment runners behind the result curves.

Each runner rebuilds the full pipeline (join, target, split, schema,
scale, train, score) per curve point with a fixed seed, so a point is a
pure function of its fingerprint.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field, replace
from datetime import date
from typing import Sequence

import numpy as np

from .. import models
from ..dataset import DatasetSplit, attach_target, join_cities, split_by_date, trailing_weeks_subset
from ..ingest import RawObservation, canonical_text
from ..preprocess import EncodedDataset, prepare
from .metrics import EvalReport

log = logging.getLogger(__name__)

DEFAULT_TEST_SIZES = (20, 40, 60, 80, 100, 120, 140, 160)


class ExperimentError(RuntimeError):
    def __init__(self, where: str, cause: Exception):
        super().__init__(f"{where}: {type(cause).__name__}: {cause}")
        self.where = where
        self.cause = cause


@dataclass(frozen=True)
class CurvePoint:
    x: str
    rmse: float
    fingerprint: str


@dataclass(frozen=True)
class Setup:
    """Everything a curve point depends on besides the corpus."""

    cities: tuple[str, ...]
    train_range: tuple[date, date]
    test_range: tuple[date, date]
    model: models.ModelConfig = field(default_factory=models.ModelConfig)
    scaler_scope: str = "train"
    # Treat an unconverged SVR as an error instead of a logged warning.
    strict_convergence: bool = False

    @property
    def target_city(self) -> str:
        return self.cities[0]


def corpus_digest(observations: Sequence[RawObservation]) -> str:
    return hashlib.sha256(canonical_text(observations).encode()).hexdigest()[:16]


def fingerprint(setup: Setup, corpus: str, **extra) -> str:
    blob = {
        "cities": list(setup.cities),
        "train_range": [d.isoformat() for d in setup.train_range],
        "test_range": [d.isoformat() for d in setup.test_range],
        "model": setup.model.to_dict(),
        "scaler_scope": setup.scaler_scope,
        "corpus": corpus,
        **extra,
    }
    return hashlib.sha256(json.dumps(blob, sort_keys=True).encode()).hexdigest()[:16]


def build_split(observations: Sequence[RawObservation], setup: Setup) -> DatasetSplit:
    rows = join_cities(observations, setup.cities)
    rows = attach_target(rows, setup.target_city)
    return split_by_date(rows, setup.train_range, setup.test_range, setup.target_city)


@dataclass
class Fit:
    model: models.TrainedModel
    train: EncodedDataset
    test: EncodedDataset

    def report(self, size: int | None = None) -> EvalReport:
        test = self.test if size is None else self.test.head(size)
        return EvalReport.from_predictions(models.predict(self.model, test.matrix), test.targets)


def fit_split(split: DatasetSplit, setup: Setup) -> Fit:
    train, test, _ = prepare(split.train, split.test, setup.scaler_scope)
    model = models.train(setup.model, train)
    if model.info.get("converged") is False and setup.strict_convergence:
        raise models.NonConvergence(f"SVR hit max_iter={model.config.resolved()['max_iter']}")
    return Fit(model, train, test)


def evaluate_setup(observations, setup: Setup, cache: dict | None = None) -> Fit:
    """Full pipeline for one setup. ``cache`` maps fingerprints to fits so
    runners sharing a configuration (e.g. the ten-city RFR) train it once."""
    if cache is None:
        return fit_split(build_split(observations, setup), setup)
    key = fingerprint(setup, corpus_digest(observations))
    if key not in cache:
        cache[key] = fit_split(build_split(observations, setup), setup)
    return cache[key]


def _guard(where: str, fn, *args):
    try:
        return fn(*args)
    except ExperimentError:
        raise
    except Exception as exc:
        raise ExperimentError(where, exc) from exc


def run_adding_cities(
    observations, setup: Setup, counts: Sequence[int] | None = None, cache: dict | None = None
) -> list[CurvePoint]:
    """RMSE with the first k cities for k = 1..len(cities); target city is first."""
    digest = corpus_digest(observations)
    counts = counts or range(1, len(setup.cities) + 1)
    points = []
    for k in counts:
        sub = replace(setup, cities=setup.cities[:k])
        fit = _guard(f"cities k={k}", evaluate_setup, observations, sub, cache)
        rep = fit.report()
        log.info("cities k=%d rmse=%.4f", k, rep.rmse)
        points.append(CurvePoint(str(k), rep.rmse, fingerprint(sub, digest, experiment="cities", k=k)))
    return points


def run_weeks_curve(observations, setup: Setup, k_max: int = 9) -> list[CurvePoint]:
    """RMSE when training on the k weeks right before the test window."""
    digest = corpus_digest(observations)
    split = _guard("weeks", build_split, observations, setup)
    points = []
    for k in range(1, k_max + 1):
        sub = _guard(f"weeks k={k}", trailing_weeks_subset, split, k)
        fit = _guard(f"weeks k={k}", fit_split, sub, setup)
        rep = fit.report()
        log.info("weeks k=%d rmse=%.4f train_rows=%d", k, rep.rmse, len(sub.train))
        points.append(CurvePoint(str(k), rep.rmse, fingerprint(setup, digest, experiment="weeks", k=k)))
    return points


def run_model_comparison(
    observations,
    setup: Setup,
    variants: Sequence[str] = models.VARIANTS,
    hyperparameters: dict | None = None,
    cache: dict | None = None,
) -> list[CurvePoint]:
    """Every variant on the target city alone and on all cities; x is ``variant@k``."""
    digest = corpus_digest(observations)
    hyperparameters = hyperparameters or {}
    points = []
    for variant in variants:
        cfg = models.ModelConfig(variant, setup.model.seed, hyperparameters.get(variant, {}))
        for k in (1, len(setup.cities)):
            sub = replace(setup, cities=setup.cities[:k], model=cfg)
            fit = _guard(f"models {variant} k={k}", evaluate_setup, observations, sub, cache)
            rep = fit.report()
            log.info("models %s k=%d rmse=%.4f", variant, k, rep.rmse)
            points.append(CurvePoint(f"{variant}@{k}", rep.rmse, fingerprint(sub, digest, experiment="models")))
    return points


def run_test_size_curve(
    observations, setup: Setup, sizes: Sequence[int] = DEFAULT_TEST_SIZES, cache: dict | None = None
) -> list[CurvePoint]:
    """RMSE on chronological prefixes of the test set; x is ``size@k``."""
    sizes = list(sizes)
    if not sizes or min(sizes) < 1:
        raise ValueError(f"test sizes must be positive, got {sizes}")
    digest = corpus_digest(observations)
    points = []
    for k in (1, len(setup.cities)):
        sub = replace(setup, cities=setup.cities[:k])
        fit = _guard(f"testsize k={k}", evaluate_setup, observations, sub, cache)
        if len(fit.test) < max(sizes):
            raise ExperimentError(
                f"testsize k={k}", ValueError(f"test window has {len(fit.test)} rows, need {max(sizes)}")
            )
        for size in sizes:
            rep = fit.report(size)
            points.append(
                CurvePoint(f"{size}@{k}", rep.rmse, fingerprint(sub, digest, experiment="testsize", size=size))
            )
    return points


def residual_reports(observations, setup: Setup, cache: dict | None = None) -> dict[str, EvalReport]:
    """Test residuals for the one-city and all-city configurations."""
    out = {}
    for k in (1, len(setup.cities)):
        sub = replace(setup, cities=setup.cities[:k])
        fit = _guard(f"residuals k={k}", evaluate_setup, observations, sub, cache)
        out[f"{k}"] = fit.report()
    return out


def relative_gap(one_city: float, multi_city: float) -> float:
    return 1.0 - multi_city / one_city if one_city else 0.0


def curve_table(points: Sequence[CurvePoint]) -> np.ndarray:
    return np.array([p.rmse for p in points])
