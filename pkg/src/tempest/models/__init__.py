"""Five regressors behind one ``train``/``predict`` interface.

``ridge``  closed-form ridge regression
``svr``    RBF support vector regression (SMO)
``mlp``    two hidden layers, ReLU, Adam
``rfr``    random forest (bootstrap, best CART splits)
``etr``    extra-trees (full sample, random thresholds)
"""

from __future__ import annotations

import hashlib
import io
import json
import logging
import math
import os
import zipfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .mlp import MLP, Divergence, train_mlp
from .ridge import SingularSystem, train_ridge
from .svr import SVRFit, train_svr
from .tree import RegressionTree, predict_forest, train_forest

VARIANTS = ("ridge", "svr", "mlp", "rfr", "etr")
ARTIFACT_VERSION = 1

log = logging.getLogger(__name__)

DEFAULTS: dict[str, dict[str, Any]] = {
    "ridge": {"lam": 1.0},
    "svr": {"C": 10.0, "epsilon": 0.5, "gamma": None, "tol": 1e-3, "max_iter": 10000},
    "mlp": {"hidden": [100, 50], "epochs": 200, "batch": 32, "learning_rate": 1e-3},
    "rfr": {"n_trees": 100, "max_features": None, "min_leaf": 2},
    "etr": {"n_trees": 100, "max_features": None, "min_leaf": 2},
}


class ModelError(Exception):
    pass


class BadHyperparameter(ModelError, ValueError):
    pass


class DegenerateData(ModelError, ValueError):
    pass


class WidthMismatch(ModelError, ValueError):
    pass


class NonConvergence(ModelError):
    """SVR stopped at max_iter; raised only where the caller asks for strictness."""


class SchemaHashMismatch(ModelError):
    def __init__(self, expected: str, got: str):
        super().__init__(f"model was trained on schema {expected}, data has schema {got}")
        self.expected = expected
        self.got = got


@dataclass(frozen=True)
class ModelConfig:
    variant: str = "rfr"
    seed: int = 0
    hyperparameters: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise BadHyperparameter(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        unknown = set(self.hyperparameters) - set(DEFAULTS[self.variant])
        if unknown:
            raise BadHyperparameter(f"unknown {self.variant} hyperparameters: {sorted(unknown)}")

    def resolved(self) -> dict:
        return {**DEFAULTS[self.variant], **self.hyperparameters}

    def to_dict(self) -> dict:
        return {"variant": self.variant, "seed": self.seed, "hyperparameters": self.resolved()}


@dataclass(frozen=True)
class TrainedModel:
    config: ModelConfig
    width: int
    schema_hash: str
    fitted: Any
    info: dict = field(default_factory=dict)

    @property
    def variant(self) -> str:
        return self.config.variant


def train(config: ModelConfig, data, n_jobs: int = 1) -> TrainedModel:
    """Fit ``config.variant`` on an :class:`~tempest.preprocess.EncodedDataset`.

    All randomness comes from ``config.seed``. ``n_jobs`` only parallelizes
    forest training and never changes the result.
    """
    X = np.asarray(data.matrix, dtype=float)
    y = np.asarray(data.targets, dtype=float)
    n, p = X.shape
    if n < 2 or p == 0:
        raise DegenerateData(f"need at least 2 rows and 1 column, got {n}x{p}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise DegenerateData("training data has non-finite entries")
    hp = config.resolved()
    info: dict = {}
    v = config.variant
    if v == "ridge":
        if hp["lam"] < 0:
            raise BadHyperparameter("lam must be >= 0")
        fitted = train_ridge(X, y, hp["lam"])
    elif v == "svr":
        try:
            fitted = train_svr(X, y, hp["C"], hp["epsilon"], hp["gamma"], hp["tol"], hp["max_iter"])
        except ValueError as exc:
            raise BadHyperparameter(str(exc)) from exc
        info = {"converged": fitted.converged, "iterations": fitted.iterations}
    elif v == "mlp":
        _check_scaled(data)
        fitted = train_mlp(
            X, y, tuple(hp["hidden"]), hp["epochs"], hp["batch"], hp["learning_rate"], seed=config.seed
        )
        info = {"final_loss": fitted.history[-1] if fitted.history else None}
    else:
        max_features = hp["max_features"] if hp["max_features"] is not None else math.ceil(p / 3)
        try:
            fitted = train_forest(
                X,
                y,
                n_trees=hp["n_trees"],
                max_features=max_features,
                min_leaf=hp["min_leaf"],
                bootstrap=v == "rfr",
                split_rule="best" if v == "rfr" else "random",
                seed=config.seed,
                n_jobs=n_jobs,
            )
        except ValueError as exc:
            raise BadHyperparameter(str(exc)) from exc
    schema = getattr(data, "schema", None)
    return TrainedModel(config, p, schema.digest() if schema is not None else "", fitted, info)


def _check_scaled(data) -> None:
    schema = getattr(data, "schema", None)
    if schema is None:
        return
    idx = schema.continuous_indices()
    if idx.size and np.any(np.abs(data.matrix[:, idx].mean(axis=0)) > 0.5):
        log.warning("MLP input has continuous columns with |mean| > 0.5; scale first")


def predict(model: TrainedModel, matrix: np.ndarray) -> np.ndarray:
    X = np.asarray(matrix, dtype=float)
    if X.ndim != 2:
        X = X.reshape(-1, model.width)
    if X.shape[1] != model.width:
        raise WidthMismatch(f"model expects {model.width} columns, got {X.shape[1]}")
    if X.shape[0] == 0:
        return np.zeros(0)
    f = model.fitted
    v = model.variant
    if v == "ridge":
        w, b = f
        return X @ w + b
    if v in ("svr", "mlp"):
        return f.predict(X)
    return predict_forest(f, X)


def check_schema(model: TrainedModel, schema_hash: str) -> None:
    if model.schema_hash != schema_hash:
        raise SchemaHashMismatch(model.schema_hash, schema_hash)


# -- artifacts -------------------------------------------------------------
# A model artifact is a zip of ``meta.json`` plus one ``.npy`` per array, with
# fixed member timestamps so identical models give identical bytes.


def _arrays(model: TrainedModel) -> dict[str, np.ndarray]:
    f = model.fitted
    v = model.variant
    if v == "ridge":
        return {"w": f[0], "b": np.array([f[1]])}
    if v == "svr":
        return {
            "support": f.support,
            "coef": f.coef,
            "scalars": np.array([f.bias, f.gamma, f.objective]),
        }
    if v == "mlp":
        out = {"y": np.array([f.y_mean, f.y_scale]), "history": np.array(f.history)}
        for k, (w, b) in enumerate(zip(f.weights, f.biases)):
            out[f"w{k}"], out[f"b{k}"] = w, b
        return out
    sizes = np.array([t.n_nodes for t in f])
    return {
        "sizes": sizes,
        "feature": np.concatenate([t.feature for t in f]),
        "threshold": np.concatenate([t.threshold for t in f]),
        "left": np.concatenate([t.left for t in f]),
        "right": np.concatenate([t.right for t in f]),
        "value": np.concatenate([t.value for t in f]),
    }


def _rebuild(variant: str, arrays: dict[str, np.ndarray], info: dict):
    if variant == "ridge":
        return arrays["w"], float(arrays["b"][0])
    if variant == "svr":
        bias, gamma, objective = arrays["scalars"]
        return SVRFit(
            support=arrays["support"],
            coef=arrays["coef"],
            bias=float(bias),
            gamma=float(gamma),
            converged=info.get("converged", True),
            iterations=info.get("iterations", 0),
            objective=float(objective),
            dual=np.zeros(0),
        )
    if variant == "mlp":
        layers = sum(1 for k in arrays if k.startswith("w"))
        return MLP(
            weights=[arrays[f"w{k}"] for k in range(layers)],
            biases=[arrays[f"b{k}"] for k in range(layers)],
            y_mean=float(arrays["y"][0]),
            y_scale=float(arrays["y"][1]),
            history=list(arrays["history"]),
        )
    trees = []
    start = 0
    for size in arrays["sizes"]:
        sl = slice(start, start + int(size))
        trees.append(
            RegressionTree(
                arrays["feature"][sl],
                arrays["threshold"][sl],
                arrays["left"][sl],
                arrays["right"][sl],
                arrays["value"][sl],
            )
        )
        start += int(size)
    return trees


def artifact_bytes(model: TrainedModel) -> bytes:
    meta = {
        "version": ARTIFACT_VERSION,
        "config": model.config.to_dict(),
        "width": model.width,
        "schema_hash": model.schema_hash,
        "info": model.info,
    }
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        members = {"meta.json": json.dumps(meta, sort_keys=True, indent=1).encode()}
        for name, arr in sorted(_arrays(model).items()):
            raw = io.BytesIO()
            np.save(raw, np.ascontiguousarray(arr), allow_pickle=False)
            members[f"{name}.npy"] = raw.getvalue()
        for name, data in members.items():
            zi = zipfile.ZipInfo(name, date_time=(1980, 1, 1, 0, 0, 0))
            zi.compress_type = zipfile.ZIP_DEFLATED
            zi.external_attr = 0o644 << 16
            zf.writestr(zi, data)
    return buf.getvalue()


def save_model(model: TrainedModel, path: str | os.PathLike) -> str:
    """Write the artifact and return its sha256."""
    data = artifact_bytes(model)
    Path(path).write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def load_model(path: str | os.PathLike) -> TrainedModel:
    with zipfile.ZipFile(path) as zf:
        meta = json.loads(zf.read("meta.json"))
        if meta.get("version") != ARTIFACT_VERSION:
            raise ModelError(f"unsupported artifact version {meta.get('version')}")
        arrays = {
            name[:-4]: np.load(io.BytesIO(zf.read(name)), allow_pickle=False)
            for name in zf.namelist()
            if name.endswith(".npy")
        }
    cfg = meta["config"]
    config = ModelConfig(cfg["variant"], cfg["seed"], cfg["hyperparameters"])
    return TrainedModel(
        config, meta["width"], meta["schema_hash"], _rebuild(cfg["variant"], arrays, meta["info"]), meta["info"]
    )


__all__ = [
    "VARIANTS",
    "DEFAULTS",
    "ModelConfig",
    "TrainedModel",
    "train",
    "predict",
    "check_schema",
    "save_model",
    "load_model",
    "artifact_bytes",
    "BadHyperparameter",
    "DegenerateData",
    "WidthMismatch",
    "SchemaHashMismatch",
    "NonConvergence",
    "SingularSystem",
    "Divergence",
]
