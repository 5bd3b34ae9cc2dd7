"""Feature schema, one-hot encoding and standardization.

Vocabularies are built from every row before the train/test split so both
sides encode to the same width. Scaler statistics come from training rows
only unless the schema's ``scaler_scope`` says otherwise.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import JoinedRow
from .ingest import CATEGORICAL_FIELDS, NUMERIC_FIELDS

log = logging.getLogger(__name__)

CONTINUOUS = "continuous"
INDICATOR = "indicator"


class PreprocessError(Exception):
    pass


class EmptyInput(PreprocessError):
    pass


class SchemaMismatch(PreprocessError):
    pass


class UnfittedScaler(PreprocessError):
    pass


@dataclass
class FeatureSchema:
    cities: list[str]
    columns: list[tuple[str, str]]
    vocabularies: dict[tuple[str, str], list[str]]
    scaler: dict[str, tuple[float, float]] = field(default_factory=dict)
    constant: list[str] = field(default_factory=list)
    scaler_scope: str = "train"

    @property
    def width(self) -> int:
        return len(self.columns)

    @property
    def fitted(self) -> bool:
        return bool(self.scaler) or not self.continuous_indices().size

    def continuous_indices(self) -> np.ndarray:
        return np.array([i for i, (_, kind) in enumerate(self.columns) if kind == CONTINUOUS], dtype=int)

    def indicator_groups(self) -> list[np.ndarray]:
        """Column indices of each (city, categorical) one-hot group."""
        groups = []
        for (city, name), vocab in self.vocabularies.items():
            prefix = f"{city}_{name}="
            groups.append(
                np.array([i for i, (col, _) in enumerate(self.columns) if col.startswith(prefix)], dtype=int)
            )
        return groups

    def to_dict(self) -> dict:
        return {
            "cities": self.cities,
            "columns": [[name, kind] for name, kind in self.columns],
            "vocabularies": [[city, name, vocab] for (city, name), vocab in self.vocabularies.items()],
            "scaler": {name: [mu, sigma] for name, (mu, sigma) in self.scaler.items()},
            "constant": self.constant,
            "scaler_scope": self.scaler_scope,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSchema":
        return cls(
            cities=list(d["cities"]),
            columns=[(name, kind) for name, kind in d["columns"]],
            vocabularies={(city, name): list(vocab) for city, name, vocab in d["vocabularies"]},
            scaler={name: (float(mu), float(sigma)) for name, (mu, sigma) in d["scaler"].items()},
            constant=list(d.get("constant", [])),
            scaler_scope=d.get("scaler_scope", "train"),
        )

    def digest(self) -> str:
        """Content hash of layout, vocabularies and scaler statistics."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def save(self, path: str | os.PathLike) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | os.PathLike) -> "FeatureSchema":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class EncodedDataset:
    matrix: np.ndarray
    targets: np.ndarray
    schema: FeatureSchema
    timestamps: list = field(default_factory=list)
    unseen: int = 0

    def __len__(self) -> int:
        return self.matrix.shape[0]

    def head(self, n: int) -> "EncodedDataset":
        return EncodedDataset(self.matrix[:n], self.targets[:n], self.schema, self.timestamps[:n], self.unseen)


def build_schema(all_rows: Sequence[JoinedRow], scaler_scope: str = "train") -> FeatureSchema:
    if not all_rows:
        raise EmptyInput("cannot build a schema from zero rows")
    if scaler_scope not in ("train", "union"):
        raise ValueError(f"scaler_scope must be 'train' or 'union', not {scaler_scope!r}")
    first = all_rows[0].features
    cities = list(first)
    columns: list[tuple[str, str]] = []
    vocabularies: dict[tuple[str, str], list[str]] = {}
    for city in cities:
        present = first[city]
        for name in NUMERIC_FIELDS:
            if name in present:
                columns.append((f"{city}_{name}", CONTINUOUS))
        for name in CATEGORICAL_FIELDS:
            if name not in present:
                continue
            vocab = sorted({r.features[city][name] for r in all_rows} - {None})
            vocabularies[(city, name)] = vocab
            columns.extend((f"{city}_{name}={v}", INDICATOR) for v in vocab)
    return FeatureSchema(cities=cities, columns=columns, vocabularies=vocabularies, scaler_scope=scaler_scope)


def encode_rows(rows: Sequence[JoinedRow], schema: FeatureSchema) -> EncodedDataset:
    """Numeric matrix of ``rows`` under ``schema``; categories outside the
    vocabulary encode as an all-zero group and are counted in ``unseen``."""
    n, p = len(rows), schema.width
    matrix = np.zeros((n, p))
    targets = np.full(n, np.nan)
    index = {name: i for i, (name, _) in enumerate(schema.columns)}
    continuous = [
        (city, name, index[f"{city}_{name}"])
        for city in schema.cities
        for name in NUMERIC_FIELDS
        if f"{city}_{name}" in index
    ]
    unseen = 0
    for r, row in enumerate(rows):
        if list(row.features) != schema.cities:
            raise SchemaMismatch(f"row cities {list(row.features)} != schema cities {schema.cities}")
        for city, name, j in continuous:
            matrix[r, j] = row.features[city][name]
        for (city, name) in schema.vocabularies:
            value = row.features[city].get(name)
            if value is None:
                continue
            j = index.get(f"{city}_{name}={value}")
            if j is None:
                unseen += 1
            else:
                matrix[r, j] = 1.0
        if row.target is not None:
            targets[r] = row.target
    if unseen:
        log.warning("%d categorical values outside the schema vocabulary encoded as zeros", unseen)
    if not np.all(np.isfinite(matrix)):
        raise PreprocessError("non-finite value in encoded matrix")
    return EncodedDataset(matrix, targets, schema, [row.timestamp for row in rows], unseen)


def fit_scaler(train: EncodedDataset, schema: FeatureSchema) -> FeatureSchema:
    """Return a copy of ``schema`` with per-column mean and population std.

    A zero std is stored as 1 and the column listed in ``constant``.
    """
    if len(train) == 0:
        raise EmptyInput("cannot fit a scaler on zero rows")
    scaler, constant = {}, []
    for j in schema.continuous_indices():
        name = schema.columns[j][0]
        col = train.matrix[:, j]
        mu = float(np.mean(col))
        sigma = float(np.std(col))
        if sigma == 0.0:
            sigma = 1.0
            constant.append(name)
        scaler[name] = (mu, sigma)
    return FeatureSchema(
        cities=list(schema.cities),
        columns=list(schema.columns),
        vocabularies=dict(schema.vocabularies),
        scaler=scaler,
        constant=constant,
        scaler_scope=schema.scaler_scope,
    )


def apply_scaler(data: EncodedDataset, schema: FeatureSchema) -> EncodedDataset:
    idx = schema.continuous_indices()
    if idx.size and not schema.scaler:
        raise UnfittedScaler("schema has no scaler statistics")
    mu = np.array([schema.scaler[schema.columns[j][0]][0] for j in idx])
    sigma = np.array([schema.scaler[schema.columns[j][0]][1] for j in idx])
    matrix = data.matrix.copy()
    if idx.size:
        matrix[:, idx] = (matrix[:, idx] - mu) / sigma
    return EncodedDataset(matrix, data.targets.copy(), schema, list(data.timestamps), data.unseen)


def prepare(train_rows: Sequence[JoinedRow], test_rows: Sequence[JoinedRow], scaler_scope: str = "train"):
    """Schema from the union, scaler from train (or union), both sides encoded and scaled."""
    schema = build_schema(list(train_rows) + list(test_rows), scaler_scope=scaler_scope)
    train = encode_rows(train_rows, schema)
    test = encode_rows(test_rows, schema)
    basis = train
    if scaler_scope == "union":
        basis = EncodedDataset(np.vstack([train.matrix, test.matrix]), np.concatenate([train.targets, test.targets]), schema)
    fitted = fit_scaler(basis, schema)
    return apply_scaler(train, fitted), apply_scaler(test, fitted), fitted
