"""RMSE, residuals and the 12-bucket residual histogram."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

# Unit-width buckets (-6,-5], ..., (5,6]; bucket 6 (1-based) is (-1, 0].
HIST_EDGES = np.arange(-6.0, 7.0)
N_BUCKETS = 12


class LengthMismatch(ValueError):
    pass


class EmptyInput(ValueError):
    pass


def rmse(predicted, actual) -> float:
    p = np.asarray(predicted, dtype=float)
    a = np.asarray(actual, dtype=float)
    if p.shape != a.shape:
        raise LengthMismatch(f"{p.shape} predictions vs {a.shape} actuals")
    if p.size == 0:
        raise EmptyInput("rmse of zero examples")
    d = p - a
    return math.sqrt(float(d @ d) / d.size)


def bucket_index(residual: float) -> int:
    """0-based bucket of one residual; values beyond +/-6 clamp to the ends."""
    k = math.ceil(residual) + 5
    return min(max(k, 0), N_BUCKETS - 1)


def residual_histogram(residuals) -> list[int]:
    counts = [0] * N_BUCKETS
    for r in np.asarray(residuals, dtype=float).ravel():
        counts[bucket_index(float(r))] += 1
    return counts


@dataclass(frozen=True)
class EvalReport:
    rmse: float
    residuals: tuple[float, ...]
    histogram: tuple[int, ...]
    n: int

    @classmethod
    def from_predictions(cls, predicted, actual) -> "EvalReport":
        p = np.asarray(predicted, dtype=float)
        a = np.asarray(actual, dtype=float)
        value = rmse(p, a)
        res = p - a
        return cls(value, tuple(float(r) for r in res), tuple(residual_histogram(res)), int(res.size))

    def to_dict(self) -> dict:
        return {
            "rmse": round(self.rmse, 6),
            "n": self.n,
            "histogram": list(self.histogram),
            "residuals": [[i, round(r, 6)] for i, r in enumerate(self.residuals)],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"
