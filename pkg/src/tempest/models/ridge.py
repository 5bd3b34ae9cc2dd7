"""Closed-form ridge regression with an unpenalized intercept."""

from __future__ import annotations

import numpy as np
from scipy import linalg


class SingularSystem(np.linalg.LinAlgError):
    """X'X is singular and there is no ridge penalty to fix it."""


def train_ridge(X: np.ndarray, y: np.ndarray, lam: float = 1.0) -> tuple[np.ndarray, float]:
    """Minimize ``sum((y - Xw - b)**2) + lam * |w|**2``.

    Works on centered data so the intercept drops out, then solves the
    normal equations by Cholesky.
    """
    if lam < 0:
        raise ValueError(f"ridge penalty must be >= 0, got {lam}")
    x_mean = X.mean(axis=0)
    y_mean = float(y.mean())
    Xc = X - x_mean
    A = Xc.T @ Xc
    A[np.diag_indices_from(A)] += lam
    if lam == 0 and np.linalg.matrix_rank(A) < A.shape[0]:
        raise SingularSystem("X'X is singular; retry with a positive penalty")
    try:
        factor = linalg.cho_factor(A, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    w = linalg.cho_solve(factor, Xc.T @ (y - y_mean), check_finite=False)
    return w, y_mean - float(x_mean @ w)


def ridge_objective(X, y, w, b, lam) -> float:
    r = y - X @ w - b
    return float(r @ r + lam * (w @ w))
