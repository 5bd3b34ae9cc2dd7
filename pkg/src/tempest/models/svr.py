"""Epsilon-insensitive support vector regression solved by SMO.

The dual is written over 2n variables ``beta = [alpha, alpha_star]`` with
labels ``s = [+1]*n + [-1]*n``::

    min  1/2 beta' Q beta + p' beta
    s.t. s' beta = 0,  0 <= beta <= C
    Q_ij = s_i s_j K(x_i, x_j),  p = [eps - y, eps + y]

Each step optimizes one pair analytically. The first index is the maximal
KKT violator; the second maximizes the second-order objective decrease.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

TAU = 1e-12


@dataclass(frozen=True)
class SVRFit:
    support: np.ndarray  # support vectors, rows of X
    coef: np.ndarray  # alpha - alpha_star for each support vector
    bias: float
    gamma: float
    converged: bool
    iterations: int
    objective: float
    dual: np.ndarray  # alpha - alpha_star for every training row

    def predict(self, X: np.ndarray) -> np.ndarray:
        if self.support.shape[0] == 0:
            return np.full(X.shape[0], self.bias)
        return rbf_kernel(X, self.support, self.gamma) @ self.coef + self.bias


def rbf_kernel(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    sq = (A * A).sum(axis=1)[:, None] + (B * B).sum(axis=1)[None, :] - 2.0 * A @ B.T
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-gamma * sq)


def dual_objective(K: np.ndarray, y: np.ndarray, d: np.ndarray, eps: float) -> float:
    """Dual objective in terms of ``d = alpha - alpha_star`` (at most one of each pair nonzero)."""
    return float(0.5 * d @ K @ d + eps * np.abs(d).sum() - y @ d)


def smo(
    K: np.ndarray,
    y: np.ndarray,
    C: float | np.ndarray,
    eps: float,
    tol: float = 1e-3,
    max_iter: int = 10000,
):
    """Solve the dual for a precomputed kernel.

    Returns ``(d, bias, converged, iterations)``. ``C`` may be a per-row
    array. Stops once the maximal KKT violation drops below ``tol``.
    """
    n = len(y)
    s = np.concatenate([np.ones(n), -np.ones(n)])
    upper = np.concatenate([np.broadcast_to(C, n), np.broadcast_to(C, n)]).astype(float)
    beta = np.zeros(2 * n)
    grad = np.concatenate([eps - y, eps + y])
    diag = np.concatenate([np.diag(K), np.diag(K)])

    def q_col(i):
        col = K[:, i % n]
        return s[i] * s * np.concatenate([col, col])

    converged = False
    it = 0
    while it < max_iter:
        at_upper = beta >= upper
        at_lower = beta <= 0.0
        in_up = np.where(s > 0, ~at_upper, ~at_lower)
        in_low = np.where(s > 0, ~at_lower, ~at_upper)
        sg = -s * grad
        if not in_up.any() or not in_low.any():
            converged = True
            break
        i = int(np.flatnonzero(in_up)[np.argmax(sg[in_up])])
        g_max = sg[i]
        g_min = sg[in_low].min()
        if g_max - g_min < tol:
            converged = True
            break
        Qi = q_col(i)
        cand = in_low & (sg < g_max)
        b = g_max - sg[cand]
        a = diag[i] + diag[cand] - 2.0 * s[i] * s[cand] * Qi[cand]
        a = np.where(a > 0, a, TAU)
        j = int(np.flatnonzero(cand)[np.argmin(-(b * b) / a)])
        Qj = q_col(j)

        old_i, old_j = beta[i], beta[j]
        Ci, Cj = upper[i], upper[j]
        if s[i] != s[j]:
            quad = max(diag[i] + diag[j] + 2.0 * Qi[j], TAU)
            delta = (-grad[i] - grad[j]) / quad
            diff = old_i - old_j
            ai, aj = old_i + delta, old_j + delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            elif ai < 0:
                ai, aj = 0.0, -diff
            if diff > Ci - Cj:
                if ai > Ci:
                    ai, aj = Ci, Ci - diff
            elif aj > Cj:
                aj, ai = Cj, Cj + diff
        else:
            quad = max(diag[i] + diag[j] - 2.0 * Qi[j], TAU)
            delta = (grad[i] - grad[j]) / quad
            total = old_i + old_j
            ai, aj = old_i - delta, old_j + delta
            if total > Ci:
                if ai > Ci:
                    ai, aj = Ci, total - Ci
            elif aj < 0:
                aj, ai = 0.0, total
            if total > Cj:
                if aj > Cj:
                    aj, ai = Cj, total - Cj
            elif ai < 0:
                ai, aj = 0.0, total
        beta[i], beta[j] = ai, aj
        grad += Qi * (ai - old_i) + Qj * (aj - old_j)
        it += 1

    bias = -_rho(beta, grad, s, upper)
    d = beta[:n] - beta[n:]
    return d, bias, converged, it


def _rho(beta, grad, s, upper) -> float:
    sg = s * grad
    free = (beta > 0) & (beta < upper)
    if free.any():
        return float(sg[free].mean())
    at_upper = beta >= upper
    # Bounds on rho from variables sitting at either end of the box.
    ub_mask = (at_upper & (s < 0)) | (~at_upper & (s > 0))
    lb_mask = (at_upper & (s > 0)) | (~at_upper & (s < 0))
    ub = sg[ub_mask].min() if ub_mask.any() else np.inf
    lb = sg[lb_mask].max() if lb_mask.any() else -np.inf
    return float((ub + lb) / 2.0)


def train_svr(
    X: np.ndarray,
    y: np.ndarray,
    C: float = 10.0,
    epsilon: float = 0.5,
    gamma: float | None = None,
    tol: float = 1e-3,
    max_iter: int = 10000,
) -> SVRFit:
    """Fit an RBF-kernel SVR; ``gamma`` defaults to 1 / n_features."""
    if C <= 0:
        raise ValueError(f"C must be positive, got {C}")
    if epsilon < 0:
        raise ValueError(f"epsilon must be non-negative, got {epsilon}")
    if gamma is None:
        gamma = 1.0 / X.shape[1]
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    K = rbf_kernel(X, X, gamma)
    d, bias, converged, iterations = smo(K, y, C, epsilon, tol, max_iter)
    if not converged:
        log.warning("SMO stopped after %d iterations without reaching tol=%g", iterations, tol)
    sv = np.flatnonzero(d != 0.0)
    return SVRFit(
        support=X[sv].copy(),
        coef=d[sv].copy(),
        bias=bias,
        gamma=gamma,
        converged=converged,
        iterations=iterations,
        objective=dual_objective(K, y, d, epsilon),
        dual=d,
    )
