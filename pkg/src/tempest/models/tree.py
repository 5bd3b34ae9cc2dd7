"""CART regression trees and the two forest variants built from them.

Random forest: bootstrap sample, best variance-reduction split over a random
feature subset per node. Extra-trees: full sample, one uniform random
threshold per candidate feature, best of those.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..rng import stream

# Candidate splits whose child SSE differs from the best by less than this
# fraction of the node SSE count as tied; ties go to the lowest column, then
# the lowest threshold.
TIE_RTOL = 1e-9


@dataclass(frozen=True)
class RegressionTree:
    feature: np.ndarray  # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            feat = self.feature[node]
            active = feat >= 0
            if not active.any():
                return self.value[node]
            r, n = rows[active], node[active]
            go_left = X[r, feat[active]] <= self.threshold[n]
            node[active] = np.where(go_left, self.left[n], self.right[n])


def _pick(sse: np.ndarray, cols: np.ndarray, thr: np.ndarray, node_sse: float):
    """Index of the winning candidate under the tie rule, or None."""
    if sse.size == 0:
        return None
    tied = np.flatnonzero(sse <= sse.min() + TIE_RTOL * node_sse)
    if tied.size == 1:
        return tied[0]
    return tied[np.lexsort((thr[tied], cols[tied]))[0]]


def best_split(X: np.ndarray, y: np.ndarray, features: np.ndarray, min_leaf: int = 1):
    """Exhaustive CART split over ``features``.

    Thresholds are midpoints between consecutive distinct values; the
    left child takes ``x <= threshold``. Returns ``(column, threshold,
    child_sse)`` or None when no split leaves ``min_leaf`` rows per side.
    """
    m = len(y)
    if m < 2 * min_leaf or len(features) == 0:
        return None
    yc = y - y.mean()
    node_sse = float(yc @ yc)
    Xs = X[:, features]
    order = np.argsort(Xs, axis=0, kind="stable")
    xs = Xs[order, np.arange(Xs.shape[1])]
    ys = yc[order]
    cs = np.cumsum(ys, axis=0)
    cs2 = np.cumsum(ys * ys, axis=0)
    tot, tot2 = cs[-1], cs2[-1]
    cs, cs2 = cs[:-1], cs2[:-1]
    nl = np.arange(1, m, dtype=float)[:, None]
    nr = m - nl
    sse = (cs2 - cs * cs / nl) + ((tot2 - cs2) - (tot - cs) ** 2 / nr)
    valid = xs[:-1] < xs[1:]
    if min_leaf > 1:
        valid[: min_leaf - 1] = False
        valid[m - min_leaf :] = False
    pos, fi = np.nonzero(valid)
    if pos.size == 0:
        return None
    lo, hi = xs[pos, fi], xs[pos + 1, fi]
    thr = (lo + hi) / 2.0
    thr = np.where(thr < hi, thr, lo)
    cols = features[fi]
    k = _pick(sse[pos, fi], cols, thr, node_sse)
    return int(cols[k]), float(thr[k]), float(sse[pos[k], fi[k]])


def random_split(X: np.ndarray, y: np.ndarray, features: np.ndarray, rng: np.random.Generator, min_leaf: int = 1):
    """Extra-trees split: one uniform threshold in (min, max) per feature."""
    m = len(y)
    if m < 2 * min_leaf or len(features) == 0:
        return None
    yc = y - y.mean()
    node_sse = float(yc @ yc)
    Xs = X[:, features]
    lo, hi = Xs.min(axis=0), Xs.max(axis=0)
    thr = rng.uniform(lo, hi)
    left = Xs <= thr
    nl = left.sum(axis=0).astype(float)
    nr = m - nl
    sl = yc @ left
    s2l = (yc * yc) @ left
    ok = (nl >= min_leaf) & (nr >= min_leaf)
    if not ok.any():
        return None
    with np.errstate(divide="ignore", invalid="ignore"):
        sse = (s2l - sl * sl / nl) + ((node_sse - s2l) - (-sl) ** 2 / nr)
    idx = np.flatnonzero(ok)
    k = _pick(sse[idx], features[idx], thr[idx], node_sse)
    return int(features[idx[k]]), float(thr[idx[k]]), float(sse[idx[k]])


def grow_tree(
    X: np.ndarray,
    y: np.ndarray,
    rows: np.ndarray | None = None,
    max_features: int | None = None,
    min_leaf: int = 1,
    split_rule: str = "best",
    rng: np.random.Generator | None = None,
) -> RegressionTree:
    """Grow one tree on ``X[rows]``; ``rows`` may repeat (bootstrap)."""
    n, p = X.shape
    if rows is None:
        rows = np.arange(n)
    if max_features is None:
        max_features = p
    if split_rule not in ("best", "random"):
        raise ValueError(f"unknown split rule {split_rule!r}")
    if rng is None and (split_rule == "random" or max_features < p):
        raise ValueError("a generator is required for random feature or threshold draws")

    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(idx):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(y[idx].sum() / len(idx)))
        return len(feature) - 1

    stack = [(new_node(rows), rows)]
    while stack:
        node, idx = stack.pop()
        if len(idx) < 2 * min_leaf:
            continue
        yn = y[idx]
        if yn.max() == yn.min():
            continue
        Xn = X[idx]
        varying = np.flatnonzero(np.ptp(Xn, axis=0) > 0)
        if varying.size == 0:
            continue
        if max_features < varying.size:
            varying = np.sort(rng.permutation(varying)[:max_features])
        if split_rule == "best":
            found = best_split(Xn, yn, varying, min_leaf)
        else:
            found = random_split(Xn, yn, varying, rng, min_leaf)
        if found is None:
            continue
        col, thr, _ = found
        mask = Xn[:, col] <= thr
        li, ri = idx[mask], idx[~mask]
        feature[node], threshold[node] = col, thr
        left[node] = new_node(li)
        right[node] = new_node(ri)
        stack.append((right[node], ri))
        stack.append((left[node], li))

    return RegressionTree(
        feature=np.array(feature, dtype=np.int64),
        threshold=np.array(threshold, dtype=float),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        value=np.array(value, dtype=float),
    )


def train_forest(
    X: np.ndarray,
    y: np.ndarray,
    n_trees: int = 100,
    max_features: int | None = None,
    min_leaf: int = 2,
    bootstrap: bool = True,
    split_rule: str = "best",
    seed: int = 0,
    n_jobs: int = 1,
) -> list[RegressionTree]:
    """Tree ``t`` draws only from the stream keyed by ``(seed, t)``, so the
    result is the same for any ``n_jobs`` and earlier trees do not depend on
    ``n_trees``."""
    n, p = X.shape
    if n_trees < 1:
        raise ValueError("n_trees must be at least 1")
    if max_features is None:
        max_features = -(-p // 3)
    if not 1 <= max_features <= p:
        raise ValueError(f"max_features must be in [1, {p}], got {max_features}")
    if min_leaf < 1:
        raise ValueError("min_leaf must be at least 1")
    if n_jobs < 1:
        raise ValueError("n_jobs must be at least 1")

    def one(t):
        rng = stream(seed, "forest-tree", t)
        rows = rng.integers(0, n, n) if bootstrap else np.arange(n)
        return grow_tree(X, y, rows, max_features, min_leaf, split_rule, rng)

    if n_jobs == 1:
        return [one(t) for t in range(n_trees)]
    with ThreadPoolExecutor(n_jobs) as pool:
        return list(pool.map(one, range(n_trees)))


def predict_forest(trees: list[RegressionTree], X: np.ndarray) -> np.ndarray:
    out = np.zeros(X.shape[0])
    for tree in trees:
        out += tree.predict(X)
    return out / len(trees)
