"""Tree ensembles: isolation forests and bagged CART forests with OOB bookkeeping.

Trees are grown by numba kernels and stored as flat node arrays. A fitted
forest concatenates the per-tree arrays; ``roots[t]`` is the node index of
tree ``t``'s root and child pointers are global. A node is a leaf iff
``feature[node] == -1``. Rows go left when ``x[feature] <= threshold``.

Tree ``t`` draws its bootstrap (or isolation subsample) and its split
randomness from a stream derived from ``(seed, t)``, so a forest does not
depend on the order in which its trees are built.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from numba import njit

from ._seeding import rng_for
from .errors import ConfigError, DataError

_EULER_GAMMA = 0.5772156649015329


def harmonic(n: int) -> float:
    if n < 1:
        return 0.0
    if n < 10_000:
        return float(np.sum(1.0 / np.arange(1, n + 1)))
    return math.log(n) + _EULER_GAMMA + 1.0 / (2 * n) - 1.0 / (12 * n * n)


def average_path_length(m: int) -> float:
    """Expected unsuccessful-search path length in a BST of ``m`` items.

    ``c(m) = 2 H(m - 1) - 2 (m - 1) / m`` for ``m >= 2``; ``c(1) = 0``.
    """
    if m <= 1:
        return 0.0
    return 2.0 * harmonic(m - 1) - 2.0 * (m - 1) / m


@dataclass
class ForestHyperparams:
    """Forest settings; ``None`` fields resolve to per-kind defaults."""

    n_trees: int = 500
    mtry: Optional[int] = None
    min_node_size: Optional[int] = None
    subsample_size: Optional[int] = None
    max_depth: Optional[int] = None
    bootstrap: bool = True

    def __post_init__(self):
        if self.n_trees < 1:
            raise ConfigError("n_trees must be >= 1")
        if self.subsample_size is not None and self.subsample_size < 2:
            raise ConfigError("subsample_size must be >= 2")


@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray


@dataclass
class ForestModel:
    kind: str  # "isolation" | "classification" | "regression"
    n_features: int
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # (n_nodes, K) class fractions / (n_nodes, 1) means / (n_nodes, 1) path lengths
    roots: np.ndarray
    hyperparams: ForestHyperparams
    inbag: Optional[np.ndarray] = None  # (n_trees, n_rows) bootstrap counts
    classes: Optional[np.ndarray] = None
    subsample_size: Optional[int] = None
    response_range: Optional[tuple] = None
    _tree_ends: np.ndarray = field(default=None, repr=False)

    @property
    def n_trees(self) -> int:
        return self.roots.size

    @property
    def n_rows(self) -> Optional[int]:
        return None if self.inbag is None else self.inbag.shape[1]

    @property
    def trees(self) -> List[Tree]:
        out = []
        for t in range(self.n_trees):
            a, b = self.roots[t], self._tree_ends[t]
            rebase = lambda c: np.where(c >= 0, c - a, -1)  # noqa: E731
            out.append(
                Tree(
                    self.feature[a:b],
                    self.threshold[a:b],
                    rebase(self.left[a:b]),
                    rebase(self.right[a:b]),
                    self.value[a:b],
                )
            )
        return out

    @property
    def oob_mask(self) -> np.ndarray:
        """Boolean ``(n_rows, n_trees)``: tree ``t`` never saw row ``i``."""
        if self.inbag is None:
            raise ConfigError("forest has no bootstrap bookkeeping")
        return (self.inbag == 0).T

    @property
    def oob_index(self) -> List[np.ndarray]:
        mask = self.oob_mask
        return [np.flatnonzero(row) for row in mask]

    def _check_dim(self, X: np.ndarray) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.shape[1] != self.n_features:
            raise DataError(f"expected {self.n_features} features, got {X.shape[1]}")
        return X

    def apply(self, X) -> np.ndarray:
        """Leaf node index reached by every row in every tree, shape ``(n, n_trees)``."""
        X = self._check_dim(X)
        return _apply(X, self.feature, self.threshold, self.left, self.right, self.roots)

    def tree_values(self, X) -> np.ndarray:
        """Per-tree leaf values, shape ``(n, n_trees, K)``."""
        return self.value[self.apply(X)]


# --------------------------------------------------------------------------
# numba kernels


@njit(cache=True)
def _apply(X, feature, threshold, left, right, roots):
    n = X.shape[0]
    T = roots.size
    out = np.empty((n, T), dtype=np.int64)
    for t in range(T):
        for i in range(n):
            node = roots[t]
            while feature[node] >= 0:
                if X[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            out[i, t] = node
    return out


@njit(cache=True)
def _partition(X, work, start, end, f, thr):
    i = start
    j = end - 1
    while i <= j:
        if X[work[i], f] <= thr:
            i += 1
        else:
            tmp = work[i]
            work[i] = work[j]
            work[j] = tmp
            j -= 1
    return i


@njit(cache=True)
def _active_order(global_order, w):
    # Per-feature sorted orders restricted to rows with positive bootstrap weight.
    d, n = global_order.shape
    n_act = 0
    for r in range(n):
        if w[r] > 0:
            n_act += 1
    order = np.empty((d, n_act), dtype=np.int64)
    for f in range(d):
        k = 0
        for i in range(n):
            r = global_order[f, i]
            if w[r] > 0:
                order[f, k] = r
                k += 1
    return order


@njit(cache=True)
def _split_segments(X, order, buf, start, end, f, thr):
    # Stable partition of every feature's sorted segment; returns the midpoint.
    d = order.shape[0]
    mid = start
    for g in range(d):
        nl = start
        nr = 0
        for i in range(start, end):
            r = order[g, i]
            if X[r, f] <= thr:
                order[g, nl] = r
                nl += 1
            else:
                buf[nr] = r
                nr += 1
        for i in range(nr):
            order[g, nl + i] = buf[i]
        mid = nl
    return mid


@njit(cache=True)
def _grow_classifier(X, y, n_classes, w, global_order, mtry, min_node_size, max_depth, seed):
    # Rows enter with integer weight w[r] (bootstrap multiplicity); node sizes
    # count multiplicities, so this equals growing on the expanded bootstrap.
    np.random.seed(seed)
    d = X.shape[1]
    order = _active_order(global_order, w)
    n = order.shape[1]
    cap = 2 * n + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros((cap, n_classes))
    st_start = np.empty(cap, dtype=np.int64)
    st_end = np.empty(cap, dtype=np.int64)
    st_node = np.empty(cap, dtype=np.int64)
    st_depth = np.empty(cap, dtype=np.int64)
    buf = np.empty(n, dtype=np.int64)
    feats = np.arange(d)
    counts = np.zeros(n_classes)
    lcounts = np.zeros(n_classes)

    n_nodes = 1
    top = 1
    st_start[0] = 0
    st_end[0] = n
    st_node[0] = 0
    st_depth[0] = 0
    while top > 0:
        top -= 1
        start = st_start[top]
        end = st_end[top]
        node = st_node[top]
        depth = st_depth[top]

        counts[:] = 0.0
        m = 0.0
        for i in range(start, end):
            r = order[0, i]
            counts[y[r]] += w[r]
            m += w[r]
        n_present = 0
        sumsq = 0.0
        for k in range(n_classes):
            value[node, k] = counts[k] / m
            sumsq += counts[k] * counts[k]
            if counts[k] > 0:
                n_present += 1
        if n_present <= 1 or m <= min_node_size or (max_depth >= 0 and depth >= max_depth):
            continue

        best = -1.0
        best_f = -1
        best_thr = 0.0
        for k in range(mtry):
            j = k + np.random.randint(d - k)
            tmp = feats[k]
            feats[k] = feats[j]
            feats[j] = tmp
            f = feats[k]
            if X[order[f, start], f] == X[order[f, end - 1], f]:
                continue
            lcounts[:] = 0.0
            sl = 0.0
            sr = sumsq
            nl = 0.0
            for i in range(start, end - 1):
                r = order[f, i]
                c = y[r]
                wr = w[r]
                sl += wr * (2.0 * lcounts[c] + wr)
                lcounts[c] += wr
                rc = counts[c] - lcounts[c]
                sr -= wr * (2.0 * rc + wr)
                nl += wr
                v = X[r, f]
                vn = X[order[f, i + 1], f]
                if v == vn:
                    continue
                score = sl / nl + sr / (m - nl)
                if score > best:
                    best = score
                    best_f = f
                    thr = v + (vn - v) * 0.5
                    if thr >= vn:
                        thr = v
                    best_thr = thr
        if best_f < 0:
            continue
        mid = _split_segments(X, order, buf, start, end, best_f, best_thr)
        lnode = n_nodes
        rnode = n_nodes + 1
        n_nodes += 2
        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = lnode
        right[node] = rnode
        st_start[top] = start
        st_end[top] = mid
        st_node[top] = lnode
        st_depth[top] = depth + 1
        top += 1
        st_start[top] = mid
        st_end[top] = end
        st_node[top] = rnode
        st_depth[top] = depth + 1
        top += 1
    return feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes], value[:n_nodes]


@njit(cache=True)
def _grow_regressor(X, y, w, global_order, mtry, min_node_size, max_depth, seed):
    np.random.seed(seed)
    d = X.shape[1]
    order = _active_order(global_order, w)
    n = order.shape[1]
    cap = 2 * n + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros((cap, 1))
    st_start = np.empty(cap, dtype=np.int64)
    st_end = np.empty(cap, dtype=np.int64)
    st_node = np.empty(cap, dtype=np.int64)
    st_depth = np.empty(cap, dtype=np.int64)
    buf = np.empty(n, dtype=np.int64)
    feats = np.arange(d)

    n_nodes = 1
    top = 1
    st_start[0] = 0
    st_end[0] = n
    st_node[0] = 0
    st_depth[0] = 0
    while top > 0:
        top -= 1
        start = st_start[top]
        end = st_end[top]
        node = st_node[top]
        depth = st_depth[top]

        total = 0.0
        m = 0.0
        ymin = np.inf
        ymax = -np.inf
        for i in range(start, end):
            r = order[0, i]
            yi = y[r]
            total += w[r] * yi
            m += w[r]
            if yi < ymin:
                ymin = yi
            if yi > ymax:
                ymax = yi
        value[node, 0] = total / m
        if ymin == ymax or m <= min_node_size or (max_depth >= 0 and depth >= max_depth):
            continue

        best = -np.inf
        best_f = -1
        best_thr = 0.0
        for k in range(mtry):
            j = k + np.random.randint(d - k)
            tmp = feats[k]
            feats[k] = feats[j]
            feats[j] = tmp
            f = feats[k]
            if X[order[f, start], f] == X[order[f, end - 1], f]:
                continue
            sl = 0.0
            nl = 0.0
            for i in range(start, end - 1):
                r = order[f, i]
                sl += w[r] * y[r]
                nl += w[r]
                v = X[r, f]
                vn = X[order[f, i + 1], f]
                if v == vn:
                    continue
                sr = total - sl
                score = sl * sl / nl + sr * sr / (m - nl)
                if score > best:
                    best = score
                    best_f = f
                    thr = v + (vn - v) * 0.5
                    if thr >= vn:
                        thr = v
                    best_thr = thr
        if best_f < 0:
            continue
        mid = _split_segments(X, order, buf, start, end, best_f, best_thr)
        lnode = n_nodes
        rnode = n_nodes + 1
        n_nodes += 2
        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = lnode
        right[node] = rnode
        st_start[top] = start
        st_end[top] = mid
        st_node[top] = lnode
        st_depth[top] = depth + 1
        top += 1
        st_start[top] = mid
        st_end[top] = end
        st_node[top] = rnode
        st_depth[top] = depth + 1
        top += 1
    return feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes], value[:n_nodes]


@njit(cache=True)
def _grow_isolation(X, idx, max_depth, seed):
    np.random.seed(seed)
    n = idx.size
    d = X.shape[1]
    cap = 2 * n + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    leaf_size = np.zeros(cap, dtype=np.int64)
    node_depth = np.zeros(cap, dtype=np.int64)
    st_start = np.empty(cap, dtype=np.int64)
    st_end = np.empty(cap, dtype=np.int64)
    st_node = np.empty(cap, dtype=np.int64)
    st_depth = np.empty(cap, dtype=np.int64)
    work = idx.copy()
    feats = np.arange(d)

    n_nodes = 1
    top = 1
    st_start[0] = 0
    st_end[0] = n
    st_node[0] = 0
    st_depth[0] = 0
    while top > 0:
        top -= 1
        start = st_start[top]
        end = st_end[top]
        node = st_node[top]
        depth = st_depth[top]
        m = end - start
        leaf_size[node] = m
        node_depth[node] = depth
        if m <= 1 or depth >= max_depth:
            continue
        chosen = -1
        lo = 0.0
        hi = 0.0
        for k in range(d):
            j = k + np.random.randint(d - k)
            tmp = feats[k]
            feats[k] = feats[j]
            feats[j] = tmp
            f = feats[k]
            lo = np.inf
            hi = -np.inf
            for i in range(start, end):
                v = X[work[i], f]
                if v < lo:
                    lo = v
                if v > hi:
                    hi = v
            if hi > lo:
                chosen = f
                break
        if chosen < 0:
            continue
        thr = np.random.uniform(lo, hi)
        if thr >= hi:
            thr = lo
        mid = _partition(X, work, start, end, chosen, thr)
        lnode = n_nodes
        rnode = n_nodes + 1
        n_nodes += 2
        feature[node] = chosen
        threshold[node] = thr
        left[node] = lnode
        right[node] = rnode
        st_start[top] = start
        st_end[top] = mid
        st_node[top] = lnode
        st_depth[top] = depth + 1
        top += 1
        st_start[top] = mid
        st_end[top] = end
        st_node[top] = rnode
        st_depth[top] = depth + 1
        top += 1
    return (
        feature[:n_nodes],
        threshold[:n_nodes],
        left[:n_nodes],
        right[:n_nodes],
        leaf_size[:n_nodes],
        node_depth[:n_nodes],
    )


# --------------------------------------------------------------------------
# fitting


def _as_matrix(X) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DataError("feature matrix must be 2-d")
    if X.shape[1] < 1:
        raise DataError("need at least one feature column")
    if not np.isfinite(X).all():
        raise DataError("features must be finite (missing values are not supported)")
    return X


def _stack(parts, kind, n_features, hp, **kw) -> ForestModel:
    sizes = np.array([p[0].size for p in parts])
    offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    shift = lambda a, o: np.where(a >= 0, a + o, -1)  # noqa: E731
    return ForestModel(
        kind=kind,
        n_features=n_features,
        feature=np.concatenate([p[0] for p in parts]),
        threshold=np.concatenate([p[1] for p in parts]),
        left=np.concatenate([shift(p[2], o) for p, o in zip(parts, offsets)]),
        right=np.concatenate([shift(p[3], o) for p, o in zip(parts, offsets)]),
        value=np.concatenate([p[4] for p in parts]),
        roots=offsets.astype(np.int64),
        hyperparams=hp,
        _tree_ends=(offsets + sizes).astype(np.int64),
        **kw,
    )


def fit_isolation_forest(X, hp: Optional[ForestHyperparams] = None, seed: int = 0) -> ForestModel:
    """Isolation forest: random axis-aligned splits on uniform subsamples.

    Each tree sees ``subsample_size`` rows drawn without replacement
    (default ``min(256, n)``) and stops at depth ``ceil(log2(subsample_size))``.
    Leaves store the adjusted path length ``depth + c(leaf_size)``.
    """
    X = _as_matrix(X)
    n = X.shape[0]
    if n < 2:
        raise DataError("isolation forest needs at least 2 rows")
    hp = hp or ForestHyperparams()
    psi = min(hp.subsample_size or 256, n)
    max_depth = hp.max_depth if hp.max_depth is not None else int(math.ceil(math.log2(psi)))
    c_cache = {}
    parts = []
    for t in range(hp.n_trees):
        rng = rng_for(seed, t)
        idx = rng.choice(n, size=psi, replace=False).astype(np.int64)
        tseed = int(rng.integers(2**31 - 1))
        f, thr, lft, rgt, size, depth = _grow_isolation(X, idx, max_depth, tseed)
        path = np.zeros((f.size, 1))
        leaves = np.flatnonzero(f < 0)
        for node in leaves:
            m = int(size[node])
            if m not in c_cache:
                c_cache[m] = average_path_length(m)
            path[node, 0] = depth[node] + c_cache[m]
        parts.append((f, thr, lft, rgt, path))
    return _stack(parts, "isolation", X.shape[1], hp, subsample_size=psi)


def score_isolation(model: ForestModel, X) -> np.ndarray:
    """Anomaly score ``2 ** (-mean_path_length / c(subsample_size))``; higher is more outlying."""
    if model.kind != "isolation":
        raise ConfigError("score_isolation needs an isolation forest")
    mean_path = model.tree_values(X)[..., 0].mean(axis=1)
    c = average_path_length(model.subsample_size)
    if c == 0.0:
        return np.full(mean_path.shape, 0.5)
    return np.power(2.0, -mean_path / c)


def resolve_rf_hyperparams(hp: ForestHyperparams, kind: str, d: int):
    if kind == "classification":
        mtry = hp.mtry or max(1, int(math.floor(math.sqrt(d))))
        min_node = hp.min_node_size or 1
    else:
        mtry = hp.mtry or max(1, d // 3)
        min_node = hp.min_node_size or 5
    mtry = min(mtry, d)
    max_depth = -1 if hp.max_depth is None else hp.max_depth
    return mtry, min_node, max_depth


def fit_random_forest(X, y, kind: str, hp: Optional[ForestHyperparams] = None, seed: int = 0) -> ForestModel:
    """Bagged CART forest (Gini for classification, variance for regression).

    ``kind`` is ``"classification"`` or ``"regression"``. Each tree is grown
    on a bootstrap sample of size ``n`` (unless ``hp.bootstrap`` is false),
    considers ``mtry`` random features per node and does not split nodes
    holding ``min_node_size`` samples or fewer. Bootstrap counts are kept in
    ``model.inbag`` for out-of-bag prediction.
    """
    X = _as_matrix(X)
    n, d = X.shape
    hp = hp or ForestHyperparams()
    mtry, min_node, max_depth = resolve_rf_hyperparams(hp, kind, d)
    y = np.asarray(y)
    if y.shape[0] != n:
        raise DataError("label length does not match the number of rows")
    kw = {}
    if kind == "classification":
        classes, y_int = np.unique(y, return_inverse=True)
        if classes.size < 2:
            raise DataError("classification target has a single class")
        y_int = y_int.astype(np.int64)
        kw["classes"] = classes
    elif kind == "regression":
        y_float = np.ascontiguousarray(y, dtype=np.float64)
        if not np.isfinite(y_float).all():
            raise DataError("regression response must be finite")
        kw["response_range"] = (float(y_float.min()), float(y_float.max()))
    else:
        raise ConfigError(f"unknown forest kind {kind!r}")

    global_order = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T)
    inbag = np.zeros((hp.n_trees, n), dtype=np.int64)
    parts = []
    for t in range(hp.n_trees):
        rng = rng_for(seed, t)
        if hp.bootstrap:
            inbag[t] = np.bincount(rng.integers(0, n, size=n), minlength=n)
        else:
            inbag[t] = 1
        tseed = int(rng.integers(2**31 - 1))
        if kind == "classification":
            part = _grow_classifier(
                X, y_int, classes.size, inbag[t], global_order, mtry, min_node, max_depth, tseed
            )
        else:
            part = _grow_regressor(X, y_float, inbag[t], global_order, mtry, min_node, max_depth, tseed)
        parts.append(part)
    return _stack(parts, kind, d, hp, inbag=inbag, **kw)
