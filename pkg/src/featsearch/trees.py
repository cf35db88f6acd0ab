"""CART trees and a bagged random forest, built from scratch.

The split search is compiled with numba. Classification and regression share
one kernel: targets are a matrix ``Y`` (one-hot classes, or the target as a
single column) and a split maximises ``sum_c |S_c|^2 / n_c`` over the two
children, where ``S_c`` is the child's column sum of ``Y``. For one-hot ``Y``
that is Gini decrease; for a single column it is variance reduction.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

LEAF = -1


@njit(cache=True)
def _build(X, Y, rows, max_depth, min_leaf, max_features, seed):
    np.random.seed(seed)
    n_total, p = X.shape
    k = Y.shape[1]
    N = rows.shape[0]
    cap = 2 * N + 1
    feat = np.full(cap, LEAF, dtype=np.int64)
    thr = np.zeros(cap)
    left = np.full(cap, LEAF, dtype=np.int64)
    right = np.full(cap, LEAF, dtype=np.int64)
    value = np.zeros((cap, k))

    # node rows in training order, and per feature the same rows sorted by
    # value (stable, so ties keep training order); a node owns [lo, hi) of each
    idx = rows.copy()
    srt = np.empty((p, N), dtype=np.int64)
    for f in range(p):
        col = np.empty(N)
        for r in range(N):
            col[r] = X[rows[r], f]
        order = np.argsort(col, kind="mergesort")
        for r in range(N):
            srt[f, r] = rows[order[r]]
    goes_left = np.zeros(n_total, dtype=np.bool_)
    buf = np.empty(N, dtype=np.int64)

    # explicit stack of (node, start, stop, depth)
    st_node = np.empty(cap, dtype=np.int64)
    st_lo = np.empty(cap, dtype=np.int64)
    st_hi = np.empty(cap, dtype=np.int64)
    st_depth = np.empty(cap, dtype=np.int64)
    st_node[0] = 0
    st_lo[0] = 0
    st_hi[0] = N
    st_depth[0] = 0
    top = 1
    n_nodes = 1

    perm = np.arange(p)
    total = np.zeros(k)
    acc = np.zeros(k)

    while top > 0:
        top -= 1
        nd = st_node[top]
        lo = st_lo[top]
        hi = st_hi[top]
        depth = st_depth[top]
        n = hi - lo

        total[:] = 0.0
        for r in range(lo, hi):
            for j in range(k):
                total[j] += Y[idx[r], j]
        for j in range(k):
            value[nd, j] = total[j] / n

        if depth >= max_depth or n < 2 * min_leaf:
            continue
        # pure node check
        pure = True
        first = idx[lo]
        for r in range(lo + 1, hi):
            for j in range(k):
                if Y[idx[r], j] != Y[first, j]:
                    pure = False
                    break
            if not pure:
                break
        if pure:
            continue

        parent_score = 0.0
        for j in range(k):
            parent_score += total[j] * total[j]
        parent_score /= n

        best_score = parent_score + 1e-12 * (abs(parent_score) + 1.0)
        best_f = -1
        best_t = 0.0

        # partial Fisher-Yates for the feature subset
        for i in range(p):
            perm[i] = i
        m = max_features if max_features < p else p
        if m < p:
            for i in range(m):
                jj = i + np.random.randint(0, p - i)
                tmp = perm[i]
                perm[i] = perm[jj]
                perm[jj] = tmp

        for fi in range(m):
            f = perm[fi]
            acc[:] = 0.0
            for s in range(n - 1):
                row = srt[f, lo + s]
                for j in range(k):
                    acc[j] += Y[row, j]
                nl = s + 1
                nr = n - nl
                if nl < min_leaf or nr < min_leaf:
                    continue
                a = X[row, f]
                b = X[srt[f, lo + s + 1], f]
                if not b > a:
                    continue
                sl = 0.0
                sr = 0.0
                for j in range(k):
                    sl += acc[j] * acc[j]
                    d = total[j] - acc[j]
                    sr += d * d
                score = sl / nl + sr / nr
                if score > best_score:
                    best_score = score
                    best_f = f
                    t = a / 2.0 + b / 2.0
                    if not t < b:
                        t = a
                    best_t = t

        if best_f < 0:
            continue

        # stable partition of the node's rows, in training order and in every sorted list
        nl = 0
        for r in range(lo, hi):
            goes_left[idx[r]] = X[idx[r], best_f] <= best_t
            if goes_left[idx[r]]:
                nl += 1
        for g in range(-1, p):
            wl = 0
            wr = nl
            for r in range(lo, hi):
                row = idx[r] if g < 0 else srt[g, r]
                if goes_left[row]:
                    buf[wl] = row
                    wl += 1
                else:
                    buf[wr] = row
                    wr += 1
            for r in range(n):
                if g < 0:
                    idx[lo + r] = buf[r]
                else:
                    srt[g, lo + r] = buf[r]

        feat[nd] = best_f
        thr[nd] = best_t
        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        left[nd] = lc
        right[nd] = rc
        st_node[top] = rc
        st_lo[top] = lo + nl
        st_hi[top] = hi
        st_depth[top] = depth + 1
        top += 1
        st_node[top] = lc
        st_lo[top] = lo
        st_hi[top] = lo + nl
        st_depth[top] = depth + 1
        top += 1

    return feat[:n_nodes], thr[:n_nodes], left[:n_nodes], right[:n_nodes], value[:n_nodes]


@njit(cache=True)
def _predict(X, feat, thr, left, right, value):
    n = X.shape[0]
    out = np.empty((n, value.shape[1]))
    for i in range(n):
        nd = 0
        while feat[nd] != LEAF:
            if X[i, feat[nd]] <= thr[nd]:
                nd = left[nd]
            else:
                nd = right[nd]
        out[i, :] = value[nd]
    return out


def _targets(y, n_classes):
    if n_classes:
        Y = np.zeros((y.shape[0], n_classes))
        Y[np.arange(y.shape[0]), y] = 1.0
        return Y
    return np.asarray(y, dtype=np.float64).reshape(-1, 1)


def _n_features(max_features, p):
    if max_features is None:
        return p
    if max_features == "sqrt":
        return max(1, int(np.sqrt(p)))
    return max(1, min(p, int(max_features)))


@dataclass
class DecisionTree:
    """CART: Gini for classification (``n_classes > 0``), variance for regression."""

    n_classes: int = 0
    max_depth: int = 10
    min_samples_leaf: int = 1
    max_features: object = None
    seed: int = 0

    def fit(self, X, y, rows=None):
        X = np.ascontiguousarray(X, dtype=np.float64)
        Y = _targets(np.asarray(y), self.n_classes)
        if rows is None:
            rows = np.arange(X.shape[0])
        self.nodes_ = _build(
            X, Y, np.asarray(rows, dtype=np.int64), self.max_depth, self.min_samples_leaf,
            _n_features(self.max_features, X.shape[1]), self.seed,
        )
        return self

    def predict_raw(self, X):
        """Leaf class frequencies (classification) or leaf means, shape (n, k)."""
        return _predict(np.ascontiguousarray(X, dtype=np.float64), *self.nodes_)

    def predict(self, X):
        raw = self.predict_raw(X)
        return raw.argmax(axis=1) if self.n_classes else raw[:, 0]

    @property
    def node_count(self) -> int:
        return len(self.nodes_[0])


@dataclass
class RandomForest:
    n_classes: int = 0
    n_trees: int = 10
    max_depth: int = 10
    min_samples_leaf: int = 1
    max_features: object = "sqrt"
    bootstrap: bool = True
    seed: int = 0

    def fit(self, X, y):
        n = X.shape[0]
        ss = np.random.SeedSequence(self.seed)
        self.trees_ = []
        for child in ss.spawn(self.n_trees):
            rng = np.random.default_rng(child)
            rows = rng.integers(0, n, n) if self.bootstrap else np.arange(n)
            tree = DecisionTree(
                self.n_classes, self.max_depth, self.min_samples_leaf, self.max_features,
                seed=int(rng.integers(0, 2**31 - 1)),
            )
            self.trees_.append(tree.fit(X, y, rows))
        return self

    def predict_raw(self, X):
        return sum(t.predict_raw(X) for t in self.trees_) / len(self.trees_)

    def predict(self, X):
        raw = self.predict_raw(X)
        return raw.argmax(axis=1) if self.n_classes else raw[:, 0]


@dataclass
class Ridge:
    """Closed-form ridge on standardised features; one-vs-rest for classes."""

    n_classes: int = 0
    alpha: float = 1.0

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        self.mu_ = X.mean(axis=0)
        sd = X.std(axis=0)
        self.sd_ = np.where(sd > 0, sd, 1.0)
        Z = (X - self.mu_) / self.sd_
        Y = _targets(np.asarray(y), self.n_classes)
        self.ybar_ = Y.mean(axis=0)
        A = Z.T @ Z + self.alpha * np.eye(Z.shape[1])
        self.coef_ = np.linalg.solve(A, Z.T @ (Y - self.ybar_))
        return self

    def predict_raw(self, X):
        Z = (np.asarray(X, dtype=np.float64) - self.mu_) / self.sd_
        return Z @ self.coef_ + self.ybar_

    def predict(self, X):
        raw = self.predict_raw(X)
        return raw.argmax(axis=1) if self.n_classes else raw[:, 0]
