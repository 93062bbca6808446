"""Flat-array decision trees shared by the forest and boosting learners.

Candidate split thresholds are midpoints between consecutive sorted unique
feature values, so small instances can be checked against a brute-force
scan over every candidate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import UsageError

LEAF = -1


@dataclass
class TreeArrays:
    """One tree as parallel node arrays; children reference node indices."""

    feature: np.ndarray    # int32, LEAF marks a leaf
    threshold: np.ndarray  # float64
    left: np.ndarray       # int32
    right: np.ndarray      # int32
    value: np.ndarray      # (n_nodes, n_out) leaf payload

    @property
    def n_nodes(self) -> int:
        return self.feature.size


def tree_predict(tree: TreeArrays, X) -> np.ndarray:
    """Leaf payload per row, via vectorized level-order descent."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    idx = np.zeros(X.shape[0], dtype=np.int64)
    while True:
        feat = tree.feature[idx]
        active = np.flatnonzero(feat != LEAF)
        if active.size == 0:
            break
        node = idx[active]
        go_left = X[active, feat[active]] <= tree.threshold[node]
        idx[active] = np.where(go_left, tree.left[node], tree.right[node])
    return tree.value[idx]


class _Builder:
    def __init__(self, n_out):
        self.feature, self.threshold = [], []
        self.left, self.right = [], []
        self.value = []
        self.n_out = n_out

    def add(self, feature=LEAF, threshold=np.nan, value=None):
        self.feature.append(feature)
        self.threshold.append(threshold)
        self.left.append(LEAF)
        self.right.append(LEAF)
        self.value.append(np.zeros(self.n_out) if value is None else value)
        return len(self.feature) - 1

    def finish(self) -> TreeArrays:
        return TreeArrays(
            feature=np.array(self.feature, dtype=np.int32),
            threshold=np.array(self.threshold, dtype=np.float64),
            left=np.array(self.left, dtype=np.int32),
            right=np.array(self.right, dtype=np.int32),
            value=np.vstack(self.value))


# ---------------------------------------------------------------------------
# weighted-Gini classification splits


def gini_impurity(class_w) -> float:
    """1 - sum_c (W_c / W)^2 for weighted class counts."""
    total = class_w.sum()
    if total <= 0:
        return 0.0
    p = class_w / total
    return float(1.0 - np.sum(p * p))


def best_split_gini(X, y, w, n_classes: int, feature_ids, min_samples_leaf: int = 1):
    """Best (gain, feature, threshold) by weighted Gini decrease.

    Gain is the parent impurity minus the weight-averaged child impurity;
    returns None when no candidate has positive gain. Ties keep the first
    feature in ``feature_ids`` order, then the lowest threshold.
    """
    n = y.size
    total_w = w.sum()
    class_w = np.zeros(n_classes)
    np.add.at(class_w, y, w)
    g_parent = gini_impurity(class_w)

    best_gain, best_feat, best_thr = 0.0, None, None
    rows = np.arange(n)
    for f in feature_ids:
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        cw = np.zeros((n, n_classes))
        cw[rows, y[order]] = w[order]
        csum = np.cumsum(cw, axis=0)
        cumw = csum.sum(axis=1)

        cut = np.flatnonzero(xs[:-1] < xs[1:])
        if min_samples_leaf > 1:
            cut = cut[(cut + 1 >= min_samples_leaf)
                      & (n - cut - 1 >= min_samples_leaf)]
        if cut.size == 0:
            continue
        wl = cumw[cut]
        wr = total_w - wl
        sl = csum[cut]
        sr = class_w[None, :] - sl
        with np.errstate(divide="ignore", invalid="ignore"):
            child = ((wl - (sl * sl).sum(axis=1) / wl)
                     + (wr - (sr * sr).sum(axis=1) / wr)) / total_w
        gains = g_parent - child
        i = int(np.argmax(gains))
        if gains[i] > best_gain:
            best_gain = float(gains[i])
            best_feat = int(f)
            best_thr = float((xs[cut[i]] + xs[cut[i] + 1]) / 2.0)
    if best_feat is None:
        return None
    return best_gain, best_feat, best_thr


def grow_tree_gini(X, y, w, n_classes: int, max_depth: int,
                   min_samples_leaf: int, mtry: int, rng) -> TreeArrays:
    """Grow a classification tree; leaves hold normalized weighted class
    distributions."""
    d = X.shape[1]
    builder = _Builder(n_out=n_classes)

    def leaf_value(rows):
        cw = np.zeros(n_classes)
        np.add.at(cw, y[rows], w[rows])
        total = cw.sum()
        return cw / total if total > 0 else np.full(n_classes, 1.0 / n_classes)

    def grow(rows, depth):
        node = builder.add(value=leaf_value(rows))
        if (depth >= max_depth or rows.size < 2 * min_samples_leaf
                or np.unique(y[rows]).size == 1):
            return node
        feats = rng.choice(d, size=min(mtry, d), replace=False)
        found = best_split_gini(X[rows], y[rows], w[rows], n_classes, feats,
                                min_samples_leaf)
        if found is None:
            return node
        _, feat, thr = found
        go_left = X[rows, feat] <= thr
        if not go_left.any() or go_left.all():
            return node
        builder.feature[node] = feat
        builder.threshold[node] = thr
        builder.left[node] = grow(rows[go_left], depth + 1)
        builder.right[node] = grow(rows[~go_left], depth + 1)
        return node

    grow(np.arange(X.shape[0]), 0)
    return builder.finish()


# ---------------------------------------------------------------------------
# Newton (gradient/hessian) regression splits for boosting


def best_split_newton(X, g, h, lam: float, gamma: float, feature_ids):
    """Best (gain, feature, threshold) for the regularized Newton objective.

    gain = 0.5 * [G_L^2/(H_L+lam) + G_R^2/(H_R+lam) - G^2/(H+lam)] - gamma;
    splits with gain <= 0 are rejected (returns None).
    """
    G, H = g.sum(), h.sum()
    parent = G * G / (H + lam)
    best_gain, best_feat, best_thr = 0.0, None, None
    for f in feature_ids:
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        gl = np.cumsum(g[order])
        hl = np.cumsum(h[order])
        cut = np.flatnonzero(xs[:-1] < xs[1:])
        if cut.size == 0:
            continue
        GL, HL = gl[cut], hl[cut]
        GR, HR = G - GL, H - HL
        gains = 0.5 * (GL * GL / (HL + lam) + GR * GR / (HR + lam) - parent) - gamma
        i = int(np.argmax(gains))
        if gains[i] > best_gain:
            best_gain = float(gains[i])
            best_feat = int(f)
            best_thr = float((xs[cut[i]] + xs[cut[i] + 1]) / 2.0)
    if best_feat is None:
        return None
    return best_gain, best_feat, best_thr


def grow_tree_newton(X, g, h, lam: float, gamma: float, max_depth: int) -> TreeArrays:
    """Grow a regression tree with leaf weight -G/(H+lam)."""
    d = X.shape[1]
    feats = np.arange(d)
    builder = _Builder(n_out=1)

    def leaf_value(rows):
        return np.array([-g[rows].sum() / (h[rows].sum() + lam)])

    def grow(rows, depth):
        node = builder.add(value=leaf_value(rows))
        if depth >= max_depth or rows.size < 2:
            return node
        found = best_split_newton(X[rows], g[rows], h[rows], lam, gamma, feats)
        if found is None:
            return node
        _, feat, thr = found
        go_left = X[rows, feat] <= thr
        if not go_left.any() or go_left.all():
            return node
        builder.feature[node] = feat
        builder.threshold[node] = thr
        builder.left[node] = grow(rows[go_left], depth + 1)
        builder.right[node] = grow(rows[~go_left], depth + 1)
        return node

    grow(np.arange(X.shape[0]), 0)
    return builder.finish()
