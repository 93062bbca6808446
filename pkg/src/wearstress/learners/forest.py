"""Random forest on bootstrap samples with sqrt(d) feature subsets."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..errors import UsageError
from ..rng import substream
from .tree import TreeArrays, grow_tree_gini, tree_predict


@dataclass
class ForestModel:
    kind = "forest"

    trees: list
    n_classes: int
    n_features: int
    params: dict = field(default_factory=dict)

    def predict_proba(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n_features:
            raise UsageError(
                f"expected {self.n_features} feature columns, got {X.shape[1]}")
        acc = np.zeros((X.shape[0], self.n_classes))
        for tree in self.trees:
            acc += tree_predict(tree, X)
        return acc / len(self.trees)


def class_balanced_weights(y, n_classes: int) -> np.ndarray:
    """Per-sample weights n / (C * count_class); classes absent get none."""
    counts = np.bincount(y, minlength=n_classes).astype(np.float64)
    present = counts > 0
    w_class = np.zeros(n_classes)
    w_class[present] = y.size / (present.sum() * counts[present])
    return w_class[y]


def rf_fit(X, y, n_trees: int = 500, max_depth: int = 15,
           min_samples_leaf: int = 5, class_weight=None, n_classes: int = 3,
           seed: int = 0, threads: int = 1) -> ForestModel:
    """Fit a random forest of ``n_trees`` Gini trees.

    Each tree sees an n-draw bootstrap and considers sqrt(d) features per
    split. Per-tree RNG streams derive from (seed, tree index), so results
    do not depend on how the tree loop is scheduled.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.int64)
    if X.shape[0] == 0:
        raise UsageError("cannot fit a forest on an empty matrix")
    n, d = X.shape
    mtry = max(1, math.isqrt(d))
    if class_weight == "balanced":
        base_w = class_balanced_weights(y, n_classes)
    elif class_weight is None:
        base_w = np.ones(n)
    else:
        raise UsageError(f"unsupported class_weight {class_weight!r}")

    def build(t):
        rng = substream(seed, "forest", t)
        idx = rng.integers(0, n, size=n)
        return grow_tree_gini(X[idx], y[idx], base_w[idx], n_classes,
                              max_depth=max_depth,
                              min_samples_leaf=min_samples_leaf,
                              mtry=mtry, rng=rng)

    if threads > 1 and n_trees > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            trees = list(pool.map(build, range(n_trees)))
    else:
        trees = [build(t) for t in range(n_trees)]
    return ForestModel(trees=trees, n_classes=n_classes, n_features=d,
                       params={"n_trees": n_trees, "max_depth": max_depth,
                               "min_samples_leaf": min_samples_leaf,
                               "class_weight": class_weight, "seed": seed})
