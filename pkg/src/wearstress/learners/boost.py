"""Newton-boosted trees with a multiclass softmax objective.

Per round one regression tree per class is fitted to the softmax
gradients/hessians; leaf weights are -G/(H+lam) and splits must clear the
regularized gain threshold gamma.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import UsageError
from ..rng import substream
from .tree import TreeArrays, grow_tree_newton, tree_predict


def softmax(scores) -> np.ndarray:
    z = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def log_loss(probs, y, w) -> float:
    p = np.clip(probs[np.arange(y.size), y], 1e-15, None)
    return float(-(w * np.log(p)).sum() / w.sum())


@dataclass
class BoostModel:
    kind = "boost"

    trees: list              # [round][class] -> TreeArrays
    base_score: np.ndarray   # class log-priors
    learning_rate: float
    n_classes: int
    n_features: int
    params: dict = field(default_factory=dict)
    train_loss: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def n_rounds(self) -> int:
        return len(self.trees)

    def raw_scores(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n_features:
            raise UsageError(
                f"expected {self.n_features} feature columns, got {X.shape[1]}")
        F = np.tile(self.base_score, (X.shape[0], 1))
        for round_trees in self.trees:
            for c, tree in enumerate(round_trees):
                F[:, c] += self.learning_rate * tree_predict(tree, X)[:, 0]
        return F

    def predict_proba(self, X) -> np.ndarray:
        return softmax(self.raw_scores(X))


def _stratified_holdout(y, frac: float, rng):
    """Deterministic stratified holdout; returns (fit_idx, hold_idx).

    Falls back to no holdout when any present class is too small to spare
    a member.
    """
    hold = []
    fit = []
    for cls in np.unique(y):
        idx = np.flatnonzero(y == cls)
        n_hold = int(round(frac * idx.size))
        if n_hold == 0 or idx.size - n_hold < 1:
            return np.arange(y.size), np.empty(0, dtype=np.int64)
        perm = rng.permutation(idx)
        hold.append(perm[:n_hold])
        fit.append(perm[n_hold:])
    return np.sort(np.concatenate(fit)), np.sort(np.concatenate(hold))


def gbt_fit(X, y, n_classes: int = 3, learning_rate: float = 0.1,
            max_depth: int = 8, gamma: float = 0.5, lam: float = 1.0,
            n_rounds: int = 200, class_weights=None,
            early_stopping_rounds: int = 20, holdout_frac: float = 0.1,
            seed: int = 0) -> BoostModel:
    """Fit Newton-boosted trees.

    With ``early_stopping_rounds`` > 0 and ``holdout_frac`` > 0 a stratified
    holdout monitors log-loss and training stops after that many rounds
    without improvement, keeping the best round's trees. ``class_weights``
    maps class index to a sample-weight multiplier (the multiclass
    generalization of a binary positive-class weight).
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.int64)
    if X.shape[0] == 0:
        raise UsageError("cannot fit boosted trees on an empty matrix")
    n, d = X.shape

    w = np.ones(n)
    if class_weights:
        for cls, mult in class_weights.items():
            w[y == int(cls)] = float(mult)

    priors = np.bincount(y, minlength=n_classes).astype(np.float64) / n
    base = np.log(np.maximum(priors, 1e-15))

    rng = substream(seed, "boost", 0)
    if early_stopping_rounds > 0 and holdout_frac > 0.0 and n >= 10:
        fit_idx, hold_idx = _stratified_holdout(y, holdout_frac, rng)
    else:
        fit_idx, hold_idx = np.arange(n), np.empty(0, dtype=np.int64)
    Xf, yf, wf = X[fit_idx], y[fit_idx], w[fit_idx]
    Yf = np.zeros((fit_idx.size, n_classes))
    Yf[np.arange(fit_idx.size), yf] = 1.0

    F = np.tile(base, (fit_idx.size, 1))
    use_holdout = hold_idx.size > 0
    if use_holdout:
        Xh, yh, wh = X[hold_idx], y[hold_idx], w[hold_idx]
        Fh = np.tile(base, (hold_idx.size, 1))
        best_loss, best_round = np.inf, -1

    trees = []
    losses = [log_loss(softmax(F), yf, wf)]
    for rnd in range(n_rounds):
        P = softmax(F)
        round_trees = []
        for c in range(n_classes):
            g = wf * (P[:, c] - Yf[:, c])
            h = np.maximum(wf * P[:, c] * (1.0 - P[:, c]), 1e-16)
            tree = grow_tree_newton(Xf, g, h, lam=lam, gamma=gamma,
                                    max_depth=max_depth)
            F[:, c] += learning_rate * tree_predict(tree, Xf)[:, 0]
            if use_holdout:
                Fh[:, c] += learning_rate * tree_predict(tree, Xh)[:, 0]
            round_trees.append(tree)
        trees.append(round_trees)
        losses.append(log_loss(softmax(F), yf, wf))
        if use_holdout:
            hl = log_loss(softmax(Fh), yh, wh)
            if hl < best_loss - 1e-12:
                best_loss, best_round = hl, rnd
            elif rnd - best_round >= early_stopping_rounds:
                trees = trees[:best_round + 1]
                losses = losses[:best_round + 2]
                break

    return BoostModel(trees=trees, base_score=base, learning_rate=learning_rate,
                      n_classes=n_classes, n_features=d,
                      params={"learning_rate": learning_rate, "max_depth": max_depth,
                              "gamma": gamma, "lam": lam, "n_rounds": n_rounds,
                              "class_weights": class_weights,
                              "early_stopping_rounds": early_stopping_rounds,
                              "holdout_frac": holdout_frac, "seed": seed},
                      train_loss=np.array(losses))
