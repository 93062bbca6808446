"""Splitting protocols, classification metrics, permutation importance,
and recursive feature elimination."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .data import StressLabel
from .errors import StratificationError, UsageError
from .rng import substream

N_CLASSES = 3


@dataclass
class SplitPlan:
    train_idx: np.ndarray
    test_idx: np.ndarray
    description: str

    def __post_init__(self):
        self.train_idx = np.asarray(self.train_idx, dtype=np.int64)
        self.test_idx = np.asarray(self.test_idx, dtype=np.int64)
        if np.intersect1d(self.train_idx, self.test_idx).size:
            raise UsageError("train and test indices overlap")


@dataclass
class MetricsReport:
    per_class: list                 # one dict per class: precision/recall/f1
    macro_precision: float
    macro_recall: float
    macro_f1: float
    accuracy: float
    auc_macro: float | None
    confusion: np.ndarray
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "per_class": {
                StressLabel(i).short: self.per_class[i] for i in range(N_CLASSES)},
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
            "accuracy": self.accuracy,
            "auc_macro": self.auc_macro,
            "confusion": self.confusion.tolist(),
            "notes": list(self.notes),
        }


def temporal_split(subject_ids, shift_ids, train_frac: float = 0.8) -> SplitPlan:
    """Per subject, the first ceil(train_frac * n_shifts) shifts train,
    the rest test. Rows inherit their shift's side."""
    if not (0.0 < train_frac <= 1.0):
        raise UsageError(f"train_frac must be in (0, 1], got {train_frac}")
    subject_ids = np.asarray(subject_ids)
    shift_ids = np.asarray(shift_ids, dtype=np.int64)
    train, test = [], []
    for subject in sorted(set(subject_ids.tolist())):
        rows = np.flatnonzero(subject_ids == subject)
        shifts = np.unique(shift_ids[rows])
        n_train = math.ceil(train_frac * shifts.size)
        train_shifts = set(shifts[:n_train].tolist())
        for r in rows:
            (train if int(shift_ids[r]) in train_shifts else test).append(int(r))
    return SplitPlan(train_idx=np.array(sorted(train), dtype=np.int64),
                     test_idx=np.array(sorted(test), dtype=np.int64),
                     description="temporal")


def stratified_kfold(labels, k: int = 10, seed: int = 0):
    """Per class, shuffled indices dealt round-robin into k folds."""
    labels = np.asarray(labels, dtype=np.int64)
    if k < 2:
        raise UsageError(f"k must be >= 2, got {k}")
    folds = [[] for _ in range(k)]
    rng = substream(seed, "split", k)
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        if idx.size < k:
            raise StratificationError(
                f"class {StressLabel(cls).short} has {idx.size} members, "
                f"fewer than k={k}")
        for pos, row in enumerate(rng.permutation(idx)):
            folds[pos % k].append(int(row))
    all_idx = np.arange(labels.size)
    plans = []
    for i in range(k):
        test = np.array(sorted(folds[i]), dtype=np.int64)
        train = np.setdiff1d(all_idx, test)
        plans.append(SplitPlan(train_idx=train, test_idx=test,
                               description=f"fold {i + 1}/{k}"))
    return plans


def confusion(y_true, y_pred, n_classes: int = N_CLASSES) -> np.ndarray:
    """Count matrix, rows = true class, columns = predicted class."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.size != y_pred.size:
        raise UsageError(
            f"length mismatch: {y_true.size} true vs {y_pred.size} predicted")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


def macro_metrics(cm) -> MetricsReport:
    """Per-class precision/recall/F1 with the 0/0 -> 0 convention, plus
    unweighted macro averages. AUC is filled in separately."""
    cm = np.asarray(cm, dtype=np.int64)
    per_class = []
    notes = []
    for c in range(cm.shape[0]):
        tp = cm[c, c]
        fp = cm[:, c].sum() - tp
        fn = cm[c, :].sum() - tp
        precision = tp / (tp + fp) if tp + fp > 0 else 0.0
        recall = tp / (tp + fn) if tp + fn > 0 else 0.0
        f1 = (2 * precision * recall / (precision + recall)
              if precision + recall > 0 else 0.0)
        if tp + fp == 0 and tp + fn == 0:
            notes.append(f"class {StressLabel(c).short} never true nor "
                         "predicted; metrics 0 by convention")
        per_class.append({"precision": float(precision), "recall": float(recall),
                          "f1": float(f1)})
    total = cm.sum()
    return MetricsReport(
        per_class=per_class,
        macro_precision=float(np.mean([m["precision"] for m in per_class])),
        macro_recall=float(np.mean([m["recall"] for m in per_class])),
        macro_f1=float(np.mean([m["f1"] for m in per_class])),
        accuracy=float(np.trace(cm) / total) if total else 0.0,
        auc_macro=None,
        confusion=cm,
        notes=notes)


def macro_f1_score(y_true, y_pred) -> float:
    return macro_metrics(confusion(y_true, y_pred)).macro_f1


def _binary_auc(scores, positive) -> float:
    """Mann-Whitney AUC with midrank tie handling."""
    ranks = rankdata(scores)
    n_pos = int(positive.sum())
    n_neg = positive.size - n_pos
    return float((ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0)
                 / (n_pos * n_neg))


def auc_ovr_macro(y_true, probs, notes: list = None) -> float:
    """Macro one-vs-rest AUC over the classes present in y_true.

    Classes absent from y_true (or lacking negatives) are excluded from the
    average; pass ``notes`` to collect a message per exclusion.
    """
    y_true = np.asarray(y_true, dtype=np.int64)
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    aucs = []
    for c in range(probs.shape[1]):
        positive = y_true == c
        n_pos = int(positive.sum())
        if n_pos == 0 or n_pos == y_true.size:
            if notes is not None:
                reason = "absent from" if n_pos == 0 else "the only class in"
                notes.append(f"class {StressLabel(c).short} {reason} y_true; "
                             "excluded from macro AUC")
            continue
        aucs.append(_binary_auc(probs[:, c], positive))
    if not aucs:
        raise UsageError("no class has both positives and negatives; AUC undefined")
    return float(np.mean(aucs))


def evaluate_predictions(y_true, probs) -> MetricsReport:
    """Full report (confusion, macro P/R/F1, accuracy, macro AUC)."""
    y_pred = np.argmax(probs, axis=1)
    report = macro_metrics(confusion(y_true, y_pred))
    report.auc_macro = auc_ovr_macro(y_true, probs, notes=report.notes)
    return report


def permutation_importance(model, X, y, metric=None, n_repeats: int = 10,
                           seed: int = 0) -> np.ndarray:
    """Baseline metric minus the mean metric with each column permuted.

    Shuffles are seeded per (feature, repeat), so results are independent
    of evaluation order.
    """
    metric = metric or macro_f1_score
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.int64)
    baseline = metric(y, np.argmax(model.predict_proba(X), axis=1))
    importances = np.zeros(X.shape[1])
    for j in range(X.shape[1]):
        Xp = X.copy()
        scores = np.empty(n_repeats)
        for rep in range(n_repeats):
            rng = substream(seed, "importance", j, rep)
            Xp[:, j] = X[rng.permutation(X.shape[0]), j]
            scores[rep] = metric(y, np.argmax(model.predict_proba(Xp), axis=1))
        importances[j] = baseline - scores.mean()
    return importances


def rfe(fit_fn, X, y, keep: int = 25, step: int = 1, cv_folds: int = 5,
        seed: int = 0, n_repeats: int = 5):
    """Recursive feature elimination by cross-validated permutation importance.

    ``fit_fn(X, y, seed)`` must return a fitted model with predict_proba.
    Per iteration the weakest ``step`` features go (ties drop the higher
    index, keeping earlier manifest entries). Returns (selected indices
    sorted ascending, elimination order weakest-first).
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.int64)
    d = X.shape[1]
    if keep > d:
        keep = d
    active = list(range(d))
    eliminated = []
    iteration = 0
    while len(active) > keep:
        cols = np.array(active)
        plans = stratified_kfold(y, k=cv_folds, seed=seed + iteration)
        imp = np.zeros(len(active))
        for f, plan in enumerate(plans):
            model = fit_fn(X[plan.train_idx][:, cols], y[plan.train_idx],
                           seed + 1000 * iteration + f)
            imp += permutation_importance(model, X[plan.test_idx][:, cols],
                                          y[plan.test_idx],
                                          n_repeats=n_repeats,
                                          seed=seed + 1000 * iteration + f)
        imp /= len(plans)
        n_drop = min(step, len(active) - keep)
        order = sorted(range(len(active)), key=lambda i: (imp[i], -active[i]))
        eliminated.extend(active[i] for i in order[:n_drop])
        for i in sorted(order[:n_drop], reverse=True):
            del active[i]
        iteration += 1
    return sorted(active), eliminated
