"""Stacked generalization: out-of-fold base-model probabilities plus the
top-5 original features feed a logistic-regression meta-learner.

Meta-feature layout is frozen: [forest P(c0..c2), boosted P(c0..c2),
mlp P(c0..c2), top-5 raw features] -> width 14.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .balance import LabeledMatrix, resample
from .errors import StratificationError, UsageError
from .evaluation import permutation_importance, stratified_kfold
from .learners import (META_PARAMS, gbt_fit, logreg_fit, mlp_fit, preset_params,
                       rf_fit)
from .learners.serialize import model_payload, restore_model
from .rng import substream

N_CLASSES = 3
BASE_ORDER = ("forest", "boost", "mlp")


@dataclass
class StackModel:
    kind = "stack"

    forest: object
    boost: object
    mlp: object
    meta: object
    top5: np.ndarray
    oof_k: int
    manifest_hash: str = ""
    preset: str = "implementation"
    base_params: dict = field(default_factory=dict)
    meta_params: dict = field(default_factory=dict)

    @property
    def n_features(self) -> int:
        return self.forest.n_features

    def base_models(self):
        return (self.forest, self.boost, self.mlp)

    def meta_matrix(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        probs = [m.predict_proba(X) for m in self.base_models()]
        return np.hstack(probs + [X[:, self.top5]])

    def predict_proba(self, X) -> np.ndarray:
        return self.meta.predict_proba(self.meta_matrix(X))


def select_top_features(importances, n: int = 5, manifest=None) -> np.ndarray:
    """Indices of the n largest importances; ties keep the lower index."""
    imp = np.asarray(importances, dtype=np.float64)
    if manifest is not None and imp.size != len(manifest):
        raise UsageError(
            f"importances length {imp.size} != manifest length {len(manifest)}")
    order = np.argsort(-imp, kind="stable")
    return order[:min(n, imp.size)].astype(np.int64)


def _fit_base(name, params, X, y, seed, threads=1):
    if name == "forest":
        return rf_fit(X, y, seed=seed, threads=threads, **params)
    if name == "boost":
        return gbt_fit(X, y, seed=seed, **params)
    if name == "mlp":
        return mlp_fit(X, y, seed=seed, **params)
    raise UsageError(f"unknown base learner {name!r}")


def oof_probabilities(X, y, fit_fns, predict_fns, k: int = 5, seed: int = 0,
                      resampler: str = "none", smote_k: int = 5):
    """Out-of-fold base probabilities for every training row.

    ``fit_fns``/``predict_fns`` map learner name to callables
    ``fit(X, y, seed) -> model`` and ``predict(model, X) -> probs``. The
    resampler runs on each fold's complement only, so synthetic rows never
    reach a held-out fold and no model scores a row it trained on.

    Returns (P, fold_id) where P is (n, 3 * len(fit_fns)) in BASE_ORDER and
    fold_id marks each row's held-out fold.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.int64)
    n = X.shape[0]
    plans = stratified_kfold(y, k=k, seed=seed)
    names = [name for name in BASE_ORDER if name in fit_fns]
    P = np.full((n, N_CLASSES * len(names)), np.nan)
    fold_id = np.full(n, -1, dtype=np.int64)
    for f, plan in enumerate(plans):
        train = LabeledMatrix.from_arrays(X[plan.train_idx], y[plan.train_idx])
        train = resample(train, resampler, k=smote_k,
                         seed=_mix(seed, "smote", f))
        fold_id[plan.test_idx] = f
        for b, name in enumerate(names):
            model = fit_fns[name](train.rows, train.labels, _mix(seed, name, f))
            probs = predict_fns[name](model, X[plan.test_idx])
            P[plan.test_idx, b * N_CLASSES:(b + 1) * N_CLASSES] = probs
    if np.isnan(P).any() or (fold_id < 0).any():
        raise StratificationError("some rows received no out-of-fold probabilities")
    return P, fold_id


def _mix(seed: int, stage: str, index: int) -> int:
    """Derive a child seed for a (stage, fold) pair."""
    return int(substream(seed, "stack", _STAGE_OFFSETS[stage], index)
               .integers(0, 2 ** 62))


_STAGE_OFFSETS = {"forest": 0, "boost": 1, "mlp": 2, "smote": 3, "meta": 4,
                  "top5": 5, "final": 6}


def top_features_by_boost_importance(X, y, boost_params, n: int = 5,
                                     seed: int = 0, resampler: str = "none",
                                     smote_k: int = 5, n_repeats: int = 10):
    """Top-n features by permutation importance of a boosted model on an
    inner stratified validation split (computed before stacking)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.int64)
    plans = stratified_kfold(y, k=4, seed=_mix(seed, "top5", 0))
    plan = plans[0]
    inner = LabeledMatrix.from_arrays(X[plan.train_idx], y[plan.train_idx])
    inner = resample(inner, resampler, k=smote_k, seed=_mix(seed, "top5", 1))
    model = gbt_fit(inner.rows, inner.labels, seed=_mix(seed, "top5", 2),
                    **boost_params)
    imp = permutation_importance(model, X[plan.test_idx], y[plan.test_idx],
                                 n_repeats=n_repeats, seed=_mix(seed, "top5", 3))
    return select_top_features(imp, n=n), imp


def stack_fit(X, y, preset: str = "implementation", base_params: dict = None,
              meta_params: dict = None, oof_k: int = 5,
              resampler: str = "smote-tomek", smote_k: int = 5, seed: int = 0,
              manifest_hash: str = "", threads: int = 1) -> StackModel:
    """Train the stacking ensemble.

    Every training row's meta features come from base models whose fold
    excluded that row; the resampler only ever sees fold complements. The
    final base models are retrained on the full (resampled) training set.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.int64)
    if X.shape[0] < oof_k:
        raise UsageError(f"need at least oof_k={oof_k} rows, got {X.shape[0]}")
    params = preset_params(preset, base_params)
    meta_cfg = dict(META_PARAMS, **(meta_params or {}))

    top5, _ = top_features_by_boost_importance(
        X, y, params["boost"], n=5, seed=seed, resampler=resampler,
        smote_k=smote_k)

    fit_fns = {name: (lambda Xa, ya, s, _n=name: _fit_base(_n, params[_n], Xa, ya, s,
                                                           threads=threads))
               for name in BASE_ORDER}
    predict_fns = {name: (lambda m, Xa: m.predict_proba(Xa)) for name in BASE_ORDER}
    P, _ = oof_probabilities(X, y, fit_fns, predict_fns, k=oof_k, seed=seed,
                             resampler=resampler, smote_k=smote_k)

    meta_X = np.hstack([P, X[:, top5]])
    meta = logreg_fit(meta_X, y, **meta_cfg)

    full = resample(LabeledMatrix.from_arrays(X, y), resampler, k=smote_k,
                    seed=_mix(seed, "smote", oof_k))
    finals = {name: _fit_base(name, params[name], full.rows, full.labels,
                              _mix(seed, name, oof_k), threads=threads)
              for name in BASE_ORDER}

    return StackModel(forest=finals["forest"], boost=finals["boost"],
                      mlp=finals["mlp"], meta=meta, top5=top5, oof_k=oof_k,
                      manifest_hash=manifest_hash, preset=preset,
                      base_params=params, meta_params=meta_cfg)


def stack_predict(model: StackModel, X):
    """Predicted labels and meta probabilities; argmax ties resolve to the
    lower class index."""
    probs = model.predict_proba(X)
    return np.argmax(probs, axis=1), probs


# --- serialization hooks used by learners.serialize ---


def stack_payload(model: StackModel):
    meta = {
        "oof_k": model.oof_k,
        "top5": [int(i) for i in model.top5],
        "preset": model.preset,
        "base_params": _jsonable(model.base_params),
        "meta_params": model.meta_params,
        "parts": {},
    }
    arrays = {}
    for name, part in (("forest", model.forest), ("boost", model.boost),
                       ("mlp", model.mlp), ("meta", model.meta)):
        part_meta, part_arrays = model_payload(part)
        meta["parts"][name] = {"kind": part.kind, "meta": part_meta}
        for key, arr in part_arrays.items():
            arrays[f"{name}/{key}"] = arr
    return meta, arrays


def stack_restore(meta, arrays) -> StackModel:
    parts = {}
    for name, info in meta["parts"].items():
        sub = {key[len(name) + 1:]: arr for key, arr in arrays.items()
               if key.startswith(name + "/")}
        parts[name] = restore_model(info["kind"], info["meta"], sub)
    return StackModel(forest=parts["forest"], boost=parts["boost"],
                      mlp=parts["mlp"], meta=parts["meta"],
                      top5=np.array(meta["top5"], dtype=np.int64),
                      oof_k=meta["oof_k"], preset=meta.get("preset", ""),
                      base_params=meta.get("base_params", {}),
                      meta_params=meta.get("meta_params", {}))


def _jsonable(params: dict) -> dict:
    out = {}
    for learner, cfg in params.items():
        out[learner] = {k: (list(v) if isinstance(v, tuple) else v)
                        for k, v in cfg.items()}
    return out
