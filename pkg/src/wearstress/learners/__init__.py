"""Base learners (forest, boosted trees, MLP) and the logistic-regression
meta-learner, plus the two published hyperparameter presets.

Preset "method" carries the architecture-description values; preset
"implementation" carries the values used for the reported experiments.
Both ship because the sources disagree; "implementation" is the default.
"""

from ..errors import UsageError
from .boost import BoostModel, gbt_fit
from .forest import ForestModel, rf_fit
from .logreg import LogRegModel, logreg_fit
from .mlp import MlpModel, mlp_fit
from .serialize import MODEL_FORMAT_VERSION, load_model, save_model

PRESETS = {
    "method": {
        "forest": dict(n_trees=200, max_depth=15, min_samples_leaf=1,
                       class_weight=None),
        "boost": dict(learning_rate=0.1, max_depth=8, gamma=0.5, lam=1.0,
                      n_rounds=200, early_stopping_rounds=20, holdout_frac=0.1,
                      class_weights=None),
        "mlp": dict(layers=(128, 64, 32), batch_norm=False, dropout=0.0,
                    lr=1e-3, epochs=100, batch_size=64),
    },
    "implementation": {
        "forest": dict(n_trees=500, max_depth=15, min_samples_leaf=5,
                       class_weight="balanced"),
        "boost": dict(learning_rate=0.1, max_depth=7, gamma=1.2, lam=1.0,
                      n_rounds=200, early_stopping_rounds=20, holdout_frac=0.1,
                      class_weights={1: 6.3}),
        "mlp": dict(layers=(256, 128, 64), batch_norm=True, dropout=0.3,
                    lr=1e-3, epochs=100, batch_size=64),
    },
}

META_PARAMS = dict(C=1.0)


def preset_params(name: str, overrides: dict = None) -> dict:
    """Deep-copied preset with optional per-learner overrides merged in."""
    if name not in PRESETS:
        raise UsageError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    params = {learner: dict(cfg) for learner, cfg in PRESETS[name].items()}
    for learner, cfg in (overrides or {}).items():
        if learner not in params:
            raise UsageError(f"unknown learner {learner!r} in overrides")
        params[learner].update(cfg)
    return params


def predict_proba(model, X):
    """Uniform probability contract across all model kinds."""
    return model.predict_proba(X)


__all__ = [
    "BoostModel", "ForestModel", "LogRegModel", "MlpModel",
    "MODEL_FORMAT_VERSION", "META_PARAMS", "PRESETS",
    "gbt_fit", "rf_fit", "logreg_fit", "mlp_fit",
    "load_model", "save_model", "preset_params", "predict_proba",
]
