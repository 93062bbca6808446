"""Deterministic random-stream derivation.

A single user-facing seed fans out into independent substreams keyed by
(stage, indices...). Every stochastic component draws from its own
substream, so parallel scheduling cannot change any result and the whole
pipeline is reproducible from one integer.
"""

import numpy as np

# Fixed stage identifiers. Append only; never renumber, or seeds stop
# reproducing old runs.
_STAGE_IDS = {
    "synth": 1,
    "preprocess": 2,
    "featurize": 3,
    "smote": 4,
    "forest": 5,
    "boost": 6,
    "mlp": 7,
    "logreg": 8,
    "stack": 9,
    "split": 10,
    "importance": 11,
    "rfe": 12,
    "eval": 13,
    "bench": 14,
}

_MASK63 = (1 << 63) - 1
_MASK32 = (1 << 32) - 1


def substream(seed: int, stage: str, *indices: int) -> np.random.Generator:
    """Return the RNG for (seed, stage, *indices).

    The same arguments always produce the same generator state, and
    distinct arguments produce statistically independent streams.
    """
    key = (_STAGE_IDS[stage],) + tuple(int(i) & _MASK32 for i in indices)
    ss = np.random.SeedSequence(entropy=int(seed) & _MASK63, spawn_key=key)
    return np.random.default_rng(ss)
