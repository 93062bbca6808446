"""Binary model container: JSON header + raw numpy parameter blocks.

Round trips are bit-exact: save(load(save(m))) produces identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import DataFormatError, UsageError
from .boost import BoostModel
from .forest import ForestModel
from .logreg import LogRegModel
from .mlp import MlpModel
from .tree import TreeArrays

MODEL_FORMAT_VERSION = "wearstress-model-v1"
_MAGIC = b"WSMODEL1"


def pack_trees(trees, prefix: str):
    """Concatenate a tree list into flat arrays keyed by ``prefix``."""
    offsets = np.zeros(len(trees) + 1, dtype=np.int64)
    for i, t in enumerate(trees):
        offsets[i + 1] = offsets[i] + t.n_nodes
    return {
        f"{prefix}.offsets": offsets,
        f"{prefix}.feature": np.concatenate([t.feature for t in trees])
        if trees else np.empty(0, dtype=np.int32),
        f"{prefix}.threshold": np.concatenate([t.threshold for t in trees])
        if trees else np.empty(0),
        f"{prefix}.left": np.concatenate([t.left for t in trees])
        if trees else np.empty(0, dtype=np.int32),
        f"{prefix}.right": np.concatenate([t.right for t in trees])
        if trees else np.empty(0, dtype=np.int32),
        f"{prefix}.value": np.vstack([t.value for t in trees])
        if trees else np.empty((0, 1)),
    }


def unpack_trees(arrays, prefix: str):
    offsets = arrays[f"{prefix}.offsets"]
    out = []
    for i in range(offsets.size - 1):
        a, b = int(offsets[i]), int(offsets[i + 1])
        out.append(TreeArrays(
            feature=arrays[f"{prefix}.feature"][a:b],
            threshold=arrays[f"{prefix}.threshold"][a:b],
            left=arrays[f"{prefix}.left"][a:b],
            right=arrays[f"{prefix}.right"][a:b],
            value=arrays[f"{prefix}.value"][a:b]))
    return out


def _forest_payload(m: ForestModel):
    meta = {"n_classes": m.n_classes, "n_features": m.n_features,
            "params": m.params, "n_trees": len(m.trees)}
    return meta, pack_trees(m.trees, "trees")


def _forest_restore(meta, arrays) -> ForestModel:
    return ForestModel(trees=unpack_trees(arrays, "trees"),
                       n_classes=meta["n_classes"], n_features=meta["n_features"],
                       params=meta["params"])


def _boost_payload(m: BoostModel):
    flat = [t for rnd in m.trees for t in rnd]
    meta = {"n_classes": m.n_classes, "n_features": m.n_features,
            "params": m.params, "n_rounds": m.n_rounds,
            "learning_rate": m.learning_rate}
    arrays = pack_trees(flat, "trees")
    arrays["base_score"] = m.base_score
    arrays["train_loss"] = m.train_loss
    return meta, arrays


def _boost_restore(meta, arrays) -> BoostModel:
    flat = unpack_trees(arrays, "trees")
    C = meta["n_classes"]
    trees = [flat[i * C:(i + 1) * C] for i in range(meta["n_rounds"])]
    return BoostModel(trees=trees, base_score=arrays["base_score"],
                      learning_rate=meta["learning_rate"], n_classes=C,
                      n_features=meta["n_features"], params=meta["params"],
                      train_loss=arrays["train_loss"])


def _mlp_payload(m: MlpModel):
    meta = {"layers": list(m.layers), "n_classes": m.n_classes,
            "n_features": m.n_features, "dropout": m.dropout,
            "batch_norm": m.batch_norm, "params": m.params}
    arrays = {}
    for i, (w, b) in enumerate(zip(m.weights, m.biases)):
        arrays[f"w{i}"] = w
        arrays[f"b{i}"] = b
    for i in range(len(m.bn_gamma)):
        arrays[f"bn_gamma{i}"] = m.bn_gamma[i]
        arrays[f"bn_beta{i}"] = m.bn_beta[i]
        arrays[f"bn_mean{i}"] = m.bn_mean[i]
        arrays[f"bn_var{i}"] = m.bn_var[i]
    return meta, arrays


def _mlp_restore(meta, arrays) -> MlpModel:
    n_layers = len(meta["layers"]) + 1
    weights = [arrays[f"w{i}"] for i in range(n_layers)]
    biases = [arrays[f"b{i}"] for i in range(n_layers)]
    n_bn = len(meta["layers"]) if meta["batch_norm"] else 0
    return MlpModel(weights=weights, biases=biases,
                    bn_gamma=[arrays[f"bn_gamma{i}"] for i in range(n_bn)],
                    bn_beta=[arrays[f"bn_beta{i}"] for i in range(n_bn)],
                    bn_mean=[arrays[f"bn_mean{i}"] for i in range(n_bn)],
                    bn_var=[arrays[f"bn_var{i}"] for i in range(n_bn)],
                    layers=tuple(meta["layers"]), n_classes=meta["n_classes"],
                    n_features=meta["n_features"], dropout=meta["dropout"],
                    batch_norm=meta["batch_norm"], params=meta["params"])


def _logreg_payload(m: LogRegModel):
    meta = {"C_reg": m.C_reg, "n_classes": m.n_classes,
            "n_features": m.n_features, "params": m.params}
    return meta, {"W": m.W}


def _logreg_restore(meta, arrays) -> LogRegModel:
    return LogRegModel(W=arrays["W"], C_reg=meta["C_reg"],
                       n_classes=meta["n_classes"], n_features=meta["n_features"],
                       params=meta["params"])


_PAYLOAD = {
    "forest": _forest_payload,
    "boost": _boost_payload,
    "mlp": _mlp_payload,
    "logreg": _logreg_payload,
}
_RESTORE = {
    "forest": _forest_restore,
    "boost": _boost_restore,
    "mlp": _mlp_restore,
    "logreg": _logreg_restore,
}


def model_payload(model):
    try:
        return _PAYLOAD[model.kind](model)
    except KeyError:
        raise UsageError(f"unknown model kind {getattr(model, 'kind', None)!r}") from None


def restore_model(kind: str, meta, arrays):
    if kind == "stack":  # registered lazily to avoid an import cycle
        from ..stack import stack_restore
        return stack_restore(meta, arrays)
    try:
        return _RESTORE[kind](meta, arrays)
    except KeyError:
        raise DataFormatError(f"unknown model kind {kind!r}") from None


def save_model(model, path, manifest_hash: str = "", preset: str = None) -> None:
    """Write a model container; nested models are handled by the payload."""
    if model.kind == "stack":
        from ..stack import stack_payload
        meta, arrays = stack_payload(model)
    else:
        meta, arrays = model_payload(model)
    names = sorted(arrays)
    header = {
        "format": MODEL_FORMAT_VERSION,
        "kind": model.kind,
        "preset": preset,
        "manifest_hash": manifest_hash,
        "meta": meta,
        "arrays": names,
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for name in names:
            np.lib.format.write_array(fh, np.ascontiguousarray(arrays[name]),
                                      version=(1, 0), allow_pickle=False)


def load_model(path):
    """Read a model container; returns (model, header dict)."""
    path = Path(path)
    if not path.exists():
        raise UsageError(f"missing model artifact: {path}")
    with open(path, "rb") as fh:
        if fh.read(8) != _MAGIC:
            raise DataFormatError(f"{path}: not a model container")
        (ln,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(ln).decode())
        if header.get("format") != MODEL_FORMAT_VERSION:
            raise DataFormatError(
                f"{path}: format {header.get('format')!r}, expected {MODEL_FORMAT_VERSION!r}")
        arrays = {}
        for name in header["arrays"]:
            arrays[name] = np.lib.format.read_array(fh, allow_pickle=False)
    return restore_model(header["kind"], header["meta"], arrays), header
