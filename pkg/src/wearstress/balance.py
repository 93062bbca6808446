"""Class rebalancing: SMOTE oversampling, Tomek-link cleaning, and the
SMOTE-then-Tomek hybrid. Only ever applied to training partitions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import StressLabel
from .errors import UsageError
from .rng import substream


@dataclass
class LabeledMatrix:
    """Feature rows with labels and a synthetic-row provenance flag."""

    rows: np.ndarray
    labels: np.ndarray
    row_provenance: np.ndarray  # True = synthetic

    def __post_init__(self):
        self.rows = np.atleast_2d(np.asarray(self.rows, dtype=np.float64))
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.row_provenance = np.asarray(self.row_provenance, dtype=bool)
        if not (len(self.rows) == len(self.labels) == len(self.row_provenance)):
            raise UsageError("rows, labels, and provenance must have equal length")

    @classmethod
    def from_arrays(cls, rows, labels):
        rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
        return cls(rows=rows, labels=labels,
                   row_provenance=np.zeros(len(rows), dtype=bool))

    def __len__(self):
        return len(self.rows)


def _sq_dists_chunked(X, Y, chunk=256):
    """Squared Euclidean distances, row-chunked to bound memory.

    Uses the same per-pair sum as a direct scan so results are bit-identical
    to a brute-force oracle.
    """
    out = np.empty((X.shape[0], Y.shape[0]))
    for i0 in range(0, X.shape[0], chunk):
        diff = X[i0:i0 + chunk, None, :] - Y[None, :, :]
        out[i0:i0 + chunk] = np.sum(diff * diff, axis=2)
    return out


def smote(data: LabeledMatrix, k: int = 5, seed: int = 0) -> LabeledMatrix:
    """Oversample every minority class up to the majority count.

    Each synthetic row is x + u * (nn - x) for a uniformly drawn u in
    [0, 1] and nn one of x's k nearest same-class neighbors (k clamped to
    class_size - 1). Original rows are preserved verbatim, synthetic rows
    are appended per class in label order.
    """
    if k < 1:
        raise UsageError(f"smote k must be >= 1, got {k}")
    labels = data.labels
    classes, counts = np.unique(labels, return_counts=True)
    majority = int(counts.max())

    new_rows = [data.rows]
    new_labels = [labels]
    new_prov = [data.row_provenance]
    for cls, count in zip(classes, counts):
        n_syn = majority - int(count)
        if n_syn == 0:
            continue
        if count < 2:
            name = StressLabel(cls).short if 0 <= cls < 3 else str(cls)
            raise UsageError(
                f"class {name} has a single member; SMOTE needs >= 2")
        Xc = data.rows[labels == cls]
        kk = min(k, int(count) - 1)
        d2 = _sq_dists_chunked(Xc, Xc)
        np.fill_diagonal(d2, np.inf)
        nn = np.argsort(d2, axis=1, kind="stable")[:, :kk]

        rng = substream(seed, "smote", int(cls))
        base = rng.integers(0, int(count), size=n_syn)
        pick = rng.integers(0, kk, size=n_syn)
        u = rng.random(n_syn)
        anchors = Xc[base]
        partners = Xc[nn[base, pick]]
        synth = anchors + u[:, None] * (partners - anchors)

        new_rows.append(synth)
        new_labels.append(np.full(n_syn, cls, dtype=np.int64))
        new_prov.append(np.ones(n_syn, dtype=bool))

    if len(new_rows) == 1:
        return LabeledMatrix(rows=data.rows.copy(), labels=labels.copy(),
                             row_provenance=data.row_provenance.copy())
    return LabeledMatrix(rows=np.vstack(new_rows),
                         labels=np.concatenate(new_labels),
                         row_provenance=np.concatenate(new_prov))


def tomek_links(data: LabeledMatrix):
    """Mutual-nearest-neighbor pairs of opposite classes.

    (i, j) with i < j is a link iff labels differ and each point is the
    other's single nearest neighbor; nearest-neighbor ties resolve to the
    lower index.
    """
    n = len(data)
    if n < 2:
        return []
    d2 = _sq_dists_chunked(data.rows, data.rows)
    np.fill_diagonal(d2, np.inf)
    nn = np.argmin(d2, axis=1)  # first minimum = lowest index on ties
    links = []
    for i in range(n):
        j = int(nn[i])
        if j > i and int(nn[j]) == i and data.labels[i] != data.labels[j]:
            links.append((i, j))
    return links


def smote_tomek(data: LabeledMatrix, k: int = 5, seed: int = 0) -> LabeledMatrix:
    """SMOTE to full balance, then drop both members of every Tomek link."""
    over = smote(data, k=k, seed=seed)
    links = tomek_links(over)
    if not links:
        return over
    drop = np.zeros(len(over), dtype=bool)
    for i, j in links:
        drop[i] = drop[j] = True
    keep = ~drop
    return LabeledMatrix(rows=over.rows[keep], labels=over.labels[keep],
                         row_provenance=over.row_provenance[keep])


RESAMPLERS = ("none", "smote", "smote-tomek")


def resample(data: LabeledMatrix, method: str, k: int = 5, seed: int = 0) -> LabeledMatrix:
    """Dispatch by resampler name; "none" returns the input unchanged."""
    if method == "none":
        return data
    if method == "smote":
        return smote(data, k=k, seed=seed)
    if method == "smote-tomek":
        return smote_tomek(data, k=k, seed=seed)
    raise UsageError(f"unknown resampler {method!r}; choose from {RESAMPLERS}")
