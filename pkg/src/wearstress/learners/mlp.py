"""Multilayer perceptron: ReLU hidden layers, optional batch norm and
dropout, Adam optimizer, softmax cross-entropy."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DivergenceError, UsageError
from ..rng import substream

_BN_EPS = 1e-5
_BN_MOMENTUM = 0.9


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class MlpModel:
    kind = "mlp"

    weights: list
    biases: list
    bn_gamma: list
    bn_beta: list
    bn_mean: list
    bn_var: list
    layers: tuple
    n_classes: int
    n_features: int
    dropout: float
    batch_norm: bool
    params: dict = field(default_factory=dict)

    def _forward_eval(self, X):
        a = X
        n_hidden = len(self.layers)
        for i in range(n_hidden):
            z = a @ self.weights[i] + self.biases[i]
            if self.batch_norm:
                z = (z - self.bn_mean[i]) / np.sqrt(self.bn_var[i] + _BN_EPS)
                z = self.bn_gamma[i] * z + self.bn_beta[i]
            a = np.maximum(z, 0.0)
        return a @ self.weights[n_hidden] + self.biases[n_hidden]

    def predict_proba(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n_features:
            raise UsageError(
                f"expected {self.n_features} feature columns, got {X.shape[1]}")
        return _softmax(self._forward_eval(X))

    def loss_and_gradients(self, X, y):
        """Cross-entropy loss and analytic weight/bias gradients.

        Only valid with batch norm and dropout disabled; used by the
        finite-difference gradient checks.
        """
        if self.batch_norm or self.dropout > 0:
            raise UsageError("gradient check requires batch_norm and dropout off")
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        y = np.asarray(y, dtype=np.int64)
        n = X.shape[0]
        n_hidden = len(self.layers)

        acts = [X]
        pre = []
        a = X
        for i in range(n_hidden):
            z = a @ self.weights[i] + self.biases[i]
            pre.append(z)
            a = np.maximum(z, 0.0)
            acts.append(a)
        logits = a @ self.weights[n_hidden] + self.biases[n_hidden]
        probs = _softmax(logits)
        loss = float(-np.mean(np.log(np.clip(probs[np.arange(n), y], 1e-300, None))))

        Y = np.zeros_like(probs)
        Y[np.arange(n), y] = 1.0
        delta = (probs - Y) / n
        grads_w = [None] * (n_hidden + 1)
        grads_b = [None] * (n_hidden + 1)
        for i in range(n_hidden, -1, -1):
            grads_w[i] = acts[i].T @ delta
            grads_b[i] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i].T) * (pre[i - 1] > 0)
        return loss, grads_w, grads_b


class _Adam:
    def __init__(self, shapes, lr, beta1, beta2, eps):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = self.b1 * self.m[i] + (1 - self.b1) * g
            self.v[i] = self.b2 * self.v[i] + (1 - self.b2) * g * g
            mhat = self.m[i] / (1 - self.b1 ** self.t)
            vhat = self.v[i] / (1 - self.b2 ** self.t)
            p -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def mlp_fit(X, y, layers=(128, 64, 32), n_classes: int = 3, dropout: float = 0.0,
            batch_norm: bool = False, lr: float = 1e-3, beta1: float = 0.9,
            beta2: float = 0.999, eps: float = 1e-8, epochs: int = 100,
            batch_size: int = 64, seed: int = 0) -> MlpModel:
    """Train the MLP with mini-batch Adam.

    He-uniform initialization from ``seed``; dropout and batch-norm batch
    statistics apply at train time only, inference uses the frozen running
    statistics. Raises DivergenceError if the loss goes non-finite.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.int64)
    n, d = X.shape
    if n == 0:
        raise UsageError("cannot fit an MLP on an empty matrix")
    batch_size = min(batch_size, n)
    rng = substream(seed, "mlp", 0)

    dims = [d, *layers, n_classes]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    n_hidden = len(layers)
    bn_gamma = [np.ones(w) for w in layers] if batch_norm else []
    bn_beta = [np.zeros(w) for w in layers] if batch_norm else []
    bn_mean = [np.zeros(w) for w in layers] if batch_norm else []
    bn_var = [np.ones(w) for w in layers] if batch_norm else []

    params = weights + biases + bn_gamma + bn_beta
    adam = _Adam([p.shape for p in params], lr, beta1, beta2, eps)

    Y = np.zeros((n, n_classes))
    Y[np.arange(n), y] = 1.0

    for epoch in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            rows = order[start:start + batch_size]
            xb, yb = X[rows], Y[rows]
            b = xb.shape[0]

            # forward
            a = xb
            caches = []
            for i in range(n_hidden):
                z = a @ weights[i] + biases[i]
                if batch_norm:
                    mu = z.mean(axis=0)
                    var = z.var(axis=0)
                    inv = 1.0 / np.sqrt(var + _BN_EPS)
                    zhat = (z - mu) * inv
                    out = bn_gamma[i] * zhat + bn_beta[i]
                    bn_mean[i] = _BN_MOMENTUM * bn_mean[i] + (1 - _BN_MOMENTUM) * mu
                    bn_var[i] = _BN_MOMENTUM * bn_var[i] + (1 - _BN_MOMENTUM) * var
                else:
                    zhat, inv, out = None, None, z
                h = np.maximum(out, 0.0)
                if dropout > 0:
                    mask = (rng.random(h.shape) >= dropout) / (1.0 - dropout)
                    h = h * mask
                else:
                    mask = None
                caches.append((a, zhat, inv, out, mask))
                a = h
            logits = a @ weights[n_hidden] + biases[n_hidden]
            probs = _softmax(logits)
            loss = -np.mean(np.log(np.clip(probs[np.arange(b), np.argmax(yb, 1)],
                                           1e-300, None)))
            if not np.isfinite(loss):
                raise DivergenceError(
                    f"non-finite training loss at epoch {epoch}", epoch=epoch)

            # backward
            gw = [None] * (n_hidden + 1)
            gb = [None] * (n_hidden + 1)
            ggam = [None] * n_hidden
            gbet = [None] * n_hidden
            delta = (probs - yb) / b
            gw[n_hidden] = a.T @ delta
            gb[n_hidden] = delta.sum(axis=0)
            da = delta @ weights[n_hidden].T
            for i in range(n_hidden - 1, -1, -1):
                a_in, zhat, inv, out, mask = caches[i]
                if mask is not None:
                    da = da * mask
                dout = da * (out > 0)
                if batch_norm:
                    ggam[i] = (dout * zhat).sum(axis=0)
                    gbet[i] = dout.sum(axis=0)
                    bsz = dout.shape[0]
                    dz = (bn_gamma[i] * inv / bsz) * (
                        bsz * dout - dout.sum(axis=0)
                        - zhat * (dout * zhat).sum(axis=0))
                else:
                    dz = dout
                gw[i] = a_in.T @ dz
                gb[i] = dz.sum(axis=0)
                if i > 0:
                    da = dz @ weights[i].T

            grads = gw + gb + (ggam if batch_norm else []) + (gbet if batch_norm else [])
            adam.step(params, grads)

    return MlpModel(weights=weights, biases=biases, bn_gamma=bn_gamma,
                    bn_beta=bn_beta, bn_mean=bn_mean, bn_var=bn_var,
                    layers=tuple(layers), n_classes=n_classes, n_features=d,
                    dropout=dropout, batch_norm=batch_norm,
                    params={"layers": list(layers), "dropout": dropout,
                            "batch_norm": batch_norm, "lr": lr, "epochs": epochs,
                            "batch_size": batch_size, "seed": seed})
