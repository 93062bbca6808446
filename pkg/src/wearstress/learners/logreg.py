"""Multinomial logistic regression with L2 regularization.

Full-batch gradient descent with Armijo backtracking until the gradient
norm drops below 1e-6 or 5000 iterations pass. The bias column is not
regularized.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import UsageError


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class LogRegModel:
    kind = "logreg"

    W: np.ndarray          # (n_classes, d+1), last column is the bias
    C_reg: float
    n_classes: int
    n_features: int
    params: dict = field(default_factory=dict)

    def predict_proba(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n_features:
            raise UsageError(
                f"expected {self.n_features} feature columns, got {X.shape[1]}")
        X1 = np.hstack([X, np.ones((X.shape[0], 1))])
        return _softmax(X1 @ self.W.T)


def logreg_loss_grad(W, X1, Y, C_reg):
    """Mean cross-entropy + (1/(2*C*n)) * ||W_no_bias||^2 and its gradient."""
    n = X1.shape[0]
    probs = _softmax(X1 @ W.T)
    ce = -np.mean(np.log(np.clip((probs * Y).sum(axis=1), 1e-300, None)))
    reg = np.sum(W[:, :-1] ** 2) / (2.0 * C_reg * n)
    grad = (probs - Y).T @ X1 / n
    grad[:, :-1] += W[:, :-1] / (C_reg * n)
    return ce + reg, grad


def logreg_fit(X, y, C: float = 1.0, n_classes: int = 3, tol: float = 1e-6,
               max_iter: int = 5000) -> LogRegModel:
    """Fit by deterministic backtracking gradient descent from zero init."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.int64)
    n, d = X.shape
    X1 = np.hstack([X, np.ones((n, 1))])
    Y = np.zeros((n, n_classes))
    Y[np.arange(n), y] = 1.0

    W = np.zeros((n_classes, d + 1))
    loss, grad = logreg_loss_grad(W, X1, Y, C)
    step = 1.0
    for _ in range(max_iter):
        gnorm2 = float(np.sum(grad * grad))
        if np.sqrt(gnorm2) < tol:
            break
        while True:
            W_new = W - step * grad
            new_loss, new_grad = logreg_loss_grad(W_new, X1, Y, C)
            if new_loss <= loss - 1e-4 * step * gnorm2 or step < 1e-12:
                break
            step *= 0.5
        W, loss, grad = W_new, new_loss, new_grad
        step = min(step * 2.0, 1e4)

    return LogRegModel(W=W, C_reg=C, n_classes=n_classes, n_features=d,
                       params={"C": C, "tol": tol, "max_iter": max_iter})
