"""Logistic regression on bag-level k-mer vectors, trained with Adam."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from rephop.model import sigmoid


@dataclass
class LogRegModel:
    weights: np.ndarray
    bias: float

    def score(self, X) -> np.ndarray:
        return sigmoid(np.asarray(X @ self.weights).ravel() + self.bias)


def logreg_fit(X, labels, lr: float = 1e-3, l1: float = 0.0, l2: float = 0.0, max_updates: int = 10_000,
               batch_size: int = 4, seed: int = 0, beta1: float = 0.9, beta2: float = 0.999,
               eps: float = 1e-8) -> LogRegModel:
    """Minimize mean BCE + ``l1 |w|_1 + l2 |w|^2`` with minibatch Adam.

    ``X`` may be dense or a scipy sparse matrix; the bias is not penalized.
    """
    X = sp.csr_matrix(X) if not sp.issparse(X) else X.tocsr()
    y = np.asarray(labels, dtype=float)
    n, d = X.shape
    rng = np.random.default_rng(seed)
    w = np.zeros(d)
    b = 0.0
    m_w, v_w = np.zeros(d), np.zeros(d)
    m_b = v_b = 0.0
    order = np.array([], dtype=int)
    for t in range(1, max_updates + 1):
        if len(order) < batch_size:
            order = np.concatenate([order, rng.permutation(n)])
        idx, order = order[:batch_size], order[batch_size:]
        xb = X[idx]
        err = sigmoid(np.asarray(xb @ w).ravel() + b) - y[idx]
        gw = np.asarray(xb.T @ err).ravel() / len(idx) + l1 * np.sign(w) + 2.0 * l2 * w
        gb = float(err.mean())
        m_w = beta1 * m_w + (1 - beta1) * gw
        v_w = beta2 * v_w + (1 - beta2) * gw * gw
        m_b = beta1 * m_b + (1 - beta1) * gb
        v_b = beta2 * v_b + (1 - beta2) * gb * gb
        c1, c2 = 1 - beta1**t, 1 - beta2**t
        w -= lr * (m_w / c1) / (np.sqrt(v_w / c2) + eps)
        b -= lr * (m_b / c1) / (np.sqrt(v_b / c2) + eps)
    return LogRegModel(w, b)


def logreg_score(model: LogRegModel, X) -> np.ndarray:
    return model.score(X)
