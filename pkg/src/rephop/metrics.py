"""Ranking and classification metrics plus the Mann-Whitney U test."""

from __future__ import annotations

import math

import numpy as np
from scipy.stats import rankdata


def _check_binary(scores, labels):
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels).astype(int)
    if scores.shape != labels.shape:
        raise ValueError(f"{scores.shape[0]} scores but {labels.shape[0]} labels")
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    return scores, labels


def roc_auc(scores, labels) -> float:
    """Area under the ROC curve from midranks; ties count one half."""
    scores, labels = _check_binary(scores, labels)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("roc_auc needs both classes present")
    ranks = rankdata(scores)
    u = ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def classification_metrics(scores, labels, threshold: float = 0.5) -> tuple[float, float, float]:
    """(F1, balanced accuracy, accuracy) for predictions ``score >= threshold``.

    F1 is 0 when nothing is predicted positive.
    """
    scores, labels = _check_binary(scores, labels)
    pred = scores >= threshold
    pos = labels == 1
    tp = int(np.sum(pred & pos))
    fp = int(np.sum(pred & ~pos))
    fn = int(np.sum(~pred & pos))
    tn = int(np.sum(~pred & ~pos))
    f1 = 0.0 if tp == 0 else 2 * tp / (2 * tp + fp + fn)
    tpr = tp / (tp + fn) if tp + fn else 0.0
    tnr = tn / (tn + fp) if tn + fp else 0.0
    return f1, 0.5 * (tpr + tnr), (tp + tn) / labels.size


def mann_whitney_u(group_a, group_b) -> tuple[float, float]:
    """U statistic of ``group_a`` and a two-sided p-value.

    The p-value uses the normal approximation with tie-corrected variance
    (no continuity correction).
    """
    a = np.asarray(group_a, dtype=float).ravel()
    b = np.asarray(group_b, dtype=float).ravel()
    n, m = a.size, b.size
    if n == 0 or m == 0:
        raise ValueError("both groups must be non-empty")
    ranks = rankdata(np.concatenate([a, b]))
    u_a = float(ranks[:n].sum() - n * (n + 1) / 2.0)
    total = n + m
    _, counts = np.unique(np.concatenate([a, b]), return_counts=True)
    tie_term = float((counts**3 - counts).sum())
    var = n * m / 12.0 * ((total + 1) - tie_term / (total * (total - 1))) if total > 1 else 0.0
    if var <= 0:
        return u_a, 1.0
    zscore = (u_a - n * m / 2.0) / math.sqrt(var)
    p = math.erfc(abs(zscore) / math.sqrt(2.0))
    return u_a, min(1.0, p)
