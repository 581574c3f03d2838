"""k-nearest-neighbour scoring with kernel-induced distances ``1 - k(u, v)``."""

import numpy as np


def knn_scores(kernel_rows, train_labels, n_neighbors: int) -> np.ndarray:
    """Fraction of positive labels among the ``n_neighbors`` nearest training points.

    ``kernel_rows`` is ``(n_query, n_train)``. Equal distances are resolved
    towards the lower training index.
    """
    kernel_rows = np.atleast_2d(np.asarray(kernel_rows, dtype=float))
    labels = np.asarray(train_labels, dtype=float)
    n_train = labels.size
    if n_train == 0:
        raise ValueError("empty training set")
    if kernel_rows.shape[1] != n_train:
        raise ValueError(f"kernel rows have {kernel_rows.shape[1]} columns for {n_train} training points")
    if not 1 <= n_neighbors <= n_train:
        raise ValueError(f"n_neighbors must lie in [1, {n_train}], got {n_neighbors}")
    dist = 1.0 - kernel_rows
    nearest = np.argsort(dist, axis=1, kind="stable")[:, :n_neighbors]
    return labels[nearest].mean(axis=1)


def knn_predict(kernel_row, train_labels, n_neighbors: int) -> float:
    return float(knn_scores(kernel_row, train_labels, n_neighbors)[0])
