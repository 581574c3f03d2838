"""Bag-level k-mer representations and the MinMax / Jaccard set kernels."""

from __future__ import annotations

from collections import Counter

import numpy as np
import scipy.sparse as sp

from rephop.repertoire import Repertoire

K = 4


def kmers(residues: str, k: int = K):
    return (residues[i : i + k] for i in range(len(residues) - k + 1))


def kmer_representation(rep: Repertoire, k: int = K, binary: bool = False) -> dict[str, float]:
    """Average over sequences of per-sequence k-mer counts.

    With ``binary`` the averaged vector is reduced to presence indicators.
    Sequences shorter than ``k`` contribute nothing.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    counts = Counter()
    for s in rep.sequences:
        counts.update(kmers(s.residues, k))
    n = len(rep)
    if binary:
        return {m: 1.0 for m in counts}
    return {m: c / n for m, c in counts.items()}


def binarize(u: dict[str, float]) -> dict[str, float]:
    return {m: 1.0 for m, v in u.items() if v > 0}


def minmax_kernel(u: dict[str, float], v: dict[str, float]) -> float:
    """``sum min(u, v) / sum max(u, v)``; two empty vectors count as identical."""
    num = sum(min(val, v[m]) for m, val in u.items() if m in v)
    den = sum(u.values()) + sum(v.values()) - num
    if den == 0:
        return 1.0
    return num / den


def jaccard_kernel(u: dict[str, float], v: dict[str, float]) -> float:
    return minmax_kernel(binarize(u), binarize(v))


class Vocabulary:
    """Fixed k-mer index built from training repertoires; unseen k-mers are dropped."""

    def __init__(self, keys):
        self.index = {m: i for i, m in enumerate(sorted(set(keys)))}

    @classmethod
    def from_vectors(cls, vectors):
        keys = set()
        for u in vectors:
            keys.update(u)
        return cls(keys)

    def __len__(self):
        return len(self.index)

    def matrix(self, vectors) -> sp.csr_matrix:
        rows, cols, vals = [], [], []
        for r, u in enumerate(vectors):
            for m, val in u.items():
                j = self.index.get(m)
                if j is not None:
                    rows.append(r)
                    cols.append(j)
                    vals.append(val)
        mat = sp.csr_matrix((vals, (rows, cols)), shape=(len(vectors), len(self)))
        mat.sort_indices()
        return mat


def minmax_gram(A: sp.csr_matrix, B: sp.csr_matrix | None = None) -> np.ndarray:
    """MinMax kernel between the rows of ``A`` and ``B`` (non-negative CSR)."""
    symmetric = B is None
    B = A if B is None else B
    if A.shape[1] != B.shape[1]:
        raise ValueError("feature dimensions differ")
    sums_a = np.asarray(A.sum(axis=1)).ravel()
    sums_b = np.asarray(B.sum(axis=1)).ravel()
    gram = np.empty((A.shape[0], B.shape[0]))
    row_of_nnz = np.repeat(np.arange(B.shape[0]), np.diff(B.indptr))
    dense = np.zeros(A.shape[1])
    for i in range(A.shape[0]):
        lo, hi = A.indptr[i], A.indptr[i + 1]
        dense[A.indices[lo:hi]] = A.data[lo:hi]
        mins = np.minimum(dense[B.indices], B.data)
        num = np.bincount(row_of_nnz, weights=mins, minlength=B.shape[0])
        dense[A.indices[lo:hi]] = 0.0
        den = sums_a[i] + sums_b - num
        with np.errstate(invalid="ignore", divide="ignore"):
            gram[i] = np.where(den > 0, num / den, 1.0)
    if symmetric:
        gram = 0.5 * (gram + gram.T)
    return gram


def binarize_matrix(A: sp.csr_matrix) -> sp.csr_matrix:
    B = A.copy()
    B.data = (B.data > 0).astype(float)
    B.eliminate_zeros()
    return B


def jaccard_gram(A: sp.csr_matrix, B: sp.csr_matrix | None = None) -> np.ndarray:
    return minmax_gram(binarize_matrix(A), None if B is None else binarize_matrix(B))
