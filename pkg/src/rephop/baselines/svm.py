"""Soft-margin C-SVM trained by SMO on a precomputed Gram matrix."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TAU = 1e-12


class SvmConvergenceError(RuntimeError):
    pass


@dataclass
class SvmModel:
    coef: np.ndarray  # alpha_i * y_i, full length (zeros for non-support vectors)
    alpha: np.ndarray
    bias: float
    C: float
    kkt_gap: float
    iterations: int
    kernel: str = "precomputed"

    @property
    def support(self) -> np.ndarray:
        return np.nonzero(self.alpha > 0)[0]

    def decision(self, gram_rows: np.ndarray) -> np.ndarray:
        """Scores for test points given their kernel rows against all training points."""
        return np.atleast_2d(gram_rows) @ self.coef + self.bias


def dual_objective(alpha, gram, y) -> float:
    ya = alpha * y
    return 0.5 * float(ya @ gram @ ya) - float(alpha.sum())


def svm_fit(gram, labels, C: float, tol: float = 1e-5, max_iter: int = 1_000_000) -> SvmModel:
    """Minimize ``1/2 a^T Q a - sum(a)`` s.t. ``0 <= a <= C``, ``y^T a = 0``.

    Working pairs are chosen by maximal violation with second-order
    selection of the partner; stops when the maximal KKT violation
    ``m(a) - M(a)`` is at most ``tol``.
    """
    K = np.asarray(gram, dtype=float)
    y = np.asarray(labels, dtype=float)
    n = len(y)
    if K.shape != (n, n):
        raise ValueError(f"gram must be {n}x{n}, got {K.shape}")
    if not np.isin(y, (-1.0, 1.0)).all():
        raise ValueError("labels must be -1 or +1")
    if not np.allclose(K, K.T, atol=1e-10):
        raise ValueError("gram matrix is not symmetric")
    if C <= 0:
        raise ValueError("C must be positive")

    alpha = np.zeros(n)
    grad = -np.ones(n)  # Q alpha - e
    diag = np.diag(K).copy()
    gap = np.inf
    it = 0
    while it < max_iter:
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        viol = -y * grad
        if not up.any() or not low.any():
            gap = 0.0
            break
        i = int(np.argmax(np.where(up, viol, -np.inf)))
        g_max = viol[i]
        g_min = np.where(low, viol, np.inf).min()
        gap = g_max - g_min
        if gap <= tol:
            break
        b = g_max - viol
        cand = low & (b > 0)
        quad = diag[i] + diag - 2.0 * K[i]
        quad = np.where(quad > 0, quad, TAU)
        obj = np.where(cand, -(b * b) / quad, np.inf)
        j = int(np.argmin(obj))

        ai, aj = alpha[i], alpha[j]
        yi, yj = y[i], y[j]
        qij = yi * yj * K[i, j]
        if yi != yj:
            q = diag[i] + diag[j] + 2.0 * qij
            q = q if q > 0 else TAU
            delta = (-grad[i] - grad[j]) / q
            diff = ai - aj
            ni, nj = ai + delta, aj + delta
            if diff > 0:
                if nj < 0:
                    nj, ni = 0.0, diff
            elif ni < 0:
                ni, nj = 0.0, -diff
            if diff > 0:
                if ni > C:
                    ni, nj = C, C - diff
            elif nj > C:
                nj, ni = C, C + diff
        else:
            q = diag[i] + diag[j] - 2.0 * qij
            q = q if q > 0 else TAU
            delta = (grad[i] - grad[j]) / q
            total = ai + aj
            ni, nj = ai - delta, aj + delta
            if total > C:
                if ni > C:
                    ni, nj = C, total - C
            elif nj < 0:
                nj, ni = 0.0, total
            if total > C:
                if nj > C:
                    nj, ni = C, total - C
            elif ni < 0:
                ni, nj = 0.0, total
        ni = min(max(ni, 0.0), C)
        nj = min(max(nj, 0.0), C)
        grad += y * (K[:, i] * yi * (ni - ai) + K[:, j] * yj * (nj - aj))
        alpha[i], alpha[j] = ni, nj
        it += 1
    else:
        raise SvmConvergenceError(
            f"SMO did not reach KKT tolerance {tol} in {max_iter} iterations "
            f"(violation {gap:.3g}, C={C}, n={n}, support vectors={(alpha > 0).sum()})"
        )

    free = (alpha > 0) & (alpha < C)
    yg = y * grad
    if free.any():
        rho = yg[free].mean()
    else:
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        hi = (-yg)[up].max() if up.any() else 0.0
        lo = (-yg)[low].min() if low.any() else 0.0
        rho = -0.5 * (hi + lo)
    return SvmModel(alpha * y, alpha, float(-rho), float(C), float(gap), it)


def svm_score(model: SvmModel, gram_rows) -> np.ndarray:
    return model.decision(gram_rows)


def kkt_violation(model: SvmModel, gram, labels) -> float:
    """Largest violation of the KKT conditions of the dual, ``m(a) - M(a)``."""
    y = np.asarray(labels, dtype=float)
    grad = y * (np.asarray(gram) @ (model.alpha * y)) - 1.0
    viol = -y * grad
    a, C = model.alpha, model.C
    up = ((y > 0) & (a < C)) | ((y < 0) & (a > 0))
    low = ((y > 0) & (a > 0)) | ((y < 0) & (a < C))
    if not up.any() or not low.any():
        return 0.0
    return float(max(viol[up].max() - viol[low].min(), 0.0))
