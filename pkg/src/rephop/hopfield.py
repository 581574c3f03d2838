"""Continuous modern Hopfield networks.

Patterns are stored as the columns of a ``d x N`` matrix. The state update
``X softmax(beta X^T xi)`` never increases the energy and coincides with
key-value attention, which :func:`attention` exposes in row-vector form.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from rephop.lambertw import lambert_w0


def softmax(scores: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = scores - scores.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def _logsumexp(v: np.ndarray) -> float:
    m = v.max()
    return float(m + np.log(np.exp(v - m).sum()))


def _check_patterns(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise ValueError(f"patterns must be a non-empty d x N matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("patterns contain non-finite values")
    return X


def _check_state(X: np.ndarray, xi) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (X.shape[0],):
        raise ValueError(f"state has shape {xi.shape}, expected ({X.shape[0]},)")
    if not np.all(np.isfinite(xi)):
        raise ValueError("state contains non-finite values")
    return xi


def _check_beta(beta: float) -> float:
    beta = float(beta)
    if not np.isfinite(beta) or beta < 0:
        raise ValueError(f"beta must be finite and non-negative, got {beta}")
    return beta


def energy(X, xi, beta: float) -> float:
    """Hopfield energy of state ``xi`` for patterns ``X`` (columns).

    ``-lse(beta, X^T xi) + log(N)/beta + xi^T xi / 2 + M^2 / 2`` where ``M``
    is the largest pattern norm.
    """
    X = _check_patterns(X)
    xi = _check_state(X, xi)
    beta = _check_beta(beta)
    if beta == 0:
        raise ValueError("energy is undefined for beta = 0")
    n = X.shape[1]
    big_m = np.linalg.norm(X, axis=0).max()
    lse = _logsumexp(beta * (X.T @ xi)) / beta
    return -lse + math.log(n) / beta + 0.5 * float(xi @ xi) + 0.5 * float(big_m) ** 2


def update_weights(X, xi, beta: float) -> np.ndarray:
    X = _check_patterns(X)
    xi = _check_state(X, xi)
    return softmax(_check_beta(beta) * (X.T @ xi))


def update(X, xi, beta: float) -> np.ndarray:
    """One synchronous update ``X softmax(beta X^T xi)``."""
    X = _check_patterns(X)
    return X @ update_weights(X, xi, beta)


@dataclass
class RetrievalResult:
    fixed_point: np.ndarray
    iterations: int
    converged: bool
    final_energy: float
    energies: list[float]


def iterate_to_fixed_point(X, xi, beta: float, tol: float = 1e-8, max_iter: int = 100) -> RetrievalResult:
    if tol <= 0:
        raise ValueError("tol must be positive")
    X = _check_patterns(X)
    xi = _check_state(X, xi)
    energies = [energy(X, xi, beta)]
    converged = False
    it = 0
    nxt = update(X, xi, beta)
    while it < max_iter:
        xi = nxt
        it += 1
        energies.append(energy(X, xi, beta))
        # look one update ahead so `converged` certifies xi itself is fixed
        nxt = update(X, xi, beta)
        if np.linalg.norm(nxt - xi) <= tol:
            converged = True
            break
    return RetrievalResult(xi, it, converged, energies[-1], energies)


def separation(X, i: int) -> float:
    """Minimal dot-product margin of pattern ``i`` against all others."""
    X = _check_patterns(X)
    n = X.shape[1]
    if n < 2:
        raise ValueError("separation needs at least two patterns")
    if not 0 <= i < n:
        raise IndexError(f"pattern index {i} out of range for {n} patterns")
    dots = X[:, i] @ X
    others = np.delete(dots, i)
    return float(dots[i] - others.max())


def well_separation_threshold(X, beta: float) -> float:
    X = _check_patterns(X)
    n = X.shape[1]
    big_m = float(np.linalg.norm(X, axis=0).max())
    return 2.0 / (beta * n) + math.log(2.0 * (n - 1) * n * beta * big_m**2) / beta


def is_well_separated(X, i: int, beta: float) -> bool:
    return separation(X, i) >= well_separation_threshold(X, beta)


@dataclass
class CapacityBound:
    a: float
    b: float
    c: float
    n_bound: float
    feasible: bool

    @property
    def exponent(self) -> float:
        """``a + ln b``, the log of the Lambert-W argument."""
        return self.a + math.log(self.b)


def capacity_bound(beta: float, K: float, d: int, p: float) -> CapacityBound:
    """Lower bound on how many random patterns on the sphere of radius
    ``K sqrt(d-1)`` can be stored with failure probability ``p``."""
    if beta <= 0 or K <= 0:
        raise ValueError("beta and K must be positive")
    if d < 2:
        raise ValueError("d must be >= 2")
    if not 0 < p <= 1:
        raise ValueError("p must lie in (0, 1]")
    arg = 2.0 * beta * K**2 * p * (d - 1)
    a = 2.0 / (d - 1) * (1.0 + math.log(arg))
    b = 2.0 * K**2 * beta / 5.0
    c = b / lambert_w0(math.exp(a + math.log(b)))
    n_bound = math.sqrt(p) * c ** ((d - 1) / 4.0)
    feasible = c >= (2.0 / math.sqrt(p)) ** (4.0 / (d - 1))
    return CapacityBound(a, b, c, n_bound, feasible)


def sample_sphere(rng: np.random.Generator, d: int, n: int, radius: float) -> np.ndarray:
    """``n`` points uniform on the sphere of given radius in R^d, as columns."""
    g = rng.standard_normal((d, n))
    return radius * g / np.linalg.norm(g, axis=0, keepdims=True)


def sample_ball(rng: np.random.Generator, d: int, radius: float) -> np.ndarray:
    direction = sample_sphere(rng, d, 1, 1.0)[:, 0]
    return radius * rng.random() ** (1.0 / d) * direction


@dataclass
class TrialOutcome:
    success: bool
    one_step_error: float
    fixed_point_distance: float
    radius: float


def retrieval_trial(seed_seq, d: int, N: int, K: float, beta: float, noise_scale: float,
                    tol: float = 1e-8, max_iter: int = 100) -> TrialOutcome:
    rng = np.random.default_rng(seed_seq)
    big_m = K * math.sqrt(d - 1)
    X = sample_sphere(rng, d, N, big_m)
    i = int(rng.integers(N))
    radius = noise_scale * big_m
    xi0 = X[:, i] + sample_ball(rng, d, radius)
    res = iterate_to_fixed_point(X, xi0, beta, tol=tol, max_iter=max_iter)
    one_step = update(X, xi0, beta)
    dist = float(np.linalg.norm(res.fixed_point - X[:, i]))
    if N > 1:
        gaps = np.linalg.norm(X - X[:, [i]], axis=0)
        disjoint = bool(np.delete(gaps, i).min() > 2 * radius)
    else:
        disjoint = True
    success = res.converged and dist <= radius and disjoint
    return TrialOutcome(success, float(np.linalg.norm(one_step - res.fixed_point)), dist, radius)


def capacity_trials(d: int, N: int, K: float, beta: float, noise_scale: float, trials: int, seed: int,
                    threads: int = 1) -> list[TrialOutcome]:
    """Run independent retrieval trials; each gets its own spawned seed so
    results do not depend on ``threads``."""
    seeds = np.random.SeedSequence(seed).spawn(trials)

    def run(s):
        return retrieval_trial(s, d, N, K, beta, noise_scale)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(run, seeds))
    return [run(s) for s in seeds]


def empirical_capacity_experiment(d: int, N: int, K: float, beta: float, noise_scale: float, trials: int,
                                  seed: int, threads: int = 1) -> float:
    """Fraction of trials in which a noisy start near a random pattern
    converges to a fixed point inside that pattern's ball, with the ball
    disjoint from every other pattern's ball.

    This is a trial-success frequency, not the failure probability of the
    capacity bound (which is over the draw of the pattern set).
    """
    outcomes = capacity_trials(d, N, K, beta, noise_scale, trials, seed, threads)
    return sum(o.success for o in outcomes) / trials


def attention(Q, K, V, beta: float) -> np.ndarray:
    """Row-wise ``softmax(beta Q K^T) V``."""
    Q, K, V = (np.atleast_2d(np.asarray(a, dtype=float)) for a in (Q, K, V))
    if Q.shape[1] != K.shape[1]:
        raise ValueError(f"query dim {Q.shape[1]} != key dim {K.shape[1]}")
    if K.shape[0] != V.shape[0]:
        raise ValueError(f"{K.shape[0]} keys but {V.shape[0]} values")
    return softmax(_check_beta(beta) * (Q @ K.T), axis=1) @ V
