import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rephop import hopfield as hf
from rephop.lambertw import lambert_w0

E2 = np.eye(2)


def energy_oracle(X, xi, beta):
    """Straight-line evaluation without log-sum-exp shifting."""
    n = X.shape[1]
    m = max(np.linalg.norm(X[:, j]) for j in range(n))
    s = sum(math.exp(beta * float(X[:, j] @ xi)) for j in range(n))
    return -math.log(s) / beta + math.log(n) / beta + 0.5 * float(xi @ xi) + 0.5 * m * m


class TestEnergy:
    def test_single_pattern_at_pattern(self):
        x = np.array([0.3, -1.2, 2.0])
        for beta in (0.1, 1.0, 7.0):
            assert hf.energy(x[:, None], x, beta) == pytest.approx(0.0, abs=1e-12)

    def test_single_pattern_half_squared_distance(self):
        rng = np.random.default_rng(0)
        x, xi = rng.normal(size=4), rng.normal(size=4)
        assert hf.energy(x[:, None], xi, 2.5) == pytest.approx(0.5 * np.sum((xi - x) ** 2), abs=1e-12)

    def test_zero_state(self):
        x = np.array([3.0, 4.0])
        assert hf.energy(x[:, None], np.zeros(2), 1.0) == pytest.approx(12.5)

    def test_two_orthogonal(self):
        e = hf.energy(E2, np.array([1.0, 0.0]), 1.0)
        assert e == pytest.approx(-math.log(math.e + 1) + math.log(2) + 1, abs=1e-12)
        assert e == pytest.approx(0.3799, abs=1e-4)

    def test_matches_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            d, n = rng.integers(1, 8, size=2)
            X, xi = rng.normal(size=(d, n)), rng.normal(size=d)
            beta = rng.uniform(0.1, 3)
            assert hf.energy(X, xi, beta) == pytest.approx(energy_oracle(X, xi, beta), rel=1e-10, abs=1e-10)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            hf.energy(E2, np.zeros(3), 1.0)

    def test_non_finite(self):
        with pytest.raises(ValueError):
            hf.energy(E2, np.array([np.nan, 0.0]), 1.0)
        with pytest.raises(ValueError):
            hf.energy(np.array([[np.inf], [0.0]]), np.zeros(2), 1.0)


class TestUpdate:
    def test_single_pattern(self):
        x = np.array([[1.5], [-2.0]])
        assert np.array_equal(hf.update(x, np.array([10.0, 3.0]), 0.7), x[:, 0])

    def test_beta_zero_is_mean(self):
        assert np.allclose(hf.update(E2, np.array([5.0, -1.0]), 0.0), [0.5, 0.5])

    def test_softmax_arithmetic(self):
        out = hf.update(E2, np.array([1.0, 0.0]), 4.0)
        w = math.exp(4) / (math.exp(4) + 1)
        assert np.allclose(out, [w, 1 - w], atol=1e-12)
        assert out == pytest.approx([0.98201, 0.01799], abs=1e-5)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            hf.update(E2, np.zeros(1), 1.0)

    def test_tiny_beta_is_mean(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(5, 7))
        assert np.allclose(hf.update(X, rng.normal(size=5), 1e-12), X.mean(axis=1), atol=1e-9)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(1, 16), st.integers(1, 16), st.floats(0.01, 10), st.integers(0, 2**31))
    def test_convex_weights_and_energy_descent(self, d, n, beta, seed):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(d, n)) * rng.uniform(0.1, 3)
        xi = rng.normal(size=d) * rng.uniform(0.1, 3)
        w = hf.update_weights(X, xi, beta)
        assert (w >= 0).all() and abs(w.sum() - 1) < 1e-12
        assert hf.energy(X, hf.update(X, xi, beta), beta) <= hf.energy(X, xi, beta) + 1e-9


class TestFixedPoint:
    def test_single_pattern_one_iteration(self):
        x = np.array([[2.0], [1.0]])
        res = hf.iterate_to_fixed_point(x, np.array([-4.0, 9.0]), 1.0)
        assert res.converged and res.iterations == 1
        assert np.array_equal(res.fixed_point, x[:, 0])

    def test_orthogonal_norm_three(self):
        X = 3.0 * np.eye(4)
        for i in range(4):
            res = hf.iterate_to_fixed_point(X, X[:, i].copy(), 1.0, tol=1e-10)
            assert res.converged
            # oracle: plain iteration run far past convergence
            xi = X[:, i].copy()
            for _ in range(500):
                xi = X @ hf.softmax(X.T @ xi)
            assert np.linalg.norm(res.fixed_point - xi) < 1e-9
            assert np.linalg.norm(res.fixed_point - X[:, i]) < 1e-2

    def test_identical_patterns(self):
        x = np.array([1.0, -2.0, 0.5])
        X = np.column_stack([x, x])
        res = hf.iterate_to_fixed_point(X, x, 3.0)
        assert np.allclose(res.fixed_point, x, atol=1e-15)

    def test_energy_non_increasing_and_certified(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(6, 10))
        res = hf.iterate_to_fixed_point(X, rng.normal(size=6), 0.5, tol=1e-8)
        assert all(b <= a + 1e-12 for a, b in zip(res.energies, res.energies[1:]))
        assert res.converged
        assert np.linalg.norm(hf.update(X, res.fixed_point, 0.5) - res.fixed_point) <= 1e-8

    def test_bad_tol(self):
        with pytest.raises(ValueError):
            hf.iterate_to_fixed_point(E2, np.zeros(2), 1.0, tol=0)


class TestSeparation:
    def test_orthogonal(self):
        assert hf.separation(E2, 0) == 1.0

    def test_identical(self):
        X = np.column_stack([[1.0, 2.0], [1.0, 2.0]])
        assert hf.separation(X, 0) == 0.0

    def test_brute_force(self):
        rng = np.random.default_rng(4)
        for _ in range(40):
            n = int(rng.integers(2, 21))
            X = rng.normal(size=(3, n))
            for i in range(n):
                oracle = min(X[:, i] @ X[:, i] - X[:, i] @ X[:, j] for j in range(n) if j != i)
                assert hf.separation(X, i) == pytest.approx(oracle, abs=1e-12)

    def test_needs_two(self):
        with pytest.raises(ValueError):
            hf.separation(np.ones((2, 1)), 0)

    def test_well_separated_examples(self):
        assert not hf.is_well_separated(E2, 0, 1.0)
        assert hf.is_well_separated(3 * E2, 0, 1.0)
        assert hf.well_separation_threshold(E2, 1.0) == pytest.approx(1 + math.log(4))
        assert hf.well_separation_threshold(3 * E2, 1.0) == pytest.approx(1 + math.log(36))
        same = np.column_stack([[3.0, 0.0], [3.0, 0.0]])
        assert not hf.is_well_separated(same, 0, 1.0)


class TestCapacity:
    def test_first_example(self):
        cb = hf.capacity_bound(1.0, 3.0, 20, 0.001)
        assert cb.c == pytest.approx(3.1546, abs=5e-4)
        assert cb.n_bound == pytest.approx(7.41, abs=5e-3)
        assert cb.exponent > 1.27

    def test_second_example(self):
        cb = hf.capacity_bound(1.0, 1.0, 75, 0.001)
        assert cb.c == pytest.approx(1.3718, abs=5e-4)
        assert cb.exponent < -0.94

    def test_n_bound_from_independent_w(self):
        # rebuild c with a scipy-free bisection Lambert W
        from tests.test_lambertw import bisection_w0

        beta, K, d, p = 1.0, 3.0, 20, 0.001
        a = 2 / (d - 1) * (1 + math.log(2 * beta * K**2 * p * (d - 1)))
        b = 2 * K**2 * beta / 5
        c = b / bisection_w0(math.exp(a + math.log(b)))
        assert hf.capacity_bound(beta, K, d, p).n_bound == pytest.approx(math.sqrt(p) * c ** ((d - 1) / 4), rel=1e-10)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0.1, 5), st.floats(0.2, 5), st.integers(2, 200), st.floats(1e-6, 1.0))
    def test_identities(self, beta, K, d, p):
        cb = hf.capacity_bound(beta, K, d, p)
        assert cb.b == 2 * K**2 * beta / 5
        assert cb.c * lambert_w0(math.exp(cb.a + math.log(cb.b))) == pytest.approx(cb.b, abs=1e-10 * max(1, cb.b))
        assert cb.feasible == (cb.c >= (2 / math.sqrt(p)) ** (4 / (d - 1)))

    @pytest.mark.parametrize("args", [(0.0, 1.0, 5, 0.1), (1.0, -1.0, 5, 0.1), (1.0, 1.0, 1, 0.1), (1.0, 1.0, 5, 0.0)])
    def test_domain_errors(self, args):
        with pytest.raises(ValueError):
            hf.capacity_bound(*args)


class TestEmpiricalCapacity:
    def test_single_pattern(self):
        assert hf.empirical_capacity_experiment(8, 1, 2.0, 1.0, 0.1, 50, seed=0) == 1.0

    def test_high_separation(self):
        assert hf.empirical_capacity_experiment(32, 100, 4.0, 1.0, 0.1, 1000, seed=0) >= 0.99

    def test_overcrowded(self):
        assert hf.empirical_capacity_experiment(2, 1000, 1.0, 1.0, 0.1, 100, seed=0) <= 0.05

    def test_thread_independent(self):
        a = hf.capacity_trials(8, 20, 2.0, 1.0, 0.1, 40, seed=5, threads=1)
        b = hf.capacity_trials(8, 20, 2.0, 1.0, 0.1, 40, seed=5, threads=4)
        assert a == b

    def test_sphere_radius(self):
        X = hf.sample_sphere(np.random.default_rng(0), 5, 30, 2.5)
        assert np.allclose(np.linalg.norm(X, axis=0), 2.5)


class TestAttention:
    def test_single_key(self):
        out = hf.attention(np.random.default_rng(0).normal(size=(3, 2)), [[1.0, 1.0]], [[4.0, 5.0]], 2.0)
        assert np.allclose(out, [[4.0, 5.0]] * 3)

    def test_beta_zero(self):
        V = np.arange(6.0).reshape(3, 2)
        out = hf.attention(np.ones((2, 2)), np.random.default_rng(1).normal(size=(3, 2)), V, 0.0)
        assert np.allclose(out, np.tile(V.mean(axis=0), (2, 1)))

    def test_arithmetic(self):
        out = hf.attention([[1.0, 0.0]], E2, [[1.0], [0.0]], 4.0)
        assert out[0, 0] == pytest.approx(0.98201, abs=1e-5)

    def test_equals_update(self):
        rng = np.random.default_rng(2)
        X, xi = rng.normal(size=(4, 9)), rng.normal(size=4)
        assert np.allclose(hf.attention(xi[None], X.T, X.T, 0.8)[0], hf.update(X, xi, 0.8), atol=1e-14)

    def test_mismatch(self):
        with pytest.raises(ValueError):
            hf.attention(np.ones((1, 3)), np.ones((2, 2)), np.ones((2, 1)), 1.0)
        with pytest.raises(ValueError):
            hf.attention(np.ones((1, 2)), np.ones((2, 2)), np.ones((3, 1)), 1.0)
