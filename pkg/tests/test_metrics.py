import numpy as np
import pytest

from rephop.metrics import classification_metrics, mann_whitney_u, roc_auc


def brute_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return total / (len(pos) * len(neg))


def brute_u(a, b):
    return sum(1.0 if x > y else 0.5 if x == y else 0.0 for x in a for y in b)


class TestRocAuc:
    def test_examples(self):
        assert roc_auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
        assert roc_auc([0.3] * 6, [0, 1, 0, 1, 0, 1]) == 0.5
        assert roc_auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75

    def test_brute_force_exact(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            n = int(rng.integers(2, 51))
            labels = rng.integers(0, 2, n)
            labels[:2] = [0, 1]
            # coarse grid forces ties
            scores = rng.integers(0, 8, n) / 4.0
            assert roc_auc(scores, labels) == brute_auc(scores, labels)

    def test_monotone_invariance(self):
        rng = np.random.default_rng(1)
        scores = rng.standard_normal(30)
        labels = np.arange(30) % 2
        assert roc_auc(scores, labels) == roc_auc(np.exp(3 * scores) + 1, labels)

    def test_single_class(self):
        with pytest.raises(ValueError):
            roc_auc([0.1, 0.2], [1, 1])
        with pytest.raises(ValueError):
            roc_auc([0.1, 0.2], [0, 2])


class TestClassificationMetrics:
    def test_perfect(self):
        assert classification_metrics([0.9, 0.1, 0.8], [1, 0, 1]) == (1.0, 1.0, 1.0)

    def test_all_negative_predictions(self):
        f1, bacc, acc = classification_metrics([0.1, 0.2, 0.3], [1, 0, 1])
        assert f1 == 0.0 and bacc == 0.5 and acc == pytest.approx(1 / 3)

    def test_hand_case(self):
        # TP=2, FP=1, FN=1, TN=6
        labels = [1, 1, 1, 0] + [0] * 6
        scores = [0.9, 0.8, 0.1, 0.7] + [0.2] * 6
        f1, bacc, acc = classification_metrics(scores, labels)
        assert f1 == pytest.approx(2 / 3)
        assert bacc == pytest.approx(0.5 * (2 / 3 + 6 / 7))
        assert acc == pytest.approx(0.8)

    def test_threshold(self):
        assert classification_metrics([-1.0, 1.0], [0, 1], threshold=0.0) == (1.0, 1.0, 1.0)


class TestMannWhitney:
    def test_separated(self):
        u, p = mann_whitney_u([1, 2, 3], [4, 5, 6])
        assert u == 0.0
        assert p < 0.1

    def test_identical_groups(self):
        u, p = mann_whitney_u([1, 2, 3, 4], [1, 2, 3, 4])
        assert u == 8.0 and p == pytest.approx(1.0)

    def test_brute_force_and_identity(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            a = rng.integers(0, 6, int(rng.integers(1, 15)))
            b = rng.integers(0, 6, int(rng.integers(1, 15)))
            ua, _ = mann_whitney_u(a, b)
            ub, _ = mann_whitney_u(b, a)
            assert ua == brute_u(a, b)
            assert ua + ub == len(a) * len(b)

    def test_matches_scipy_asymptotic(self):
        from scipy.stats import mannwhitneyu

        rng = np.random.default_rng(3)
        a, b = rng.integers(0, 10, 40), rng.integers(2, 12, 35)
        u, p = mann_whitney_u(a, b)
        ref = mannwhitneyu(a, b, alternative="two-sided", method="asymptotic", use_continuity=False)
        assert u == ref.statistic
        assert p == pytest.approx(ref.pvalue, rel=1e-10)

    def test_empty(self):
        with pytest.raises(ValueError):
            mann_whitney_u([], [1.0])
