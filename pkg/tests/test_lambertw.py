import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import lambertw as scipy_lambertw

from rephop.lambertw import lambert_w0


def bisection_w0(x, lo=-1.0, hi=None, iters=200):
    """Independent oracle: bisection on w e^w - x over the upper branch."""
    hi = max(1.0, math.log(x)) if hi is None and x > 0 else (0.0 if hi is None else hi)
    f = lambda w: w * math.exp(w) - x  # noqa: E731
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


class TestExamples:
    def test_zero(self):
        assert lambert_w0(0.0) == 0.0

    def test_e(self):
        assert lambert_w0(math.e) == pytest.approx(1.0, abs=1e-12)

    def test_against_bisection(self):
        w = lambert_w0(3.5727)
        assert w == pytest.approx(1.1413, abs=1e-4)
        assert w == pytest.approx(bisection_w0(3.5727), abs=1e-11)

    def test_branch_point(self):
        assert lambert_w0(-1.0 / math.e) == pytest.approx(-1.0, abs=1e-6)

    def test_below_branch_point_raises(self):
        with pytest.raises(ValueError):
            lambert_w0(-1.0 / math.e - 1e-6)


class TestProperties:
    @settings(max_examples=300, deadline=None)
    @given(st.floats(min_value=-1 / math.e + 1e-9, max_value=1e6))
    def test_residual(self, x):
        w = lambert_w0(x)
        assert w >= -1.0
        assert abs(w * math.exp(w) - x) <= 1e-12 * max(1.0, abs(x))

    @settings(max_examples=200, deadline=None)
    @given(st.floats(min_value=-0.36, max_value=1e4))
    def test_matches_scipy(self, x):
        assert lambert_w0(x) == pytest.approx(float(scipy_lambertw(x, 0).real), rel=1e-10, abs=1e-12)

    def test_monotone(self):
        xs = np.linspace(-1 / math.e + 1e-6, 50, 500)
        ws = [lambert_w0(x) for x in xs]
        assert all(b > a for a, b in zip(ws, ws[1:]))
