"""Principal branch of the Lambert W function for real arguments."""

import math

_BRANCH_POINT = -1.0 / math.e


def lambert_w0(x: float, tol: float = 1e-12, max_iter: int = 100) -> float:
    """Solve ``w * exp(w) = x`` for ``w >= -1`` (x >= -1/e).

    Halley iteration from a branch-aware starting guess; if Halley leaves
    the bracket or stalls, finish by bisection. The absolute residual
    ``|w e^w - x|`` is at most ``tol * max(1, |x|)``.
    """
    x = float(x)
    if math.isnan(x) or x < _BRANCH_POINT - 1e-15:
        raise ValueError(f"lambert_w0 is real only for x >= -1/e, got {x}")
    if x == 0.0:
        return 0.0
    if x <= _BRANCH_POINT:
        return -1.0
    if math.isinf(x):
        return math.inf

    scale = max(1.0, abs(x))
    # bracket [lo, hi] with f(lo) <= 0 <= f(hi), f(w) = w e^w - x increasing on [-1, inf)
    lo = -1.0
    hi = max(1.0, math.log(x)) if x > 0 else 0.0

    if x < -0.25:
        # series about the branch point
        p = math.sqrt(2.0 * (math.e * x + 1.0))
        w = -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p**3
    elif x < 3.0:
        w = math.log1p(x)
    else:
        lx = math.log(x)
        w = lx - math.log(lx)
    w = min(max(w, lo), hi)

    for _ in range(max_iter):
        ew = math.exp(w)
        f = w * ew - x
        if abs(f) <= tol * scale:
            return w
        if f < 0:
            lo = w
        else:
            hi = w
        wp1 = w + 1.0
        if wp1 == 0.0:
            break
        step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1))
        w_new = w - step
        if not (lo < w_new < hi) or w_new == w:
            break
        w = w_new

    for _ in range(400):
        mid = 0.5 * (lo + hi)
        f = mid * math.exp(mid) - x
        if abs(f) <= tol * scale or hi - lo <= 1e-16 * max(1.0, abs(mid)):
            return mid
        if f < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
