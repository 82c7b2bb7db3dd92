"""Self-contained statistics: Pearson r with a Student-t p-value, the exact
Wilcoxon signed-rank test, and Wilson score intervals.

The t CDF runs through a regularized incomplete beta evaluated with Lentz's
continued fraction, so no external stats package is involved.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DegenerateInput, InputTooShort, ShapeMismatch

Z_95 = 1.959963984540054   # two-sided 95% normal quantile

# -- regularized incomplete beta ----------------------------------------------

_MAX_ITER = 300
_TINY = 1e-300


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-15:
            return h
    return h


def betainc_reg(a: float, b: float, x: float) -> float:
    """I_x(a, b), the regularized incomplete beta function."""
    if a <= 0 or b <= 0:
        raise ValueError("beta parameters must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must lie in [0, 1], got {x}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    ln_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(ln_front)
    # direct evaluation converges fast only below the distribution's bulk
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_sf(t: float, df: float) -> float:
    """P(T > t) for Student's t with df degrees of freedom."""
    if df <= 0:
        raise ValueError("df must be positive")
    if math.isinf(t):
        return 0.0 if t > 0 else 1.0
    x = df / (df + t * t)
    tail = 0.5 * betainc_reg(df / 2.0, 0.5, x)
    return tail if t >= 0 else 1.0 - tail


# -- Pearson -----------------------------------------------------------------


def pearson(x, y) -> tuple[float, float]:
    """Product-moment correlation and its two-sided p-value.

    p comes from t = r*sqrt((n-2)/(1-r^2)) against Student-t with n-2 dof.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 1 or y.ndim != 1 or x.shape != y.shape:
        raise ShapeMismatch(f"need equal-length 1-D inputs, got {x.shape} "
                            f"and {y.shape}")
    n = x.size
    if n < 3:
        raise InputTooShort(f"need at least 3 points, got {n}")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise DegenerateInput("inputs must be finite")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = float(np.sqrt((dx * dx).sum()))
    sy = float(np.sqrt((dy * dy).sum()))
    if sx == 0.0 or sy == 0.0:
        raise DegenerateInput("zero variance input")
    r = float((dx * dy).sum() / (sx * sy))
    r = max(-1.0, min(1.0, r))
    if 1.0 - abs(r) < 1e-15:   # exact linear relation up to rounding
        return math.copysign(1.0, r), 0.0
    df = n - 2
    if 1.0 - r * r <= 0.0:
        return r, 0.0
    t = abs(r) * math.sqrt(df / (1.0 - r * r))
    p = min(1.0, 2.0 * student_t_sf(t, df))
    return r, p


# -- Wilcoxon signed-rank ----------------------------------------------------

EXACT_WILCOXON_MAX_N = 25


def _signed_ranks(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 1 or a.shape != b.shape:
        raise ShapeMismatch(f"need equal-length 1-D inputs, got {a.shape} "
                            f"and {b.shape}")
    d = b - a
    d = d[d != 0.0]
    if d.size == 0:
        raise DegenerateInput("all differences are zero")
    mags = np.abs(d)
    order = np.argsort(mags, kind="stable")
    ranks = np.empty(d.size)
    sorted_mags = mags[order]
    i = 0
    while i < d.size:
        j = i
        while j + 1 < d.size and sorted_mags[j + 1] == sorted_mags[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0   # average rank for ties
        i = j + 1
    return d, ranks


def _exact_wilcoxon_cdf(doubled_ranks, w_doubled: int) -> float:
    """P(W+ <= w) by dynamic programming over all 2^n sign assignments.

    Ranks are doubled so tied average ranks (multiples of 1/2) become ints.
    """
    total = int(sum(doubled_ranks))
    counts = np.zeros(total + 1, dtype=float)
    counts[0] = 1.0
    for dr in doubled_ranks:
        counts[dr:] += counts[:total + 1 - dr].copy()
    counts /= 2.0 ** len(doubled_ranks)
    w = min(max(w_doubled, 0), total)
    return float(counts[:w + 1].sum())


def wilcoxon_signed_rank(a, b) -> tuple[float, float]:
    """Two-sided Wilcoxon signed-rank test; returns (W, p).

    W = min(W+, W-). Zero differences are dropped, ties share average ranks.
    Exact enumeration (DP) up to n = 25, then a tie- and continuity-corrected
    normal approximation.
    """
    d, ranks = _signed_ranks(a, b)
    n = d.size
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    w = min(w_plus, w_minus)
    if n <= EXACT_WILCOXON_MAX_N:
        doubled = [int(round(2 * r)) for r in ranks]
        p = min(1.0, 2.0 * _exact_wilcoxon_cdf(doubled, int(round(2 * w))))
        return w, p
    mu = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0
    _, tie_counts = np.unique(ranks, return_counts=True)
    var -= float(((tie_counts ** 3 - tie_counts) / 48.0).sum())
    if var <= 0.0:
        raise DegenerateInput("zero variance rank distribution")
    z = (w - mu + 0.5) / math.sqrt(var)   # w <= mu, correct toward the mean
    p = min(1.0, math.erfc(-z / math.sqrt(2.0)))
    return w, p


# -- Wilson interval ---------------------------------------------------------


def wilson_ci(successes: int, n: int, z: float = Z_95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not 0 <= successes <= n:
        raise ValueError(f"successes must lie in [0, {n}], got {successes}")
    phat = successes / n
    denom = 1.0 + z * z / n
    center = (phat + z * z / (2 * n)) / denom
    half = z * math.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n)) / denom
    # the endpoints are exactly 0/1 at degenerate counts; don't let rounding
    # push them inside the point estimate
    lo = 0.0 if successes == 0 else max(0.0, center - half)
    hi = 1.0 if successes == n else min(1.0, center + half)
    return lo, hi
