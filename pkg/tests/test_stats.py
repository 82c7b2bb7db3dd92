"""Statistics tests against scipy oracles and brute-force enumeration."""

import itertools
import math

import numpy as np
import pytest
import scipy.special
import scipy.stats
from hypothesis import given, settings
from hypothesis import strategies as st

from dyslat.errors import DegenerateInput, InputTooShort, ShapeMismatch
from dyslat.stats import (
    EXACT_WILCOXON_MAX_N,
    Z_95,
    betainc_reg,
    pearson,
    student_t_sf,
    wilcoxon_signed_rank,
    wilson_ci,
)


class TestBetaInc:
    def test_against_scipy_grid(self):
        for a in (0.5, 1.0, 2.5, 10.0, 40.0):
            for b in (0.5, 1.0, 3.0, 12.0):
                for x in (0.0, 1e-6, 0.1, 0.5, 0.9, 1.0 - 1e-6, 1.0):
                    want = scipy.special.betainc(a, b, x)
                    assert betainc_reg(a, b, x) == pytest.approx(
                        want, abs=1e-12), (a, b, x)

    def test_rejects_bad_domain(self):
        with pytest.raises(ValueError):
            betainc_reg(-1.0, 2.0, 0.5)
        with pytest.raises(ValueError):
            betainc_reg(1.0, 2.0, 1.5)


class TestStudentT:
    def test_against_scipy_grid(self):
        for df in (1, 2, 3, 10, 30, 200):
            for t in (-5.0, -1.3, 0.0, 0.7, 2.31, 8.0):
                want = scipy.stats.t.sf(t, df)
                assert student_t_sf(t, df) == pytest.approx(
                    want, abs=1e-12), (t, df)

    def test_infinite_t(self):
        assert student_t_sf(math.inf, 5) == 0.0
        assert student_t_sf(-math.inf, 5) == 1.0


class TestPearson:
    def test_identity_line(self):
        x = np.array([1.0, 2.0, 3.0, 4.0])
        r, p = pearson(x, x)
        assert r == pytest.approx(1.0)
        assert p == 0.0

    def test_negation(self):
        x = np.array([1.0, 2.0, 3.0, 5.0])
        r, _ = pearson(x, -x)
        assert r == pytest.approx(-1.0)

    def test_known_example(self):
        # r = cov/sd: hand-checkable five-point set
        r, p = pearson([1, 2, 3, 4, 5], [2, 1, 4, 3, 5])
        assert r == pytest.approx(0.8, abs=1e-12)
        assert p == pytest.approx(0.1041, abs=1e-4)

    def test_p_matches_t_cdf_oracle(self):
        # independent oracle: scipy's t distribution, 100 random draws
        rng = np.random.default_rng(42)
        for trial in range(100):
            n = int(rng.integers(3, 40))
            x = rng.standard_normal(n)
            y = rng.standard_normal(n) + 0.5 * x
            r, p = pearson(x, y)
            t = abs(r) * math.sqrt((n - 2) / (1 - r * r))
            want = 2 * scipy.stats.t.sf(t, n - 2)
            assert p == pytest.approx(min(1.0, want), abs=1e-6), trial

    def test_matches_scipy_pearsonr(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            x = rng.standard_normal(12)
            y = rng.standard_normal(12)
            r, p = pearson(x, y)
            want = scipy.stats.pearsonr(x, y)
            assert r == pytest.approx(want.statistic, abs=1e-12)
            assert p == pytest.approx(want.pvalue, abs=1e-9)

    @given(a=st.floats(0.01, 100.0), b=st.floats(-50.0, 50.0),
           seed=st.integers(0, 2**16), n=st.integers(3, 30))
    @settings(max_examples=60, deadline=None)
    def test_affine_invariance(self, a, b, seed, n):
        x = np.random.default_rng(seed).standard_normal(n)
        if np.ptp(x) == 0.0:
            return
        r, _ = pearson(x, a * x + b)
        assert abs(r - 1.0) < 1e-12

    def test_degenerate_and_short(self):
        with pytest.raises(DegenerateInput):
            pearson([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])
        with pytest.raises(DegenerateInput):
            pearson([1.0, 2.0, 3.0], [5.0, 5.0, 5.0])
        with pytest.raises(InputTooShort):
            pearson([1.0, 2.0], [3.0, 4.0])
        with pytest.raises(ShapeMismatch):
            pearson([1.0, 2.0, 3.0], [1.0, 2.0])


def brute_force_wilcoxon(a, b):
    """Literal enumeration of all 2^n sign assignments."""
    d = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
    d = d[d != 0]
    ranks = scipy.stats.rankdata(np.abs(d))
    w_plus = ranks[d > 0].sum()
    w_minus = ranks[d < 0].sum()
    w = min(w_plus, w_minus)
    n = len(d)
    count = 0
    for signs in itertools.product((0, 1), repeat=n):
        if np.dot(signs, ranks) <= w + 1e-9:
            count += 1
    return w, min(1.0, 2.0 * count / 2 ** n)


class TestWilcoxon:
    def test_constant_shift_n6(self):
        a = np.arange(6.0)
        w, p = wilcoxon_signed_rank(a, a + 3.0)
        assert w == 0.0
        assert p == pytest.approx(2 / 64)

    def test_one_sided_floor_n5(self):
        a = np.arange(5.0)
        _, p = wilcoxon_signed_rank(a, a + 1.0)
        assert p == pytest.approx(2 / 32)

    def test_swap_symmetry(self):
        rng = np.random.default_rng(3)
        a = rng.standard_normal(12)
        b = rng.standard_normal(12)
        _, p1 = wilcoxon_signed_rank(a, b)
        _, p2 = wilcoxon_signed_rank(b, a)
        assert p1 == pytest.approx(p2, abs=1e-12)

    def test_exact_matches_enumeration(self):
        # includes ties and zero differences via integer-valued data
        rng = np.random.default_rng(7)
        for trial in range(100):
            n = int(rng.integers(2, 11))
            a = rng.integers(0, 6, size=n).astype(float)
            b = rng.integers(0, 6, size=n).astype(float)
            if np.all(a == b):
                continue
            w_got, p_got = wilcoxon_signed_rank(a, b)
            w_want, p_want = brute_force_wilcoxon(a, b)
            assert w_got == pytest.approx(w_want), trial
            assert p_got == pytest.approx(p_want, abs=1e-12), trial

    def test_exact_vs_normal_at_cutover(self):
        rng = np.random.default_rng(11)
        for trial in range(20):
            a = rng.standard_normal(EXACT_WILCOXON_MAX_N)
            b = a + rng.standard_normal(EXACT_WILCOXON_MAX_N) * 0.8
            d = b - a
            ranks = scipy.stats.rankdata(np.abs(d))
            w = min(ranks[d > 0].sum(), ranks[d < 0].sum())
            _, p_exact = wilcoxon_signed_rank(a, b)
            n = len(d)
            mu = n * (n + 1) / 4
            var = n * (n + 1) * (2 * n + 1) / 24
            z = (w - mu + 0.5) / math.sqrt(var)
            p_norm = min(1.0, 2.0 * scipy.stats.norm.cdf(z))
            assert abs(p_exact - p_norm) < 0.01, trial

    def test_large_n_uses_normal_path(self):
        rng = np.random.default_rng(13)
        a = rng.standard_normal(40)
        b = a + 0.6 + rng.standard_normal(40) * 0.3
        w, p = wilcoxon_signed_rank(a, b)
        want = scipy.stats.wilcoxon(a, b, correction=True,
                                    method="approx")
        assert w == pytest.approx(want.statistic)
        assert p == pytest.approx(want.pvalue, abs=1e-9)

    def test_all_zero_differences(self):
        with pytest.raises(DegenerateInput):
            wilcoxon_signed_rank([1.0, 2.0], [1.0, 2.0])

    def test_length_mismatch(self):
        with pytest.raises(ShapeMismatch):
            wilcoxon_signed_rank([1.0, 2.0], [1.0, 2.0, 3.0])


class TestWilsonCi:
    def test_z_constant(self):
        assert Z_95 == pytest.approx(scipy.stats.norm.ppf(0.975), abs=1e-12)

    def test_matches_statsmodels(self):
        from statsmodels.stats.proportion import proportion_confint
        for successes, n in [(853, 1000), (26, 28), (0, 10), (10, 10), (1, 3)]:
            lo, hi = wilson_ci(successes, n)
            want_lo, want_hi = proportion_confint(successes, n,
                                                  method="wilson")
            assert lo == pytest.approx(want_lo, abs=1e-12)
            assert hi == pytest.approx(want_hi, abs=1e-12)

    def test_extremes_pin_to_unit_interval(self):
        lo, hi = wilson_ci(0, 20)
        assert lo == 0.0
        lo, hi = wilson_ci(20, 20)
        assert hi == pytest.approx(1.0)

    @given(n=st.integers(1, 500), frac=st.floats(0.0, 1.0))
    @settings(max_examples=80, deadline=None)
    def test_contains_point_estimate(self, n, frac):
        successes = int(round(frac * n))
        lo, hi = wilson_ci(successes, n)
        assert lo <= successes / n <= hi

    def test_width_shrinks_with_n(self):
        widths = []
        for n in (10, 100, 1000, 10000):
            successes = int(round(0.853 * n))
            lo, hi = wilson_ci(successes, n)
            widths.append(hi - lo)
        assert widths == sorted(widths, reverse=True)

    def test_rejects_bad_counts(self):
        with pytest.raises(ValueError):
            wilson_ci(5, 0)
        with pytest.raises(ValueError):
            wilson_ci(11, 10)
