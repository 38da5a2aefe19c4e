import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lobchain.errors import EmptyInput, LeverageOne, RankDeficient
from lobchain.stats import (
    binomial_two_sided,
    binomial_two_sided_randomized,
    ols_hc3,
    percentile,
    seeded_rng,
    wilson_interval,
)


def naive_ols_hc3(x, y):
    """Dense textbook oracle: explicit inverses and elementwise loops."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    n, k = x.shape
    xtx_inv = np.linalg.inv(x.T @ x)
    beta = xtx_inv @ x.T @ y
    hat = x @ xtx_inv @ x.T
    h = np.array([hat[i, i] for i in range(n)])
    e = y - x @ beta
    meat = np.zeros((k, k))
    for i in range(n):
        xi = x[i][:, None]
        meat += (e[i] ** 2 / (1.0 - h[i]) ** 2) * (xi @ xi.T)
    cov = xtx_inv @ meat @ xtx_inv
    return beta, np.sqrt(np.diag(cov))


class TestOlsHc3:
    def test_exact_fit(self):
        x = np.column_stack([np.ones(6), np.arange(6.0)])
        y = 2.0 * np.arange(6.0)
        fit = ols_hc3(x, y)
        np.testing.assert_allclose(fit.coefficients, [0.0, 2.0], atol=1e-12)
        np.testing.assert_allclose(fit.hc3_standard_errors, 0.0, atol=1e-10)
        assert fit.r_squared == pytest.approx(1.0)
        np.testing.assert_allclose(fit.residuals, 0.0, atol=1e-12)

    def test_textbook_five_points(self):
        x = np.column_stack([np.ones(5), [1.0, 2.0, 3.0, 4.0, 5.0]])
        y = np.array([2.1, 3.9, 6.2, 8.0, 9.7])
        fit = ols_hc3(x, y)
        beta, se = naive_ols_hc3(x, y)
        np.testing.assert_allclose(fit.coefficients, beta, atol=1e-10)
        np.testing.assert_allclose(fit.hc3_standard_errors, se, atol=1e-10)

    def test_duplicated_column_rank_deficient(self):
        x = np.column_stack([np.ones(5), np.arange(5.0), np.arange(5.0)])
        with pytest.raises(RankDeficient):
            ols_hc3(x, np.arange(5.0))

    def test_random_designs_match_oracle(self, rng):
        for _ in range(20):
            n = int(rng.integers(10, 101))
            k = int(rng.integers(2, 6))
            x = np.column_stack([np.ones(n), rng.normal(size=(n, k - 1))])
            y = rng.normal(size=n)
            fit = ols_hc3(x, y)
            beta, se = naive_ols_hc3(x, y)
            np.testing.assert_allclose(fit.coefficients, beta, rtol=1e-8)
            np.testing.assert_allclose(fit.hc3_standard_errors, se, rtol=1e-8)

    def test_leverage_one_detected(self):
        # lone indicator column gives its row leverage exactly 1
        x = np.column_stack([np.ones(4), [1.0, 0.0, 0.0, 0.0]])
        with pytest.raises(LeverageOne):
            ols_hc3(x, np.array([1.0, 2.0, 3.0, 4.0]))

    def test_leverage_in_range(self, rng):
        x = np.column_stack([np.ones(30), rng.normal(size=(30, 2))])
        fit = ols_hc3(x, rng.normal(size=30))
        assert np.all(fit.leverage >= 0.0) and np.all(fit.leverage < 1.0)
        assert 0.0 <= fit.r_squared <= 1.0


class TestWilson:
    @pytest.mark.parametrize("k,n,expected", [
        (16, 24, (0.47, 0.82)),
        (15, 25, (0.41, 0.77)),
        (15, 30, (0.33, 0.67)),
        (13, 30, (0.27, 0.61)),
    ])
    def test_reported_intervals(self, k, n, expected):
        lo, hi = wilson_interval(k, n)
        assert (round(lo, 2), round(hi, 2)) == expected

    def test_zero_successes_lower_bound(self):
        for n in (1, 5, 100):
            lo, hi = wilson_interval(0, n)
            assert lo == 0.0
            assert 0.0 < hi < 1.0

    @given(k=st.integers(0, 50), n=st.integers(1, 50))
    def test_nesting_and_containment(self, k, n):
        if k > n:
            k = n
        lo95, hi95 = wilson_interval(k, n, conf=0.95)
        lo99, hi99 = wilson_interval(k, n, conf=0.99)
        assert lo99 <= lo95 and hi95 <= hi99
        assert 0.0 <= lo95 <= k / n <= hi95 <= 1.0


class TestBinomial:
    def test_exact_doubling_small(self):
        # oracle: P(K<=2 | n=10, p=.5) = (1+10+45)/1024, doubled
        expected = 2 * (1 + 10 + 45) / 1024
        assert binomial_two_sided(2, 10, 0.5).pvalue == pytest.approx(expected)

    def test_extreme_tail(self):
        res = binomial_two_sided(10, 10, 0.1)
        assert res.exact
        assert res.pvalue == pytest.approx(2e-10, rel=1e-6)

    def test_null_center_caps_at_one(self):
        assert binomial_two_sided(100, 1000, 0.1).pvalue == 1.0

    def test_monotone_in_deviation(self):
        pvals = [binomial_two_sided(k, 100, 0.1).pvalue for k in range(10, 31, 5)]
        assert all(a >= b for a, b in zip(pvals, pvals[1:]))

    def test_normal_approximation_above_threshold(self):
        res = binomial_two_sided(100_100, 1_000_000, 0.1, exact_max_n=10_000)
        assert not res.exact
        assert 0.0 < res.pvalue <= 1.0

    def test_randomized_uniform_under_null(self, rng):
        pvals = [
            binomial_two_sided_randomized(int(rng.binomial(1000, 0.1)), 1000, 0.1,
                                          float(rng.uniform()))
            for _ in range(2000)
        ]
        from scipy import stats as sps
        assert sps.kstest(pvals, "uniform").pvalue > 0.01


class TestPercentile:
    def test_median_of_hundred(self):
        assert percentile(np.arange(1, 101), 0.50) == 50

    def test_singleton(self):
        assert percentile([7.0], 0.1) == 7.0
        assert percentile([7.0], 0.99) == 7.0

    def test_upper_rank(self):
        assert percentile([10.0, 20.0, 30.0], 0.99) == 30.0

    def test_empty_raises(self):
        with pytest.raises(EmptyInput):
            percentile([], 0.5)

    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=50),
           st.floats(0.0, 1.0))
    @settings(max_examples=50)
    def test_returns_member(self, values, q):
        assert percentile(values, q) in values


def test_seeded_rng_deterministic():
    a = seeded_rng(42, 7).normal(size=5)
    b = seeded_rng(42, 7).normal(size=5)
    c = seeded_rng(42, 8).normal(size=5)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
