"""Tests for trend_stats.py: Kendall tau-b with exact/normal p-values, LOESS"""

import itertools
import math
from functools import lru_cache

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import kendalltau

from errors import InsufficientDataError, ParameterError
from trend_stats import kendall_tau, loess_smooth


def s_statistic(values):
    return sum(
        (values[j] > values[i]) - (values[j] < values[i])
        for i in range(len(values)) for j in range(i + 1, len(values))
    )


@lru_cache(maxsize=None)
def brute_force_null(multiset):
    """|S| for every one of the n! orderings, duplicates included"""
    rows = np.array(list(itertools.permutations(multiset)), dtype=float)
    i, j = np.triu_indices(len(multiset), 1)
    return np.abs(np.sign(rows[:, j] - rows[:, i]).sum(axis=1))


def brute_force_p(series):
    null = brute_force_null(tuple(sorted(series)))
    return np.count_nonzero(null >= abs(s_statistic(series))) / len(null)


def direct_loess(x, y, span):
    """Weighted least squares through the normal equations, one point at a time"""
    n = len(x)
    q = min(n, math.ceil(span * n))
    fitted = []
    for xi in x:
        order = sorted(range(n), key=lambda k: (abs(x[k] - xi), k))[:q]
        d = np.array([abs(x[k] - xi) for k in order])
        w = (1 - (d / d.max()) ** 3) ** 3
        X = np.column_stack([np.ones(q), np.array([x[k] for k in order]) - xi])
        W = np.diag(w)
        beta = np.linalg.solve(X.T @ W @ X, X.T @ W @ np.array([y[k] for k in order]))
        fitted.append(beta[0])
    return fitted


class TestKendallTauExact:
    @pytest.mark.parametrize("n", [4, 5, 6, 7])
    def test_every_series_over_three_values(self, n):
        for series in itertools.product((0, 1, 2), repeat=n):
            tau, p = kendall_tau(series)
            if len(set(series)) == 1:
                assert (tau, p) == (0.0, 1.0)
                continue
            assert tau == pytest.approx(kendalltau(np.arange(n), series).statistic, abs=1e-9)
            assert p == pytest.approx(brute_force_p(series), abs=1e-9)

    def test_strictly_increasing_four(self):
        tau, p = kendall_tau([1, 2, 3, 4])
        assert tau == 1.0
        assert p == pytest.approx(2 / 24)

    def test_eight_points_still_exact(self):
        series = [0, 1, 1, 2, 3, 3, 4, 6]
        assert kendall_tau(series)[1] == pytest.approx(brute_force_p(series), abs=1e-9)


class TestKendallTauNormal:
    def test_monotone_decreasing_ten(self):
        tau, p = kendall_tau(list(range(10, 0, -1)))
        assert tau == -1.0
        z = (45 - 1) / math.sqrt(10 * 9 * 25 / 18)
        assert p == pytest.approx(math.erfc(z / math.sqrt(2)), rel=1e-9)

    def test_ties_reduce_variance(self):
        series = [0, 0, 1, 1, 2, 2, 3, 3, 4, 4]
        tau, p = kendall_tau(series)
        ties = 5 * (2 * 1 * 9)
        var_s = (10 * 9 * 25 - ties) / 18
        s = 45 - 5
        assert tau == pytest.approx(kendalltau(np.arange(10), series).statistic, abs=1e-9)
        assert p == pytest.approx(math.erfc((s - 1) / math.sqrt(var_s) / math.sqrt(2)), rel=1e-9)

    def test_zero_s_gives_p_one(self):
        assert kendall_tau([0, 1, 2, 3, 4, 3, 2, 1, 0]) == (0.0, 1.0)


class TestKendallTauEdgeCases:
    def test_too_short(self):
        with pytest.raises(InsufficientDataError):
            kendall_tau([1, 2])

    def test_not_finite(self):
        with pytest.raises(ParameterError):
            kendall_tau([1.0, float("nan"), 2.0])

    def test_constant(self):
        assert kendall_tau([3] * 12) == (0.0, 1.0)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.integers(min_value=0, max_value=6), min_size=3, max_size=14))
    def test_bounds_and_reversal(self, series):
        tau, p = kendall_tau(series)
        assert -1.0 <= tau <= 1.0
        assert 0.0 <= p <= 1.0
        back_tau, back_p = kendall_tau(series[::-1])
        assert back_tau == pytest.approx(-tau, abs=1e-12)
        assert back_p == pytest.approx(p, abs=1e-12)


class TestLoess:
    @pytest.mark.parametrize("span", [0.3, 0.5, 1.0])
    def test_affine_data_is_reproduced(self, span):
        xs = [0.0, 1.0, 1.5, 3.0, 4.0, 4.5, 6.0, 7.5, 8.0, 10.0]
        smoothed = loess_smooth([(x, 2.5 * x - 1.0) for x in xs], span=span)
        assert [sx for sx, _ in smoothed] == xs
        for x, fit in smoothed:
            assert fit == pytest.approx(2.5 * x - 1.0, abs=1e-9)

    def test_matches_normal_equations(self):
        rng = np.random.default_rng(11)
        x = np.sort(rng.uniform(0, 20, size=20))
        y = np.sin(x / 3) + rng.normal(0, 0.2, size=20)
        smoothed = loess_smooth(list(zip(x.tolist(), y.tolist())), span=0.5)
        expected = direct_loess(x.tolist(), y.tolist(), 0.5)
        for (_, fit), want in zip(smoothed, expected):
            assert fit == pytest.approx(want, abs=1e-6)

    def test_degree_zero_on_constant(self):
        smoothed = loess_smooth([(float(i), 4.0) for i in range(6)], span=0.5, degree=0)
        assert all(fit == pytest.approx(4.0) for _, fit in smoothed)

    def test_two_points_full_span(self):
        smoothed = loess_smooth([(0.0, 1.0), (1.0, 3.0)], span=1.0)
        assert [fit for _, fit in smoothed] == pytest.approx([1.0, 3.0])

    @pytest.mark.parametrize("points, span, degree", [
        ([(0.0, 1.0)], 0.5, 1),
        ([(0.0, 1.0), (1.0, 2.0)], 0.0, 1),
        ([(0.0, 1.0), (1.0, 2.0)], 1.5, 1),
        ([(0.0, 1.0), (1.0, 2.0)], 1.0, 2),
        ([(1.0, 1.0), (0.0, 2.0)], 1.0, 1),
        ([(0.0, 1.0), (1.0, 2.0)], 0.4, 1),
    ])
    def test_bad_parameters(self, points, span, degree):
        with pytest.raises(ParameterError):
            loess_smooth(points, span=span, degree=degree)
