import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from episource.limits import bound_curve, expected_gi_size, fit_logistic, p_max, t_max


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


class TestTmax:
    def test_direct_values(self):
        assert t_max(1000, 0.4, 2.5) == pytest.approx(math.log(1000) / 0.6, abs=1e-3)
        assert t_max(1000, 0.4, 2.5) == pytest.approx(11.513, abs=1e-3)
        assert t_max(100, 0.4, 5.0) == pytest.approx(2.878, abs=1e-3)

    def test_no_epidemic_regime(self):
        with pytest.raises(ValueError, match="epidemic"):
            t_max(1000, 0.4, 1.0)

    def test_monotonicities(self):
        r0_grid = np.linspace(1.2, 8.0, 25)
        vals = [t_max(500, 0.4, r) for r in r0_grid]
        assert all(a > b for a, b in zip(vals, vals[1:]))
        gamma_grid = np.linspace(0.05, 0.9, 25)
        vals = [t_max(500, g, 2.5) for g in gamma_grid]
        assert all(a > b for a, b in zip(vals, vals[1:]))
        n_grid = [10, 50, 200, 1000, 5000]
        vals = [t_max(n, 0.4, 2.5) for n in n_grid]
        assert all(a < b for a, b in zip(vals, vals[1:]))


class TestPmax:
    def test_p_zero(self):
        assert p_max(1000, 0.0) == pytest.approx(1.0)

    def test_empty_infected_subgraph(self):
        assert p_max(0, 0.3) == pytest.approx(1.0)

    def test_direct_value(self):
        # k = 10, exponent = 45, 1/3 + (2/3) * 0.9^45
        expect = 1 / 3 + (2 / 3) * 0.9 ** 45
        assert p_max(100, 0.1) == pytest.approx(expect, rel=1e-12)
        assert p_max(100, 0.1) == pytest.approx(0.3392, abs=1e-4)

    def test_sub_one_k_clamps_exponent(self):
        # k < 1 makes k(k-1)/2 negative; clamped to 0 keeps the bound at 1
        assert p_max(5, 0.1) == pytest.approx(1.0)

    def test_floor_is_one_third(self):
        assert p_max(1e9, 0.5) >= 1 / 3

    def test_monotone_in_size_and_p(self):
        sizes = np.linspace(0, 400, 40)
        vals = [p_max(s, 0.1) for s in sizes]
        assert all(a >= b - 1e-15 for a, b in zip(vals, vals[1:]))
        ps = np.linspace(0.01, 0.9, 40)
        vals = [p_max(200, p) for p in ps]
        assert all(a >= b - 1e-15 for a, b in zip(vals, vals[1:]))


class TestExpectedGiSize:
    def test_midpoint_is_half(self):
        n, gamma, r0 = 1000, 0.4, 2.5
        tm = t_max(n, gamma, r0)
        assert expected_gi_size(n, gamma, r0, tm) == pytest.approx(n / 2)

    def test_saturation(self):
        assert expected_gi_size(1000, 0.4, 2.5, 1e6) == pytest.approx(1000.0)

    def test_t_zero_direct_evaluation(self):
        # n * (1 - sigmoid(gamma*(r0-1)*t_max)) with the exponent ln(n):
        # n * sigmoid(-ln n) = n / (n + 1)
        val = expected_gi_size(1000, 0.4, 2.5, 0.0)
        assert val == pytest.approx(1000.0 / 1001.0, rel=1e-9)

    def test_matches_scalar_formula_on_grid(self):
        n, gamma, r0 = 500, 0.3, 3.0
        tm = t_max(n, gamma, r0)
        for t in np.linspace(0, 3 * tm, 17):
            direct = n * (1.0 - sigmoid(gamma * (r0 - 1) * (tm - t)))
            assert expected_gi_size(n, gamma, r0, t) == pytest.approx(direct, rel=1e-12)


class TestBoundCurve:
    def test_composition_identity(self):
        grid = np.linspace(0.0, 25.0, 11)
        curve = bound_curve(100, 0.09, 0.4, 2.5, grid)
        for k, t in enumerate(grid):
            gi = expected_gi_size(100, 0.4, 2.5, t)
            assert curve.expected_gi[k] == pytest.approx(gi, rel=1e-12)
            assert curve.p_max[k] == pytest.approx(p_max(gi, 0.09), rel=1e-12)

    def test_single_point_near_one(self):
        curve = bound_curve(100, 2 * math.log(100) / 100, 0.4, 2.5, np.array([0.0]))
        assert curve.p_max[0] > 0.99

    def test_shape_monotone_and_sharper_for_larger_r0(self):
        grid = np.linspace(0.0, 30.0, 61)
        p = 2 * math.log(100) / 100
        curves = {r0: bound_curve(100, p, 0.4, r0, grid) for r0 in (2.5, 5.0, 10.0)}
        for curve in curves.values():
            assert (np.diff(curve.p_max) <= 1e-12).all()
            assert (curve.p_max >= 1 / 3 - 1e-12).all()
        # larger R0 decays earlier: smaller area under the bound curve
        means = {r0: curves[r0].p_max.mean() for r0 in curves}
        assert means[10.0] < means[5.0] < means[2.5]
        # and pointwise once the R0=2.5 curve has left its plateau
        k = np.argmin(np.abs(grid - t_max(100, 0.4, 2.5)))
        assert curves[10.0].p_max[k] < curves[5.0].p_max[k] < curves[2.5].p_max[k]


class TestLogisticFit:
    def test_exact_recovery(self):
        a_true, t0_true = 0.7, 12.0
        times = np.linspace(-20, 45, 130)  # wide grid covers both tails
        series = sigmoid(a_true * (t0_true - times))
        a, t0, r2 = fit_logistic(times, series)
        assert a == pytest.approx(a_true, abs=1e-6)
        assert t0 == pytest.approx(t0_true, abs=1e-6)
        assert r2 == pytest.approx(1.0, abs=1e-12)

    def test_noisy_recovery(self):
        rng = np.random.default_rng(4)
        times = np.linspace(0, 40, 81)
        series = sigmoid(0.5 * (15.0 - times)) + rng.normal(0, 0.01, times.size)
        _, t0, r2 = fit_logistic(times, series)
        assert r2 > 0.99
        assert t0 == pytest.approx(15.0, abs=1.0)

    def test_degenerate_series(self):
        with pytest.raises(ValueError, match="constant"):
            fit_logistic(np.arange(10), np.ones(10))

    def test_too_short(self):
        with pytest.raises(ValueError, match="at least 5"):
            fit_logistic(np.arange(4), np.arange(4.0))

    @given(a=st.floats(0.2, 3.0), t0=st.floats(5.0, 25.0))
    @settings(max_examples=20, deadline=None)
    def test_recovery_property(self, a, t0):
        # grid width scales with 1/a so both tails are saturated
        times = np.linspace(t0 - 50.0 / a, t0 + 50.0 / a, 120)
        series = sigmoid(a * (t0 - times))
        a_fit, t0_fit, r2 = fit_logistic(times, series)
        assert r2 > 1 - 1e-9
        assert a_fit == pytest.approx(a, rel=1e-4)
        assert t0_fit == pytest.approx(t0, rel=1e-4)
