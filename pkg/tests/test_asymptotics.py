import itertools
import math

import mpmath as mp
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize, stats

from seqchi2.asymptotics import (
    COND_LAMBDA,
    COND_PRODUCT,
    COND_WINDOW,
    LevelSpec,
    RegimeError,
    alpha_asym,
    alpha_bracket,
    alpha_equal_levels,
    alpha_from_levels,
    chi2_tail_asym,
    chi2_tail_exact,
    epsilon_feasible,
    epsilon_pick,
    invert_chi2_tail,
    lemma2_log_exp_sqrt,
    product_lower_bound,
    validity_check,
)
from seqchi2.model import TestDesign
from seqchi2.quadrature import CriticalPair, alpha_quad
from seqchi2.special_fn import DomainError


def pair(x1, rho):
    return CriticalPair(x1, rho * rho * x1)


class TestValidity:
    def test_four_categories_need_nothing(self):
        assert product_lower_bound(TestDesign(4, 0.3)) == 0.0

    def test_three_categories_threshold(self):
        d = TestDesign(3, 0.5)
        assert product_lower_bound(d) == pytest.approx(1.265625)
        # lambda > 1 needs x1* > 1.5 here, so pick x2* to straddle the product bound
        assert not validity_check(CriticalPair(2.0, 0.63), d).checks[COND_PRODUCT]
        assert validity_check(CriticalPair(2.0, 0.64), d).checks[COND_PRODUCT]

    def test_window_edge_fails(self):
        diag = validity_check(pair(50, 0.6), TestDesign(5, 0.6))
        assert not diag.ok and diag.failed == [COND_WINDOW]

    def test_small_lambda_fails(self):
        diag = validity_check(CriticalPair(1.0, 1.0), TestDesign(5, 0.6))
        assert COND_LAMBDA in diag.failed

    def test_zero_x1(self):
        assert not validity_check(CriticalPair(0, 5), TestDesign(5, 0.6)).ok

    def test_raise(self):
        with pytest.raises(DomainError, match="rho window"):
            validity_check(pair(50, 2.0), TestDesign(5, 0.6)).raise_if_failed()


class TestEpsilon:
    GRID = list(itertools.product([3, 5], [0.3, 0.5, 0.7], [0.9, 1.0, 1.4], [5, 40, 500]))

    @pytest.mark.parametrize("n,c,rho,x1", GRID)
    def test_feasible(self, n, c, rho, x1):
        d = TestDesign(n, c)
        lv = pair(x1, rho)
        if not validity_check(lv, d).ok:
            pytest.skip("outside validity")
        eps = epsilon_pick(lv, d)
        assert epsilon_feasible(eps, lv, d)
        assert eps < rho - c  # keeps the theta3 bound below 1

    def test_regression_value(self):
        eps = epsilon_pick(CriticalPair(60, 60), TestDesign(5, 0.6))
        assert eps == pytest.approx(0.24623900699459678, rel=1e-12)

    def test_shrinks_like_log_over_lambda(self):
        d = TestDesign(5, 0.6)
        for x1 in (1e3, 1e4, 1e5):
            lam = x1 / (2 * d.beta)
            assert epsilon_pick(CriticalPair(x1, x1), d) == pytest.approx(3 * math.log(lam) / lam)

    def test_refine_narrows(self):
        d, lv = TestDesign(5, 0.7), pair(60, 1.1)
        base = alpha_bracket(lv, d)
        refined = alpha_bracket(lv, d, epsilon_pick(lv, d, refine=True))
        assert refined.log_hi - refined.log_lo <= base.log_hi - base.log_lo

    def test_infeasible_eps_rejected(self):
        d, lv = TestDesign(5, 0.6), CriticalPair(60, 60)
        with pytest.raises(DomainError):
            alpha_bracket(lv, d, eps=0.7)


class TestBracket:
    def test_theta7_exact(self):
        d, lv = TestDesign(5, 0.6), CriticalPair(60, 60)
        res = alpha_bracket(lv, d)
        eps, lam = res.ledger.epsilon, lv.lam(d)
        assert res.ledger.theta_bounds["theta7"] == (math.exp(-lam * eps * (2 * (1 - 0.6) + eps)),) * 2

    def test_ledger_invariants(self):
        for n, c, rho in itertools.product([3, 4, 5, 9], [0.3, 0.6, 0.8], [0.9, 1.0, 1.15]):
            d, lv = TestDesign(n, c), pair(70, rho)
            if not validity_check(lv, d).ok:
                continue
            led = alpha_bracket(lv, d).ledger
            assert all(lo >= 0 and hi >= lo for lo, hi in led.theta_bounds.values())
            assert led.theta_bounds["theta3"][1] < 1 and led.theta_bounds["theta6"][1] < 1
            assert led.i6_bound > 0 and led.i4_tilde_bound >= 0 and led.theta1_bound >= 0

    @pytest.mark.parametrize("n,c,rho", [(4, 0.5, 1.0), (6, 0.6, 1.2), (3, 0.8, 0.95)])
    @pytest.mark.parametrize("x1", [30, 90])
    def test_contains_quadrature(self, n, c, rho, x1):
        d, lv = TestDesign(n, c), pair(x1, rho)
        res = alpha_bracket(lv, d)
        assert res.contains_log(alpha_quad(lv, d).log_alpha)

    def test_width_shrinks_with_lambda(self):
        d = TestDesign(5, 0.6)
        widths = [alpha_bracket(CriticalPair(x, x), d).rel_halfwidth for x in (40, 200, 1000, 5000, 20000)]
        assert all(a > b for a, b in zip(widths, widths[1:]))
        assert widths[-1] < 0.1

    def test_contains_asymptotic_deep(self):
        d = TestDesign(5, 0.6)
        for x1 in (200.0, 2000.0):
            res = alpha_bracket(CriticalPair(x1, x1), d)
            assert res.contains_log(alpha_asym(x1, 1.0, d))


class TestAsym:
    def test_regime_error(self):
        d = TestDesign(5, 0.6)
        with pytest.raises(RegimeError):
            alpha_asym(50, 0.6, d)
        with pytest.raises(RegimeError):
            alpha_asym(50, 1 / 0.6, d)

    def test_log_slope(self):
        d, rho = TestDesign(7, 0.4), 1.3
        a, b = 100.0, 130.0
        slope = -(rho**2 - 2 * 0.4 * rho + 1) / (2 * d.beta)
        diff = alpha_asym(b, rho, d) - alpha_asym(a, rho, d)
        assert diff == pytest.approx(slope * (b - a) + (7 / 2 - 2) * math.log(b / a), rel=1e-12)

    def test_exponent_symmetry(self):
        c, x1, x2 = 0.55, 80.0, 100.0
        rho = math.sqrt(x2 / x1)
        assert x1 * (rho**2 - 2 * c * rho + 1) == pytest.approx(x2 * (rho**-2 - 2 * c / rho + 1), rel=1e-14)

    def test_converges_to_quadrature(self):
        d = TestDesign(5, 0.6)
        errs = [abs(math.expm1(alpha_asym(x, 1.0, d) - alpha_quad(CriticalPair(x, x), d).log_alpha))
                for x in (40, 80, 160)]
        assert errs[0] > errs[1] > errs[2]


class TestChi2Tails:
    def test_closed_form_k2(self):
        assert chi2_tail_exact(2 * math.log(20), 2) == pytest.approx(0.05, rel=1e-15)
        for x in (0.1, 3.0, 80.0):
            assert chi2_tail_asym(x, 2) == chi2_tail_exact(x, 2)

    @pytest.mark.parametrize("k", [1, 3, 7])
    def test_zero(self, k):
        assert chi2_tail_exact(0.0, k) == 1.0

    @pytest.mark.parametrize("k", [1, 2, 3, 6, 11])
    @pytest.mark.parametrize("x", [0.3, 4.0, 40.0, 300.0])
    def test_matches_scipy(self, k, x):
        assert chi2_tail_exact(x, k) == pytest.approx(stats.chi2.sf(x, k), rel=1e-12)

    def test_leading_term_convergence(self):
        r10 = chi2_tail_asym(10, 4) / chi2_tail_exact(10, 4)
        r20 = chi2_tail_asym(20, 4) / chi2_tail_exact(20, 4)
        assert abs(r20 - 1) < abs(r10 - 1)
        assert abs(chi2_tail_asym(50, 3) / chi2_tail_exact(50, 3) - 1) < 0.05

    def test_raw_flag(self):
        assert chi2_tail_asym(30, 5, raw=True) == pytest.approx(chi2_tail_asym(30, 5) * math.gamma(2.5))

    def test_invert_closed_form(self):
        assert invert_chi2_tail(0.05, 2) == pytest.approx(5.991464547107979, rel=1e-14)

    @settings(max_examples=60, deadline=None)
    @given(k=st.integers(1, 30), log_alpha=st.floats(-600, -1e-6))
    def test_invert_round_trip(self, k, log_alpha):
        alpha = math.exp(log_alpha)
        x = invert_chi2_tail(alpha, k)
        assert chi2_tail_exact(x, k) == pytest.approx(alpha, rel=1e-10)

    def test_invert_extremes(self):
        near_one = invert_chi2_tail(1 - 2**-52, 3)
        assert 0 <= near_one < 1e-8
        xs = [invert_chi2_tail(10.0**-e, 5) for e in (5, 50, 250)]
        assert xs[0] < xs[1] < xs[2]
        assert chi2_tail_exact(invert_chi2_tail(0.05, 3), 3) == pytest.approx(0.05, rel=1e-10)


class TestLogExpSqrt:
    def test_no_power(self):
        a1, a2 = 1e-4, 1e-9
        assert lemma2_log_exp_sqrt(a1, a2, 0) == pytest.approx(math.sqrt(math.log(a1) * math.log(a2)), rel=1e-15)
        assert lemma2_log_exp_sqrt(1e-6, 1e-6, 0) == pytest.approx(-math.log(1e-6), rel=1e-15)

    @pytest.mark.parametrize("n", [0.0, 0.5, 1.0, 2.0])
    def test_against_fixed_point(self, n):
        # n = (N - 3)/2 for N = 3, 4, 5, 7
        alpha = 1e-6

        def solve(a):
            return optimize.brentq(lambda t: t - n * math.log(t) + math.log(a), max(n, 1.0), 1e4)

        t = solve(alpha)
        assert lemma2_log_exp_sqrt(alpha, alpha, n) == pytest.approx(t, rel=0.01)

    def test_domain(self):
        with pytest.raises(DomainError):
            lemma2_log_exp_sqrt(1.0, 0.1, 1)


class TestLevels:
    def test_level_relation(self):
        s = LevelSpec(1e-3, 1.2)
        assert s.alpha2 == pytest.approx(1e-3 ** 1.44, rel=1e-13)
        back = LevelSpec.from_alphas(s.alpha1, s.alpha2)
        assert back.p_ratio == pytest.approx(1.2, rel=1e-13)

    @pytest.mark.parametrize("c", [0.2, 0.6, 0.9])
    @pytest.mark.parametrize("n", [3, 5, 12])
    def test_p_one_matches_equal_levels(self, n, c):
        d = TestDesign(n, c)
        for a in (1e-3, 1e-40, 1e-250):
            assert alpha_from_levels(LevelSpec(a, 1.0), d) == pytest.approx(alpha_equal_levels(a, d), rel=1e-12)

    def test_against_high_precision(self):
        n, c, p, a1 = 5, 0.6, 1.1, 1e-2
        mp.mp.dps = 50
        L = -mp.log(a1)
        g = mp.gamma(mp.mpf(n - 1) / 2)
        q = (mp.mpf(p) ** (2 * (n - 3) * (1 - c / p)) / g ** (4 * (1 - p * c))
             * L ** ((n - 3) * (2 - c * (p + 1 / p))) * mp.mpf(a1) ** (-2 * (p * p - 2 * p * c + 1)))
        val = ((1 - mp.mpf(c) ** 2) ** 1.5 * mp.mpf(p) ** (n / 2 - 1) * L ** (n / 2 - 2)
               * q ** (-1 / (2 * (1 - mp.mpf(c) ** 2)))
               / (2 * mp.mpf(c) ** (n / 2 - 1) * mp.sqrt(mp.pi) * g * (p - c) * (1 - c * p)))
        assert alpha_from_levels(LevelSpec(a1, p), TestDesign(n, c)) == pytest.approx(float(mp.log(val)), abs=1e-10)

    def test_window(self):
        with pytest.raises(RegimeError):
            alpha_from_levels(LevelSpec(1e-5, 2.0), TestDesign(5, 0.6))

    def test_alpha1_exponent(self):
        d1 = TestDesign(5, 0.3)
        slope = alpha_equal_levels(1e-21, d1) - alpha_equal_levels(1e-20, d1)
        log_l = math.log(math.log(1e21) / math.log(1e20))
        power = 5 / 2 - 2 / 1.3 - 2
        assert slope == pytest.approx(2 / 1.3 * math.log(0.1) + power * log_l, rel=1e-10)

    @pytest.mark.parametrize("c", [0.1 * k for k in range(1, 10)])
    def test_exponent_in_unit_to_two(self, c):
        assert 1 < 2 / (1 + c) < 2

    def test_trend_toward_quadrature(self):
        d = TestDesign(5, 0.6)
        ratios = []
        for a in (1e-3, 1e-5, 1e-7):
            x = invert_chi2_tail(a, 4)
            ratios.append(abs(alpha_equal_levels(a, d) - alpha_quad(CriticalPair(x, x), d).log_alpha))
        assert ratios[0] > ratios[1] > ratios[2]
