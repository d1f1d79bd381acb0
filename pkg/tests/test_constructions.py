import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from modadd import constructions as C
from modadd.data import TaskSpec, enumerate_domain
from modadd.metrics import evaluate, margins, population_accuracy
from modadd.model import predict_batch, scores


def exhaustive(theta, m, p):
    D = enumerate_domain(TaskSpec(p, m))
    return D, evaluate(theta, D).accuracy, margins(theta, D)


class TestGridTrig:
    @pytest.mark.parametrize("p", [2, 4, 6, 7, 12])
    def test_exact_zeros_and_symmetry(self, p):
        j = np.arange(-2 * p, 2 * p)
        s, c = C.grid_sin(j, p), C.grid_cos(j, p)
        np.testing.assert_allclose(s, np.sin(2 * np.pi * j / p), atol=1e-14)
        np.testing.assert_allclose(c, np.cos(2 * np.pi * j / p), atol=1e-14)
        np.testing.assert_array_equal(C.grid_sin(-j, p), -s)
        np.testing.assert_array_equal(C.grid_cos(-j, p), c)
        assert np.all(s[j % p == 0] == 0.0)
        if p % 2 == 0:
            assert np.all(s[(2 * j) % p == 0] == 0.0)

    @given(st.floats(-100, 100))
    def test_wrap_range(self, t):
        w = float(C.wrap_angle(t))
        assert -math.pi <= w < math.pi
        assert math.isclose(math.sin(w), math.sin(t), abs_tol=1e-12)


class TestSineWidth2:
    def test_small_case(self):
        _, acc, g = exhaustive(C.sine_width2_fixed(TaskSpec(3, 2)), 2, 3)
        assert acc == 1.0
        assert len(g) == 6

    def test_margin_p4(self):
        _, _, g = exhaustive(C.sine_width2_fixed(TaskSpec(4, 3)), 3, 4)
        np.testing.assert_allclose(g, 1.0, atol=1e-12)

    @pytest.mark.parametrize("p", range(2, 51))
    def test_margin_lower_bound(self, p):
        bound = 1 - math.cos(2 * math.pi / p)
        assert bound >= 8 / p**2 - 1e-15
        _, acc, g = exhaustive(C.sine_width2_fixed(TaskSpec(p, 2)), 2, p)
        assert acc == 1.0
        assert g.min() >= bound - 1e-9

    def test_w_entries_in_half_open_interval(self):
        W = C.sine_width2_fixed(TaskSpec(9, 4)).W
        assert np.all(W >= -math.pi) and np.all(W < math.pi)


class TestSineBiased:
    @pytest.mark.parametrize("m", [2, 3, 4])
    def test_p5_all_lengths(self, m):
        assert exhaustive(C.sine_width2_biased_uniform(5), m, 5)[1] == 1.0

    def test_p2_m7(self):
        assert exhaustive(C.sine_width2_biased_uniform(2), 7, 2)[1] == 1.0

    def test_correct_score_is_one(self):
        D = enumerate_domain(TaskSpec(7, 3))
        S = scores(C.sine_width2_biased_uniform(7), D.X)
        np.testing.assert_allclose(S[np.arange(len(D)), D.y], 1.0, atol=1e-12)


class TestSineHalfP:
    def test_p5_m3(self):
        D = enumerate_domain(TaskSpec(5, 3))
        pop = population_accuracy(C.sine_halfp_unbiased(5), D)
        assert pop.weighted_exact[0] * 5 == 4 * pop.weighted_exact[1]

    def test_p6_m2(self):
        D = enumerate_domain(TaskSpec(6, 2))
        pop = population_accuracy(C.sine_halfp_unbiased(6), D)
        assert Fraction(*pop.weighted_exact) == Fraction(2, 3)

    @pytest.mark.parametrize("p", [3, 5, 7, 11])
    def test_correct_score_is_quarter_p(self, p):
        D = enumerate_domain(TaskSpec(p, 2))
        S = scores(C.sine_halfp_unbiased(p), D.X)
        keep = D.y != 0
        np.testing.assert_allclose(S[keep, D.y[keep]], p / 4, atol=1e-12)

    def test_p2_has_width_zero(self):
        theta = C.sine_halfp_unbiased(2)
        assert theta.d == 0
        D = enumerate_domain(TaskSpec(2, 3))
        assert np.all(predict_batch(theta, D.X) == -1)


class TestSineHighMargin:
    def test_margins_equal_p(self):
        _, acc, g = exhaustive(C.sine_highmargin_2p(TaskSpec(5, 3)), 3, 5)
        assert acc == 1.0
        np.testing.assert_allclose(g, 5.0, atol=1e-9)

    @pytest.mark.parametrize("p", range(2, 18))
    def test_singular_values(self, p):
        theta = C.sine_highmargin_2p(TaskSpec(p, 2))
        sv = np.linalg.svd(theta.V, compute_uv=False)
        np.testing.assert_allclose(sv, math.sqrt(p), atol=1e-8)
        assert theta.d == 2 * p
        assert np.linalg.norm(theta.W) <= math.pi * math.sqrt(2) * p

    def test_p2_m2(self):
        assert exhaustive(C.sine_highmargin_2p(TaskSpec(2, 2)), 2, 2)[1] == 1.0


class TestPolarization:
    def test_identity(self):
        terms = C.polarize(1)
        assert C.eval_polarization(terms, [3.7]) == pytest.approx(3.7)

    def test_hand_case(self):
        assert C.eval_polarization(C.polarize(2), [3.0, 4.0]) == pytest.approx(12.0, abs=1e-12)

    def test_weights(self):
        terms = C.polarize(3)
        assert len(terms) == 8
        assert all(abs(w) == Fraction(1, 48) for _, w in terms)

    def test_random_s5(self, rng):
        terms = C.polarize(5)
        for _ in range(50):
            x = rng.uniform(-1, 1, 5)
            assert C.eval_polarization(terms, x) == pytest.approx(np.prod(x), abs=1e-9)

    @pytest.mark.parametrize("s", [0, 13])
    def test_range(self, s):
        with pytest.raises(ValueError):
            C.polarize(s)


class TestSpline:
    def test_m2_table(self):
        units = C.relu_spline_power(2, 7)
        assert [u.c for u in units] == [Fraction(-17, 14), Fraction(1, 2)] + [Fraction(4, 7)] * 6
        assert [u.b for u in units[2:]] == [Fraction(-5, 7) + Fraction(2 * j, 7) for j in range(6)]

    def test_linear_is_exact(self):
        z = np.linspace(-1, 1, 1001)
        for N in (1, 3, 10):
            np.testing.assert_allclose(C.eval_spline(C.relu_spline_power(1, N), z), z, atol=1e-14)

    def test_cubic_bound(self):
        z = np.linspace(-1, 1, 10_000)
        err = np.abs(C.eval_spline(C.relu_spline_power(3, 20), z) - z**3).max()
        assert err <= 0.0075

    @given(st.integers(1, 6), st.integers(1, 64))
    def test_interpolates_knots_and_bounds(self, s, N):
        units = C.relu_spline_power(s, N)
        assert len(units) == N + 1
        knots = [Fraction(-1) + Fraction(2 * k, N) for k in range(N + 1)]
        for zk in knots:
            exact = sum(u.c * max(u.a * zk - u.b, 0) for u in units)
            assert exact == zk**s
        cap = max(Fraction(2 * s + 1, 2), Fraction(2 * s * (s - 1), N))
        assert all(abs(u.c) <= cap for u in units)

    def test_knot_count_rule(self):
        assert C.spline_knots_for(2, Fraction(1, 49)) == 7
        assert C.spline_knots_for(1, Fraction(1, 10**6)) == 1


class TestNewton:
    def test_counts(self):
        assert C.newton_total_count(1) == 4
        assert C.newton_total_count(2) == 16
        assert len(C.newton_expansion(2)) == 16

    @pytest.mark.parametrize("m", range(1, 9))
    def test_count_bounds(self, m):
        n = len(C.newton_expansion(m))
        assert n == C.newton_total_count(m)
        assert m * 2**m <= n <= 13 * m * 2**m

    def test_m2_matches_closed_form(self, rng):
        terms = C.newton_expansion(2)
        for _ in range(20):
            th = rng.uniform(-np.pi, np.pi, 2)
            C1, S1, C2 = np.cos(th).sum(), np.sin(th).sum(), np.cos(2 * th).sum()
            fc, _ = C.newton_reconstruct(terms, th)
            assert fc == pytest.approx(0.5 * (C1**2 - S1**2 - C2), abs=1e-12)

    def test_m4_random(self, rng):
        terms = C.newton_expansion(4)
        for _ in range(100):
            th = rng.uniform(-np.pi, np.pi, 4)
            fc, fs = C.newton_reconstruct(terms, th)
            assert fc == pytest.approx(math.cos(th.sum()), abs=1e-9)
            assert fs == pytest.approx(math.sin(th.sum()), abs=1e-9)

    @pytest.mark.parametrize("m", range(1, 7))
    def test_coefficients_at_most_half(self, m):
        assert max(abs(t.coeff) for t in C.newton_expansion(m)) <= Fraction(1, 2)

    def test_order_is_lexicographic(self):
        keys = [(t.k, t.p_select, t.eps) for t in C.newton_expansion(3)]
        assert keys == sorted(keys)

    def test_partitions(self):
        assert C.partitions_as_multiplicities(2) == [(0, 1), (2, 0)]
        assert len(C.partitions_as_multiplicities(6)) == 11


class TestStirlingAndLambda:
    def test_stirling_rows(self):
        assert [C.stirling_first(4, r) for r in range(5)] == [0, 6, 11, 6, 1]
        assert sum(C.stirling_first(6, r) for r in range(7)) == math.factorial(6)

    def test_lambda_values(self):
        # m = 3 by hand: 2·3·2/6 + 4·36·3/(2·6) + 8·729·1/(6·6) = 2 + 36 + 162
        assert C.cycle_index_lambda(3) == 200
        assert C.cycle_index_lambda(2) == Fraction(2 * 2 * 1, 2) + Fraction(4 * 16 * 1, 2 * 2)


class TestReluGeneral:
    @pytest.mark.parametrize("m,p", [(2, 3), (3, 3)])
    def test_exhaustive(self, m, p):
        theta = C.relu_construction(TaskSpec(p, m), Fraction(1, 10))
        _, acc, g = exhaustive(theta, m, p)
        assert acc == 1.0
        assert g.min() >= 0.6 * p
        assert np.abs(theta.W).max() <= 2 / m + 1e-12

    def test_v_bound_m3(self):
        theta = C.relu_construction(TaskSpec(5, 3))
        plan = C.relu_plan(TaskSpec(5, 3))
        assert np.abs(theta.V).max() <= plan.v_inf_bound
        assert plan.v_inf_bound == pytest.approx(3.5 * 729 / 48)

    def test_worked_width(self):
        plan = C.relu_plan(TaskSpec(5, 3), Fraction(1, 10))
        assert plan.lam == 200 and plan.delta == Fraction(1, 2000)
        assert plan.width == 16360
        assert plan.width <= plan.width_bound

    @pytest.mark.parametrize("m,p", [(2, 3), (3, 5)])
    def test_mode_errors(self, m, p):
        from modadd.verify import relu_mode_errors

        assert relu_mode_errors(TaskSpec(p, m), Fraction(1, 10)) <= 0.1

    def test_memory_cap(self):
        with pytest.raises(MemoryError, match="width"):
            C.relu_construction(TaskSpec(5, 3), cap=1000)

    def test_tau_range(self):
        with pytest.raises(ValueError):
            C.relu_plan(TaskSpec(3, 2), Fraction(1, 2))


class TestReluM2:
    def test_p5(self):
        theta = C.relu_construction_m2(5)
        _, acc, g = exhaustive(theta, 2, 5)
        assert acc == 1.0 and len(g) == 15
        assert g.min() >= 125 / 49 + 20 / 49

    def test_p3_spectral(self):
        assert np.linalg.norm(C.relu_construction_m2(3).V, 2) <= 11 * math.sqrt(3)

    def test_agrees_with_general(self):
        D = enumerate_domain(TaskSpec(3, 2))
        a = predict_batch(C.relu_construction_m2(3), D.X)
        b = predict_batch(C.relu_construction(TaskSpec(3, 2), Fraction(1, 10)), D.X)
        np.testing.assert_array_equal(a, b)
        np.testing.assert_array_equal(a, D.y)

    @pytest.mark.parametrize("p", [2, 3, 7, 13])
    def test_width_and_norms(self, p):
        theta = C.relu_construction_m2(p)
        assert theta.d == 36 * p
        assert np.abs(theta.W).max() <= 1.0
        assert np.abs(theta.V).max() <= 34 / 7 + 1e-12


class TestTrigPoly:
    def test_zero(self):
        P = C.trig_sum_polynomialize([0, 0, 0])
        assert P.S == {} and P.C == {(0,) * 6: 1}

    def test_unit(self):
        P = C.trig_sum_polynomialize([0, 1, 0])
        assert P.S == {(0, 0, 0, 1, 0, 0): 1}
        assert P.C == {(0, 0, 1, 0, 0, 0): 1}

    @given(st.lists(st.integers(0, 3), min_size=1, max_size=5).filter(lambda v: sum(v) <= 8),
           st.lists(st.floats(-math.pi, math.pi), min_size=5, max_size=5))
    def test_matches_trig(self, x, angles):
        P = C.trig_sum_polynomialize(x)
        a = np.array(angles[: len(x)])
        s, c = P.evaluate(a)
        t = float(np.dot(x, a))
        assert s == pytest.approx(math.sin(t), abs=1e-10)
        assert c == pytest.approx(math.cos(t), abs=1e-10)
        assert P.degree <= sum(x)
        assert all(isinstance(v, int) for v in itertools.chain(P.S.values(), P.C.values()))
