import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from modadd.constructions import (
    sine_halfp_unbiased,
    sine_highmargin_2p,
    sine_width2_biased_uniform,
    sine_width2_fixed,
)
from modadd.data import LabeledSet, TaskSpec, enumerate_domain, sample_set
from modadd.metrics import (
    evaluate,
    margin,
    margin_report,
    margins,
    margins_from_scores,
    population_accuracy,
    q2_from_sequences,
    q2_hoeffding_band,
    q2_statistic,
)
from modadd.model import MlpParams, predict_batch
from modadd.numerics import RngStream


def random_net(seed, d, p, act="sine"):
    g = np.random.default_rng(seed)
    return MlpParams(g.normal(size=(d, p)), g.normal(size=(p, d)), None, act)


class TestMargin:
    def test_scores_example(self):
        assert margins_from_scores(np.array([[2.0, 0.0, 1.0]]), [0])[0] == 1.0

    @pytest.mark.parametrize("p,m", [(5, 2), (7, 3), (11, 2)])
    def test_width2_margin(self, p, m):
        spec = TaskSpec(p, m)
        g = margins(sine_width2_fixed(spec), enumerate_domain(spec))
        np.testing.assert_allclose(g, 1 - math.cos(2 * math.pi / p), atol=1e-12)

    @pytest.mark.parametrize("p,m", [(5, 2), (7, 3)])
    def test_highmargin_equals_p(self, p, m):
        spec = TaskSpec(p, m)
        g = margins(sine_highmargin_2p(spec), enumerate_domain(spec))
        np.testing.assert_allclose(g, p, atol=1e-9)

    def test_single_item(self):
        theta = sine_width2_fixed(TaskSpec(5, 2))
        x = np.array([1, 1, 0, 0, 0])
        assert margin(theta, x, 1) == pytest.approx(1 - math.cos(2 * math.pi / 5), abs=1e-12)

    @given(st.integers(0, 2**31), st.integers(2, 7))
    def test_positive_margin_iff_correct(self, seed, p):
        theta = random_net(seed, 4, p)
        data = sample_set(TaskSpec(p, 3), 50, RngStream(seed, 0))
        g = margins(theta, data)
        assert np.array_equal(g > 0, predict_batch(theta, data.X) == data.y)


class TestReport:
    def test_highmargin_normalized(self):
        spec = TaskSpec(5, 2)
        rep = margin_report(sine_highmargin_2p(spec), enumerate_domain(spec))
        assert rep.norm_margin_sine >= 0.5 - 1e-9
        assert rep.min_margin <= rep.pct05_margin

    def test_duplication_invariance(self):
        spec = TaskSpec(7, 3)
        data = sample_set(spec, 40, RngStream(3, 0))
        doubled = LabeledSet.merge([data, data])
        theta = random_net(1, 6, 7)
        a, b = margin_report(theta, data).summary(), margin_report(theta, doubled).summary()
        assert a == b

    def test_single_sample(self):
        data = sample_set(TaskSpec(5, 2), 1, RngStream(0, 0))
        rep = margin_report(random_net(2, 3, 5), data)
        assert rep.pct05_margin == rep.min_margin

    def test_empty_rejected(self):
        data = sample_set(TaskSpec(5, 2), 3, RngStream(0, 0)).subset([])
        with pytest.raises(ValueError):
            margin_report(random_net(2, 3, 5), data)

    @given(st.integers(0, 2**31), st.floats(0.01, 100.0))
    def test_v_scaling_invariance(self, seed, alpha):
        data = sample_set(TaskSpec(5, 3), 30, RngStream(seed, 0))
        theta = random_net(seed, 6, 5)
        scaled = MlpParams(theta.W, alpha * theta.V)
        a, b = margin_report(theta, data), margin_report(scaled, data)
        np.testing.assert_allclose(b.per_sample_margins, alpha * a.per_sample_margins, rtol=1e-10, atol=1e-12)
        assert b.v_spectral == pytest.approx(alpha * a.v_spectral, rel=1e-9)
        assert b.v_row_l1 == pytest.approx(alpha * a.v_row_l1, rel=1e-12)
        assert b.norm_margin_sine == pytest.approx(a.norm_margin_sine, rel=1e-10, abs=1e-10)
        assert b.norm_margin_relu == pytest.approx(a.norm_margin_relu, rel=1e-8, abs=1e-10)

    def test_norms_nonnegative(self):
        data = sample_set(TaskSpec(5, 3), 20, RngStream(0, 0))
        rep = margin_report(random_net(7, 4, 5, "relu"), data)
        assert min(rep.v_spectral, rep.w_frobenius, rep.v_row_l1) >= 0


class TestEvaluate:
    def test_halfp_p5(self):
        spec = TaskSpec(5, 2)
        dom = enumerate_domain(spec)
        assert evaluate(sine_halfp_unbiased(5), dom).accuracy == pytest.approx(0.8, abs=1e-15)
        pop = population_accuracy(sine_halfp_unbiased(5), dom)
        assert pop.weighted_exact == (20, 25)

    def test_biased_exact(self):
        dom = enumerate_domain(TaskSpec(7, 4))
        assert evaluate(sine_width2_biased_uniform(7), dom).accuracy == 1.0

    def test_single_sample_binary(self):
        data = sample_set(TaskSpec(5, 2), 1, RngStream(1, 0))
        acc = evaluate(random_net(4, 3, 5), data).accuracy
        assert acc in (0.0, 1.0)

    def test_invalid_counts_as_error(self):
        theta = MlpParams(np.zeros((2, 3)), np.zeros((3, 2)))
        s = evaluate(theta, enumerate_domain(TaskSpec(3, 2)))
        assert s.accuracy == 0.0 and s.invalid_rate == 1.0
        assert s.accuracy + s.error_rate == 1.0

    @pytest.mark.parametrize("p,m", [(5, 3), (7, 2)])
    def test_exhaustive_matches_population(self, p, m):
        dom = enumerate_domain(TaskSpec(p, m))
        theta = sine_width2_fixed(TaskSpec(p, m))
        pop = population_accuracy(theta, dom)
        assert evaluate(theta, dom).accuracy == pop.unweighted == pop.weighted == 1.0


class TestQ2:
    def test_single_repeated_token(self):
        data = LabeledSet(5, np.array([[2, 0, 0, 0, 0]]), np.array([0]), 2)
        assert q2_statistic(data) == 2.0

    def test_distinct_tokens(self):
        X = np.array([[1, 1, 1, 0, 0, 0, 0], [0, 0, 1, 1, 0, 1, 0]])
        data = LabeledSet(7, X, X.argmax(axis=1) * 0, 3)
        assert q2_statistic(data) == pytest.approx(math.sqrt(3), abs=1e-15)

    @given(st.integers(0, 2**31), st.integers(2, 9), st.integers(2, 8))
    def test_matches_collision_count(self, seed, p, m):
        data = sample_set(TaskSpec(p, m), 25, RngStream(seed, 0))
        assert q2_statistic(data) == pytest.approx(q2_from_sequences(data.sequences), rel=1e-12)

    def test_concentration(self):
        m, p, n = 4, 53, 100_000
        data = sample_set(TaskSpec(p, m), n, RngStream(11, 0))
        q2sq = q2_statistic(data) ** 2
        mean = m * (1 + (m - 1) / p)
        # Y ranges over [m, m^2], so sigma <= (m^2 - m) / 2 / sqrt(n)
        sigma = (m * m - m) / 2 / math.sqrt(n)
        assert abs(q2sq - mean) <= 3 * sigma
        lo, hi = q2_hoeffding_band(m, p, n, 0.01)
        assert lo <= q2sq <= hi


def test_report_survives_clustered_singular_values():
    # top two singular values 1.13343 / 1.13311 stall power iteration within its default budget
    from modadd.optim import newton_schulz_orthogonalize

    V = newton_schulz_orthogonalize(np.random.default_rng(988).normal(size=(10, 10)))
    theta = MlpParams(W=np.eye(10), V=V, b=None, act="relu")
    data = sample_set(TaskSpec(p=10, m=2), 50, RngStream(0, 1))
    rep = margin_report(theta, data)
    assert rep.v_spectral == pytest.approx(np.linalg.svd(V, compute_uv=False)[0], rel=1e-12)
