import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from darkmix.diagnostics import (
    block_avg_cov,
    classify,
    cross_condition_regression,
    hm_test,
    qq_data,
    trend_table,
    trim_by_mean,
)
from darkmix.em import Responsibilities, evaluate
from darkmix.errors import DiagnosticError, DimensionError
from darkmix.model import PixelPanel, build_design
from darkmix.simulate import preset_atik, simulate_panel

from .conftest import single_component, two_component


class TestTrim:
    def test_all_kept(self, small_design):
        panel = simulate_panel(two_component(small_design), 50, 1).panel
        res = trim_by_mean(panel, 1e6)
        assert res.mask.all() and res.kept_fraction == 1.0

    def test_boundary_inclusive(self):
        design = build_design([(0.0, 3.0)], 2)
        panel = PixelPanel(np.array([[287.0, 287.0], [287.5, 287.5], [280.0, 290.0]]), design)
        np.testing.assert_array_equal(trim_by_mean(panel, 287.0).mask, [True, False, True])

    def test_empty(self, small_design):
        panel = simulate_panel(two_component(small_design), 20, 1).panel
        with pytest.raises(DiagnosticError):
            trim_by_mean(panel, 0.0)
        with pytest.raises(DiagnosticError):
            trim_by_mean(panel, np.nan)

    def test_preset_fraction(self):
        panel = simulate_panel(preset_atik(3), 20000, 2).panel
        assert trim_by_mean(panel, 287.0).kept_fraction == pytest.approx(0.998, abs=0.002)


class TestBlockCov:
    def test_iid_normal(self, rng):
        design = build_design([(0.0, 3.0), (10.0, 3.0), (0.0, 300.0)], 4)
        panel = PixelPanel(rng.standard_normal((50000, 12)), design)
        assert np.max(np.abs(block_avg_cov(panel).matrix)) < 0.05

    def test_hand_built(self):
        design = build_design([(0.0, 3.0), (10.0, 3.0)], 2)
        y = np.array([[1.0, 2.0, 0.0, 4.0],
                      [3.0, 1.0, 2.0, 2.0],
                      [0.0, 0.0, 1.0, 6.0]])
        S = np.cov(y, rowvar=False)
        expected = np.array([[S[0, 1], (S[0, 2] + S[0, 3] + S[1, 2] + S[1, 3]) / 4],
                             [0.0, S[2, 3]]])
        expected[1, 0] = expected[0, 1]
        out = block_avg_cov(PixelPanel(y, design))
        np.testing.assert_allclose(out.matrix, expected, rtol=1e-14)
        np.testing.assert_array_equal(out.counts, [[2, 4], [4, 2]])

    def test_symmetric(self, small_design):
        m = block_avg_cov(simulate_panel(two_component(small_design), 200, 3).panel).matrix
        np.testing.assert_allclose(m, m.T, rtol=1e-14)

    def test_one_replicate(self):
        design = build_design([(0.0, 3.0)], 1)
        with pytest.raises(DiagnosticError, match="diagonal"):
            block_avg_cov(PixelPanel(np.zeros((5, 1)), design))

    def test_model_implied(self, small_design):
        model = single_component(small_design, [100.0, 104.0, 101.0], [0.5, 0.01, 0.0], [0.8, 0.03, 0.001])
        panel = simulate_panel(model, 20000, 4).panel
        tau = model.taus()[0]
        np.testing.assert_allclose(block_avg_cov(panel).matrix, np.outer(tau, tau), rtol=0.1)


class TestHm:
    def test_exact_multiplicative(self):
        v = np.array([1.0, 2.5, 4.0, 0.3])
        rep = hm_test(np.outer(v, v))
        assert rep.residual_variance < 1e-20
        assert rep.excluded == 0 and rep.multiplicative
        assert abs(rep.effects.sum()) < 1e-12
        d = np.log(v[:, None] / v[None, :])
        np.testing.assert_allclose(rep.effects[:, None] - rep.effects[None, :], d, atol=1e-12)

    def test_independent_flagged(self, rng):
        C = np.diag([4.0, 5.0, 6.0, 3.0]) + rng.uniform(0.01, 0.1, (4, 4))
        rep = hm_test((C + C.T) / 2)
        assert not rep.multiplicative and rep.ratio > 0.15

    def test_independent_mostly_negative(self, rng):
        C = np.diag([4.0, 5.0, 6.0, 3.0]) - rng.uniform(0.01, 0.1, (4, 4))
        with pytest.raises(DiagnosticError, match="positive cells"):
            hm_test((C + C.T) / 2)

    def test_excluded_warns(self):
        C = np.outer([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
        C[0, 1] = C[1, 0] = -0.1
        with pytest.warns(RuntimeWarning, match="non-positive"):
            rep = hm_test(C)
        assert rep.excluded == 2 and rep.used == 7

    def test_too_few_cells(self):
        with pytest.raises(DiagnosticError):
            hm_test(-np.ones((3, 3)))

    def test_not_square(self):
        with pytest.raises(DimensionError):
            hm_test(np.ones((2, 3)))


class TestQQ:
    def test_normal(self, rng):
        qq = qq_data(rng.standard_normal(100000))
        assert qq.slope == pytest.approx(1.0, abs=0.02)
        assert not qq.flagged

    def test_plotting_positions(self):
        qq = qq_data(np.arange(10.0))
        from scipy import stats

        np.testing.assert_allclose(qq.theoretical, stats.norm.ppf((np.arange(10) + 0.5) / 10))

    def test_heavy_tail(self, rng):
        qq = qq_data(rng.exponential(size=20000))
        assert qq.flagged
        assert np.all(qq.residuals[-20:] > 0)

    def test_too_short(self):
        with pytest.raises(DiagnosticError):
            qq_data(np.arange(9.0))

    def test_constant(self):
        with pytest.raises(DiagnosticError, match="constant"):
            qq_data(np.ones(20))


class TestClassify:
    def test_single_component(self, small_design):
        model = single_component(small_design, [100.0, 104.0, 101.0], [0.5, 0.0, 0.0], [0.0, 0.0, 0.0])
        res = evaluate(simulate_panel(model, 30, 1).panel, model)
        cl = classify(res)
        assert np.all(cl.labels == 0) and cl.hot.size == 0

    def test_tie_goes_low(self):
        cl = classify(Responsibilities(np.array([[0.5, 0.5], [0.2, 0.8]]), 0.0))
        np.testing.assert_array_equal(cl.labels, [0, 1])
        np.testing.assert_array_equal(cl.hot, [1])

    @settings(max_examples=50)
    @given(st.integers(0, 2**32 - 1))
    def test_monotone_invariance(self, seed):
        E = np.random.default_rng(seed).dirichlet(np.ones(3), size=40)
        a = classify(E).labels
        np.testing.assert_array_equal(classify(np.log(E)).labels, a)
        np.testing.assert_array_equal(classify(E**3 + 7).labels, a)

    def test_recovers_truth(self, small_design):
        sim = simulate_panel(two_component(small_design, gap=30.0), 2000, 5)
        cl = classify(evaluate(sim.panel, sim.model))
        assert np.mean(cl.labels == sim.labels) >= 0.99


class TestCrossRegression:
    def test_identity(self, rng):
        a = rng.normal(270, 5, 100)
        res = cross_condition_regression(a, a, 1e9)
        assert res.slope == pytest.approx(1.0, rel=1e-12)
        assert res.residual_sd < 1e-10

    def test_ols_consistency(self, rng):
        a = rng.normal(270, 10, 50000)
        b = 2 * a + rng.normal(0, 2, a.size)
        res = cross_condition_regression(a, b, 1e9)
        assert res.slope == pytest.approx(2.0, abs=0.01)
        assert res.residual_sd == pytest.approx(2.0, rel=0.05)

    def test_threshold_strict(self):
        a = np.array([1.0, 2.0, 3.0, 4.0])
        assert cross_condition_regression(a, 2 * a, 4.0).n_used == 3
        with pytest.raises(DiagnosticError):
            cross_condition_regression(a, a, 3.0)

    def test_scale_equivariance(self, rng):
        a = rng.normal(270, 5, 300)
        b = 1.5 * a + rng.normal(0, 1, 300)
        base = cross_condition_regression(a, b, 1e9).slope
        assert cross_condition_regression(a, 4.0 * b, 1e9).slope == 4.0 * base
        assert cross_condition_regression(a, 0.37 * b, 1e9).slope == pytest.approx(0.37 * base, rel=1e-13)

    def test_lengths(self):
        with pytest.raises(DimensionError):
            cross_condition_regression(np.ones(4), np.ones(5), 10)


def test_trend_table(atik10):
    rows = trend_table(preset_atik(3))
    assert len(rows) == 30
    k, t, d, mu, sig, tau = rows[0]
    assert (k, t, d) == (0, -10.0, 0.01)
    assert mu == pytest.approx(263.0, abs=0.5) and sig == pytest.approx(16.2)
