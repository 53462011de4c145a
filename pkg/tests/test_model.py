import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from darkmix.errors import DesignError
from darkmix.model import (
    ComponentParameters,
    LEIMean,
    MixtureModel,
    MixtureWeights,
    NPMMean,
    build_design,
    default_duration_groups,
    logits_from_weights,
    mean_vector,
    sigma_vector,
    tau_vector,
    weights_from_logits,
)
from darkmix.simulate import atik_design


class TestDesign:
    def test_atik_layout(self):
        conds = [(t, d) for t in (-10, 0, 10) for d in (3, 300, 600)] + [(-10, 0.01)]
        d = build_design(conds, 10)
        assert d.n_conditions == 10
        assert d.width == 100

    def test_minimal(self):
        d = build_design([(0.0, 3.0)], 1)
        assert d.n_conditions == 1
        np.testing.assert_array_equal(d.covariate_rows, [[1.0, 0.0, 3.0]])

    def test_duplicate_names_index(self):
        with pytest.raises(DesignError, match="condition 2 duplicates condition 0"):
            build_design([(0, 3), (10, 3), (0, 3)], 2)

    @pytest.mark.parametrize("dur", [0.0, -1.0])
    def test_nonpositive_duration(self, dur):
        with pytest.raises(DesignError):
            build_design([(0, dur)], 2)

    def test_bad_replicates(self):
        with pytest.raises(DesignError):
            build_design([(0, 3)], 0)

    def test_column_index_condition_major(self):
        d = build_design([(0, 3), (10, 3), (0, 300)], 4)
        assert [d.column(e, j) for e in range(3) for j in range(4)] == list(range(12))

    def test_order_preserved(self):
        conds = [(10, 600), (-10, 3), (0, 300)]
        d = build_design(conds, 2)
        assert [(c.temp_c, c.duration_s) for c in d.conditions] == [(10, 600), (-10, 3), (0, 300)]


class TestLinks:
    def test_readout_floor(self, atik10):
        np.testing.assert_allclose(sigma_vector([math.log(16), 0, 0], atik10), 16.0, rtol=1e-15)

    def test_identity_point(self, atik10):
        np.testing.assert_array_equal(sigma_vector([0, 0, 0], atik10), 1.0)
        np.testing.assert_array_equal(tau_vector([0, 0, 0], atik10), 1.0)

    def test_sigma_scalar(self):
        d = build_design([(10, 600)], 1)
        # 2 + 0.05*10 + 0.001*600 = 3.1
        assert sigma_vector([2, 0.05, 0.001], d)[0] == pytest.approx(22.197951281441636, rel=1e-14)

    def test_tau_scalar(self):
        d = build_design([(-10, 300)], 1)
        assert tau_vector([1, 0.1, 0.002], d)[0] == pytest.approx(1.8221188003905089, rel=1e-14)

    def test_tau_negligible(self, atik10):
        np.testing.assert_allclose(tau_vector([-40, 0, 0], atik10), 4.248354255291589e-18, rtol=1e-12)

    def test_overflow_saturates(self, atik10):
        assert np.all(np.isinf(sigma_vector([1000, 0, 0], atik10)))

    @given(st.floats(-5, 5), st.floats(-0.2, 0.2), st.floats(-0.01, 0.01))
    def test_positive(self, a0, a1, a2):
        coef = [a0, a1, a2]
        d = atik_design(2)
        assert np.all(sigma_vector(coef, d) > 0)
        assert np.all(tau_vector(coef, d) > 0)


class TestMeans:
    def test_npm_passthrough(self, atik10):
        vals = np.linspace(265, 290, 10)
        comp = ComponentParameters(NPMMean(vals), np.zeros(3), np.zeros(3))
        np.testing.assert_array_equal(mean_vector(comp, atik10), vals)

    def test_lei_formula(self):
        d = build_design([(-10, 300), (0, 300), (10, 300)], 2)
        lei = LEIMean(263.0, math.log(0.01), np.zeros(3), 0.0, {300.0: 1})
        # 263 + 0.01 * 300 + exp(0) = 267
        np.testing.assert_allclose(mean_vector(lei, d), 267.0, rtol=1e-15)

    def test_lei_six_parameters(self, atik10):
        groups = default_duration_groups(atik10)
        assert groups == {0.01: 0, 3.0: 0, 300.0: 1, 600.0: 2}
        lei = LEIMean(263.0, -5.0, np.zeros(3), 0.0, groups)
        assert lei.n_params == 6
        assert ComponentParameters(lei, np.zeros(3), np.zeros(3)).n_params == 12

    def test_lei_unmapped_duration(self, atik10):
        lei = LEIMean(263.0, -5.0, np.zeros(2), 0.0, {3.0: 0, 300.0: 1, 0.01: 0})
        with pytest.raises(DesignError, match="600"):
            mean_vector(lei, atik10)

    def test_lei_nested_in_npm(self, atik10, rng):
        groups = default_duration_groups(atik10)
        for _ in range(20):
            lei = LEIMean(rng.normal(263, 2), rng.normal(-4, 1), rng.normal(0, 1, 3), rng.normal(0, 0.05), groups)
            comp = ComponentParameters(lei, np.zeros(3), np.zeros(3))
            model = MixtureModel(atik10, (comp,), MixtureWeights(np.empty(0)))
            np.testing.assert_array_equal(model.to_npm().means()[0], mean_vector(comp, atik10))

    def test_condition_permutation(self, rng):
        conds = [(-10, 3), (0, 300), (10, 600), (0, 3)]
        vals = rng.normal(270, 5, 4)
        perm = rng.permutation(4)
        d1 = build_design(conds, 2)
        d2 = build_design([conds[i] for i in perm], 2)
        np.testing.assert_array_equal(mean_vector(NPMMean(vals[perm]), d2), mean_vector(NPMMean(vals), d1)[perm])
        lei = LEIMean(263, -4, [0.1, 0.5, 1.0], 0.03, {3.0: 0, 300.0: 1, 600.0: 2})
        np.testing.assert_allclose(mean_vector(lei, d2), mean_vector(lei, d1)[perm], rtol=1e-15)


class TestWeights:
    def test_symmetric(self):
        np.testing.assert_allclose(weights_from_logits([0, 0]), [1 / 3] * 3, rtol=1e-15)

    def test_paper_proportions(self):
        theta = logits_from_weights([0.9858, 0.0123, 0.0019])
        np.testing.assert_allclose(theta, [-4.383854231892905, -6.251599608098883], rtol=1e-12)

    def test_single_component(self):
        assert logits_from_weights([1.0]).size == 0
        np.testing.assert_array_equal(weights_from_logits([]), [1.0])
        assert MixtureWeights(np.empty(0)).pi.tolist() == [1.0]

    @pytest.mark.parametrize("pi", [[1.0, 0.0], [0.0, 1.0], [0.5, 0.5, 0.0]])
    def test_degenerate_rejected(self, pi):
        with pytest.raises(ValueError):
            logits_from_weights(pi)

    @settings(max_examples=200)
    @given(arrays(np.float64, st.integers(0, 6), elements=st.floats(-20, 20)))
    def test_round_trip(self, theta):
        pi = weights_from_logits(theta)
        assert abs(pi.sum() - 1) < 1e-12 and np.all(pi > 0)
        np.testing.assert_allclose(logits_from_weights(pi), theta, atol=1e-12, rtol=0)


def test_label_convention(atik10):
    hi = ComponentParameters(NPMMean(np.full(10, 300.0)), np.zeros(3), np.zeros(3))
    lo = ComponentParameters(NPMMean(np.full(10, 263.0)), np.ones(3) * 0.1, np.zeros(3))
    model = MixtureModel(atik10, (hi, lo), MixtureWeights.from_proportions([0.3, 0.7]))
    s = model.sorted()
    assert s.components[0] is lo
    np.testing.assert_allclose(s.pi, [0.7, 0.3], rtol=1e-14)
