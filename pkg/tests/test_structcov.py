"""Fast structured algebra against dense linear algebra on the materialized matrix."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import linalg

from darkmix.errors import DimensionError
from darkmix.structcov import StructuredCov

from .conftest import random_cov


def dense_dsigma(cov, family, z):
    if family == "alpha":
        return np.diag(np.repeat(2 * cov.sigma**2 * z, cov.r))
    u = np.repeat(cov.tau, cov.r)
    v = np.repeat(cov.tau * z, cov.r)
    return np.outer(v, u) + np.outer(u, v)


def dense_logdet(M):
    L = linalg.cholesky(M, lower=True)
    return 2 * np.sum(np.log(np.diag(L)))


class TestLogDet:
    def test_identity(self):
        assert StructuredCov(np.ones(4), np.zeros(4), 3).log_det() == 0.0

    def test_scalar(self):
        cov = StructuredCov([math.sqrt(3)], [1.0], 1)
        assert cov.log_det() == pytest.approx(math.log(4), rel=1e-15)

    def test_dense(self, rng):
        cov = random_cov(rng, 10, 10)
        assert cov.log_det() == pytest.approx(dense_logdet(cov.materialize()), rel=1e-8)

    def test_zero_sigma_rejected(self):
        with pytest.raises(ValueError, match="singular"):
            StructuredCov([1.0, 0.0], [1.0, 1.0], 2)


class TestSolve:
    def test_diagonal_case(self, rng):
        cov = random_cov(rng, 5, 3, zero_tau=True)
        v = rng.normal(size=15)
        np.testing.assert_allclose(cov.solve(v), v / np.repeat(cov.sigma**2, 3), rtol=1e-15)

    def test_inverse_roundtrip(self, rng):
        cov = random_cov(rng, 6, 4)
        v = rng.normal(size=24)
        np.testing.assert_allclose(cov.materialize() @ cov.solve(v), v, atol=1e-10)

    def test_dense(self, rng):
        cov = random_cov(rng, 10, 10)
        v = rng.normal(size=100)
        ref = linalg.cho_solve(linalg.cho_factor(cov.materialize()), v)
        assert np.max(np.abs(cov.solve(v) - ref)) < 1e-9

    def test_dimension(self):
        with pytest.raises(DimensionError):
            StructuredCov(np.ones(2), np.ones(2), 3).solve(np.ones(5))

    def test_batched(self, rng):
        cov = random_cov(rng, 4, 3)
        V = rng.normal(size=(7, 12))
        np.testing.assert_allclose(cov.solve(V), np.array([cov.solve(v) for v in V]), rtol=1e-14)


class TestQuadForm:
    def test_zero(self, rng):
        assert random_cov(rng, 3, 3).quad_form(np.zeros(9)) == 0.0

    def test_identity(self, rng):
        v = rng.normal(size=12)
        assert StructuredCov(np.ones(4), np.zeros(4), 3).quad_form(v) == pytest.approx(v @ v, rel=1e-14)

    def test_dense(self, rng):
        cov = random_cov(rng, 10, 10)
        v = rng.normal(size=100)
        ref = v @ linalg.cho_solve(linalg.cho_factor(cov.materialize()), v)
        assert cov.quad_form(v) == pytest.approx(ref, rel=1e-9)


class TestMaterialize:
    def test_identity_2x2(self):
        np.testing.assert_array_equal(StructuredCov([1.0], [0.0], 2).materialize(), np.eye(2))

    def test_hand_example(self):
        M = StructuredCov([1.0, 1.0], [2.0, 3.0], 1).materialize()
        np.testing.assert_array_equal(M, [[5.0, 6.0], [6.0, 10.0]])

    def test_entries(self, rng):
        cov = random_cov(rng, 3, 4)
        M = cov.materialize()
        for e in range(3):
            for j in range(4):
                for f in range(3):
                    for k in range(4):
                        expected = cov.sigma[e] ** 2 * (e == f and j == k) + cov.tau[e] * cov.tau[f]
                        assert M[e * 4 + j, f * 4 + k] == pytest.approx(expected, rel=1e-15)

    def test_symmetric_pd(self, rng):
        for _ in range(20):
            M = random_cov(rng).materialize()
            np.testing.assert_array_equal(M, M.T)
            linalg.cholesky(M)

    def test_cap(self):
        with pytest.raises(ValueError, match="cap"):
            StructuredCov(np.ones(10), np.ones(10), 101).materialize()
        StructuredCov(np.ones(10), np.ones(10), 100).materialize()


class TestDirectionalTrace:
    def test_alpha_no_tau(self):
        cov = StructuredCov(np.full(4, 2.0), np.zeros(4), 3)
        assert cov.directional_trace("alpha", np.ones(4)) == pytest.approx(2 * 4 * 3, rel=1e-15)

    def test_gamma_no_tau(self, rng):
        cov = StructuredCov(rng.uniform(1, 2, 4), np.zeros(4), 3)
        assert cov.directional_trace("gamma", rng.normal(size=4)) == 0.0

    @pytest.mark.parametrize("family", ["alpha", "gamma"])
    def test_dense(self, rng, family):
        cov = random_cov(rng, 10, 10)
        z = rng.normal(size=10)
        dense = np.trace(linalg.cho_solve(linalg.cho_factor(cov.materialize()), dense_dsigma(cov, family, z)))
        assert cov.directional_trace(family, z) == pytest.approx(dense, rel=1e-8)

    def test_unknown_family(self):
        with pytest.raises(ValueError, match="family"):
            StructuredCov(np.ones(2), np.ones(2), 2).directional_trace("beta", np.ones(2))


small_cov = st.builds(
    lambda E, r, s, t: StructuredCov(np.array(s[:E]), np.array(t[:E]), r),
    st.integers(1, 10), st.integers(1, 20),
    st.lists(st.floats(0.2, 5.0), min_size=10, max_size=10),
    st.lists(st.floats(0.0, 3.0), min_size=10, max_size=10),
).filter(lambda c: c.dim <= 200)


@settings(max_examples=60, deadline=None)
@given(small_cov, st.integers(0, 2**32 - 1))
def test_agrees_with_dense(cov, seed):
    rng = np.random.default_rng(seed)
    M = cov.materialize()
    cf = linalg.cho_factor(M)
    v = rng.normal(size=cov.dim)
    z = rng.normal(size=cov.E)
    assert cov.log_det() == pytest.approx(dense_logdet(M), rel=1e-8, abs=1e-12)
    np.testing.assert_allclose(cov.solve(v), linalg.cho_solve(cf, v), rtol=1e-8, atol=1e-12)
    assert cov.quad_form(v) == pytest.approx(v @ linalg.cho_solve(cf, v), rel=1e-8)
    for fam in ("alpha", "gamma"):
        dense = np.trace(linalg.cho_solve(cf, dense_dsigma(cov, fam, z)))
        assert cov.directional_trace(fam, z) == pytest.approx(dense, rel=1e-8, abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(small_cov)
def test_min_eigenvalue(cov):
    assert np.linalg.eigvalsh(cov.materialize()).min() >= cov.sigma.min() ** 2 - 1e-12 * max(1, cov.sigma.max() ** 2 + np.sum(cov.tau**2) * cov.r)


@settings(max_examples=40, deadline=None)
@given(small_cov, st.floats(0.1, 10.0), st.integers(0, 2**32 - 1))
def test_scaling(cov, c, seed):
    v = np.random.default_rng(seed).normal(size=cov.dim)
    scaled = StructuredCov(cov.sigma * c, cov.tau * c, cov.r)
    assert scaled.log_det() == pytest.approx(cov.log_det() + 2 * cov.dim * math.log(c), rel=1e-10, abs=1e-9)
    assert scaled.quad_form(v) == pytest.approx(cov.quad_form(v) / c**2, rel=1e-10)


@settings(max_examples=40, deadline=None)
@given(small_cov, st.floats(-5, 5), st.floats(-5, 5), st.integers(0, 2**32 - 1))
def test_solve_linear(cov, a, b, seed):
    rng = np.random.default_rng(seed)
    v, w = rng.normal(size=(2, cov.dim))
    np.testing.assert_allclose(cov.solve(a * v + b * w), a * cov.solve(v) + b * cov.solve(w), atol=1e-10)
