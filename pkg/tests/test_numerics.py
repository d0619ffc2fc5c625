import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfbandit import _kernels
from cfbandit.numerics import (
    BadK,
    DimensionMismatch,
    EmptyData,
    LengthMismatch,
    NotPositiveDefinite,
    NotSymmetric,
    PcaModel,
    TooFewSamples,
    TriFactor,
    cholesky_factor,
    mvn_sample,
    paired_t_test,
    pca_fit,
    pca_project,
    pca_project_rows,
    rank_one_update,
    spd_solve,
    student_t_sf2,
)
from oracles import random_spd, t_two_sided_trapezoid

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


class TestCholesky:
    def test_identity(self):
        assert np.array_equal(cholesky_factor(np.eye(2)).L, np.eye(2))

    def test_two_by_two(self):
        L = cholesky_factor([[4.0, 2.0], [2.0, 3.0]]).L
        np.testing.assert_allclose(L, [[2.0, 0.0], [1.0, math.sqrt(2.0)]], atol=1e-15)
        np.testing.assert_allclose(L @ L.T, [[4.0, 2.0], [2.0, 3.0]], atol=1e-10)

    def test_indefinite(self):
        with pytest.raises(NotPositiveDefinite):
            cholesky_factor([[1.0, 2.0], [2.0, 1.0]])

    def test_tiny_pivot_rejected(self):
        with pytest.raises(NotPositiveDefinite):
            cholesky_factor(np.diag([1.0, 1e-13]))

    def test_not_symmetric(self):
        with pytest.raises(NotSymmetric):
            cholesky_factor([[2.0, 1.0], [0.0, 2.0]])
        with pytest.raises(NotSymmetric):
            cholesky_factor(np.ones((2, 3)))

    def test_upper_triangle_exactly_zero(self, rng):
        L = cholesky_factor(random_spd(rng, 7)).L
        assert np.all(np.triu(L, 1) == 0.0)
        assert np.all(np.diag(L) > 0)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 12), st.integers(0, 2**32 - 1))
    def test_reconstructs(self, d, seed):
        B = random_spd(np.random.default_rng(seed), d)
        L = cholesky_factor(B).L
        assert np.max(np.abs(L @ L.T - B)) < 1e-10 * max(1.0, np.abs(B).max())


class TestRankOneUpdate:
    def test_diagonal(self):
        out = rank_one_update(TriFactor.identity(2), [1.0, 0.0])
        np.testing.assert_allclose(out.matrix(), np.diag([2.0, 1.0]), atol=1e-15)

    def test_zero_vector(self):
        assert np.array_equal(rank_one_update(TriFactor.identity(2), [0.0, 0.0]).L, np.eye(2))

    def test_input_not_mutated(self):
        fac = TriFactor.identity(3)
        rank_one_update(fac, [1.0, 2.0, 3.0])
        assert np.array_equal(fac.L, np.eye(3))

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            rank_one_update(TriFactor.identity(3), [1.0, 2.0])

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 10), st.integers(0, 2**32 - 1))
    def test_matches_refactor(self, d, seed):
        rng = np.random.default_rng(seed)
        B = random_spd(rng, d)
        x = rng.normal(size=d)
        updated = rank_one_update(cholesky_factor(B), x).L
        np.testing.assert_allclose(updated, cholesky_factor(B + np.outer(x, x)).L, atol=1e-8)

    def test_long_sequence_drift(self, rng):
        d = 64
        fac = TriFactor.identity(d)
        B = np.eye(d)
        for _ in range(10_000):
            x = rng.uniform(-1.0, 1.0, size=d)
            fac = rank_one_update(fac, x)
            B += np.outer(x, x)
        assert np.max(np.abs(fac.matrix() - B)) < 1e-6


class TestSpdSolve:
    def test_identity(self, rng):
        b = rng.normal(size=5)
        np.testing.assert_allclose(spd_solve(TriFactor.identity(5), b), b, atol=0)

    def test_diagonal(self):
        fac = TriFactor(np.diag([math.sqrt(2.0), 1.0]))
        np.testing.assert_allclose(spd_solve(fac, [1.0, 0.0]), [0.5, 0.0], atol=1e-15)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 16), st.integers(0, 2**32 - 1))
    def test_residual(self, d, seed):
        rng = np.random.default_rng(seed)
        B = random_spd(rng, d)
        b = rng.normal(size=d)
        y = spd_solve(cholesky_factor(B), b)
        assert np.max(np.abs(B @ y - b)) < 1e-8

    def test_mismatch(self):
        with pytest.raises(DimensionMismatch):
            spd_solve(TriFactor.identity(2), [1.0, 2.0, 3.0])


class TestMvnSample:
    def test_identity_precision_returns_mean_plus_z(self):
        mean = np.array([1.0, -2.0, 0.5])
        z = np.array([0.3, 0.1, -1.2])
        np.testing.assert_allclose(mvn_sample(mean, TriFactor.identity(3), z), mean + z, atol=0)

    def test_hand_back_substitution(self):
        fac = TriFactor(np.diag([2.0, 1.0]))
        out = mvn_sample([1.0, 1.0], fac, np.array([0.8, -0.4]))
        np.testing.assert_allclose(out, [1.4, 0.6], atol=1e-15)

    def test_scale_multiplies_deviation(self):
        fac = cholesky_factor([[4.0, 1.0], [1.0, 2.0]])
        z = np.array([0.7, -0.2])
        base = mvn_sample([0.0, 0.0], fac, z)
        np.testing.assert_allclose(mvn_sample([0.0, 0.0], fac, z, scale=0.5), 0.5 * base)

    def test_consumes_exactly_d_draws(self):
        a, b = np.random.default_rng(5), np.random.default_rng(5)
        mvn_sample(np.zeros(4), TriFactor.identity(4), a)
        b.standard_normal(4)
        assert a.random() == b.random()

    def test_uses_draws_in_order(self):
        fac = cholesky_factor([[3.0, 1.0, 0.0], [1.0, 2.0, 0.5], [0.0, 0.5, 1.5]])
        z = np.random.default_rng(9).standard_normal(3)
        from_gen = mvn_sample(np.zeros(3), fac, np.random.default_rng(9))
        assert np.array_equal(from_gen, mvn_sample(np.zeros(3), fac, z))

    def test_diagonal_variances_monte_carlo(self):
        rng = np.random.default_rng(11)
        fac = TriFactor(np.diag([2.0, 1.0]))
        draws = np.array([mvn_sample([0.0, 0.0], fac, rng) for _ in range(100_000)])
        var = draws.var(axis=0, ddof=1)
        np.testing.assert_allclose(var, [0.25, 1.0], rtol=0.05)

    def test_full_covariance_monte_carlo(self):
        rng = np.random.default_rng(12)
        P = random_spd(np.random.default_rng(3), 4)
        fac = cholesky_factor(P)
        mean = np.array([1.0, 0.0, -1.0, 2.0])
        draws = np.array([mvn_sample(mean, fac, rng) for _ in range(100_000)])
        cov = np.linalg.inv(P)
        emp = np.cov(draws, rowvar=False)
        scale = np.sqrt(np.outer(np.diag(cov), np.diag(cov)))
        assert np.max(np.abs(emp - cov) / scale) < 0.05
        np.testing.assert_allclose(np.diag(emp), np.diag(cov), rtol=0.05)

    def test_mismatch(self):
        with pytest.raises(DimensionMismatch):
            mvn_sample(np.zeros(3), TriFactor.identity(2), np.zeros(2))


class TestJacobi:
    @pytest.mark.parametrize("d", [1, 2, 5, 20, 64])
    def test_against_numpy(self, d):
        S = random_spd(np.random.default_rng(d), d)
        w, V, sweeps = _kernels.jacobi_eigh(S, 1e-12, 100)
        assert sweeps < 100
        order = np.argsort(w)
        np.testing.assert_allclose(w[order], np.linalg.eigvalsh(S), rtol=1e-10, atol=1e-10)
        np.testing.assert_allclose(S @ V, V * w, atol=1e-8 * np.abs(w).max())
        np.testing.assert_allclose(V.T @ V, np.eye(d), atol=1e-10)


class TestPca:
    def test_diagonal_line(self):
        model = pca_fit([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]], 1)
        np.testing.assert_allclose(model.mean, [1.0, 1.0])
        np.testing.assert_allclose(model.components, [[1 / math.sqrt(2), 1 / math.sqrt(2)]], atol=1e-12)

    def test_identical_rows_give_zero_component(self):
        model = pca_fit(np.tile([3.0, -1.0, 2.0], (5, 1)), 1)
        assert np.all(model.components == 0.0)
        assert np.all(pca_project(model, [7.0, 7.0, 7.0]) == 0.0)

    def test_rank_deficient_trailing_rows_zero(self, rng):
        base = rng.normal(size=(30, 2))
        rows = np.hstack([base, base @ rng.normal(size=(2, 3))])
        model = pca_fit(rows, 5)
        assert np.all(model.components[2:] == 0.0)
        assert np.all(np.linalg.norm(model.components[:2], axis=1) > 0.99)

    def test_errors(self):
        with pytest.raises(EmptyData):
            pca_fit([[1.0, 2.0]], 1)
        with pytest.raises(BadK):
            pca_fit(np.zeros((4, 2)), 3)
        with pytest.raises(BadK):
            pca_fit(np.zeros((4, 2)), 0)

    def test_project_mean_is_zero(self, rng):
        model = pca_fit(rng.normal(size=(20, 4)), 3)
        assert np.all(pca_project(model, model.mean) == 0.0)

    def test_identity_like_model(self):
        model = PcaModel(np.zeros(4), np.eye(4)[:2], np.ones(2))
        np.testing.assert_array_equal(pca_project(model, [5.0, 6.0, 7.0, 8.0]), [5.0, 6.0])

    def test_full_rank_isometry_and_round_trip(self, rng):
        rows = rng.normal(size=(25, 6))
        model = pca_fit(rows, 6)
        proj = pca_project_rows(model, rows)
        d_in = np.linalg.norm(rows[:, None] - rows[None], axis=-1)
        d_out = np.linalg.norm(proj[:, None] - proj[None], axis=-1)
        np.testing.assert_allclose(d_out, d_in, atol=1e-8)
        v = rng.normal(size=6)
        back = model.components.T @ pca_project(model, v) + model.mean
        np.testing.assert_allclose(back, v, atol=1e-8)

    def test_projected_covariance_diagonal_and_sorted(self, rng):
        rows = rng.normal(size=(200, 8)) @ rng.normal(size=(8, 8))
        model = pca_fit(rows, 8)
        proj = pca_project_rows(model, rows)
        cov = np.cov(proj, rowvar=False)
        off = cov - np.diag(np.diag(cov))
        assert np.max(np.abs(off)) < 1e-6
        assert np.all(np.diff(np.diag(cov)) <= 1e-9)
        np.testing.assert_allclose(np.diag(cov), model.eigenvalues, rtol=1e-9)

    def test_matches_numpy_subspace(self, rng):
        rows = rng.normal(size=(100, 10)) * np.arange(1, 11)
        model = pca_fit(rows, 4)
        w, V = np.linalg.eigh(np.cov(rows, rowvar=False))
        ref = V[:, ::-1][:, :4].T
        for mine, theirs in zip(model.components, ref):
            assert abs(abs(mine @ theirs) - 1.0) < 1e-9

    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 30), st.integers(1, 8), st.integers(0, 2**32 - 1))
    def test_orthonormal_and_signed(self, m, n, seed):
        rows = np.random.default_rng(seed).normal(size=(m, n))
        model = pca_fit(rows, n)
        nonzero = [c for c in model.components if np.any(c)]
        C = np.array(nonzero).reshape(len(nonzero), n)
        np.testing.assert_allclose(C @ C.T, np.eye(len(C)), atol=1e-8)
        for c in C:
            assert c[np.argmax(np.abs(c))] > 0

    def test_project_mismatch(self):
        model = PcaModel(np.zeros(3), np.eye(3), np.ones(3))
        with pytest.raises(DimensionMismatch):
            pca_project(model, [1.0, 2.0])


class TestPairedTTest:
    def test_identical_series(self):
        res = paired_t_test([0.3, 0.5, 0.1], [0.3, 0.5, 0.1])
        assert (res.t_stat, res.dof, res.p_two_sided) == (0.0, 2, 1.0)

    def test_diffs_one_two_three(self):
        res = paired_t_test([1.0, 2.0, 3.0], [0.0, 0.0, 0.0])
        assert res.t_stat == pytest.approx(3.4641, abs=1e-4)
        assert res.dof == 2
        assert res.p_two_sided == pytest.approx(0.0742, abs=1e-4)
        assert abs(res.p_two_sided - t_two_sided_trapezoid(res.t_stat, 2)) < 1e-9

    def test_constant_nonzero_difference(self):
        res = paired_t_test([2.0, 3.0, 4.0], [1.0, 2.0, 3.0])
        assert res.p_two_sided == 0.0 and res.t_stat == math.inf
        assert paired_t_test([1.0, 2.0, 3.0], [2.0, 3.0, 4.0]).t_stat == -math.inf

    def test_zero_mean_nonzero_sd(self):
        res = paired_t_test([1.0, -1.0], [0.0, 0.0])
        assert res.t_stat == 0.0 and res.p_two_sided == 1.0

    def test_errors(self):
        with pytest.raises(LengthMismatch):
            paired_t_test([1.0, 2.0], [1.0])
        with pytest.raises(TooFewSamples):
            paired_t_test([1.0], [2.0])

    @pytest.mark.parametrize("dof", [2, 10, 99])
    @pytest.mark.parametrize("t", [0.1, 0.9, 2.0, 3.5, 6.0])
    def test_against_integration_oracle(self, dof, t):
        assert abs(student_t_sf2(t, dof) - t_two_sided_trapezoid(t, dof)) < 1e-6

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.tuples(finite, finite), min_size=2, max_size=30))
    def test_antisymmetric(self, pairs):
        a = [p[0] for p in pairs]
        b = [p[1] for p in pairs]
        ab, ba = paired_t_test(a, b), paired_t_test(b, a)
        assert ab.t_stat == -ba.t_stat
        assert ab.p_two_sided == ba.p_two_sided
        assert 0.0 <= ab.p_two_sided <= 1.0

    def test_against_scipy(self, rng):
        from scipy import stats

        a, b = rng.normal(size=40), rng.normal(0.2, 1.0, size=40)
        ref = stats.ttest_rel(a, b)
        res = paired_t_test(a, b)
        assert res.t_stat == pytest.approx(ref.statistic, rel=1e-12)
        assert res.p_two_sided == pytest.approx(ref.pvalue, rel=1e-9)
