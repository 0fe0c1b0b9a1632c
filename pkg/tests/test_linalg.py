import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mabrl.linalg import DimensionError, SolverError, matmul, pseudo_inverse, ridge_solve
from oracles import ridge_oracle


class TestMatmul:
    def test_identity(self):
        np.testing.assert_array_equal(matmul(np.eye(2), [[3], [4]]), [[3], [4]])

    def test_zero_right_factor(self):
        np.testing.assert_array_equal(matmul([[1, 2], [3, 4]], [[0], [0]]), [[0], [0]])

    def test_hand_expanded(self):
        # 1*5 + 2*6 = 17, 3*5 + 4*6 = 39
        np.testing.assert_array_equal(matmul([[1, 2], [3, 4]], [[5], [6]]), [[17], [39]])

    def test_mismatch_names_shapes(self):
        with pytest.raises(DimensionError, match=r"2x2 by 3x1"):
            matmul([[1, 2], [3, 4]], [[1], [2], [3]])

    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            matmul([[np.nan]], [[1.0]])


class TestRidgeSolve:
    def test_identity_design(self):
        np.testing.assert_allclose(ridge_solve(np.eye(2), [[1], [2]], 0.0), [[1], [2]])

    def test_identity_design_regularized(self):
        np.testing.assert_allclose(ridge_solve(np.eye(2), [[1], [2]], 1.0), [[0.5], [1.0]])

    def test_single_column(self):
        np.testing.assert_allclose(ridge_solve([[1], [2]], [[1], [2]], 0.0), [[1.0]])

    def test_random_matches_gauss_oracle(self):
        rng = np.random.default_rng(7)
        u = rng.normal(size=(6, 3))
        y = rng.normal(size=(6, 2))
        expected = ridge_oracle(u.tolist(), y.tolist(), 0.1)
        np.testing.assert_allclose(ridge_solve(u, y, 0.1), expected, atol=1e-10)

    def test_singular_at_zero_lambda(self):
        u = np.array([[1.0, 1.0], [2.0, 2.0]])
        with pytest.raises(SolverError, match="lambda"):
            ridge_solve(u, [[1.0], [2.0]], 0.0)
        # any positive lambda fixes it
        ridge_solve(u, [[1.0], [2.0]], 1e-3)

    def test_negative_lambda(self):
        with pytest.raises(ValueError):
            ridge_solve(np.eye(2), [[1], [2]], -1.0)

    def test_row_mismatch(self):
        with pytest.raises(DimensionError):
            ridge_solve(np.eye(2), [[1], [2], [3]], 0.1)

    def test_non_finite(self):
        with pytest.raises(ValueError):
            ridge_solve([[np.inf, 0.0]], [[1.0]], 0.1)

    @settings(max_examples=60, deadline=None)
    @given(
        n=st.integers(2, 20),
        f=st.integers(1, 10),
        a=st.integers(1, 4),
        lam=st.sampled_from([1e-3, 0.01, 0.1, 1.0]),
        seed=st.integers(0, 2**32 - 1),
    )
    def test_normal_equation_residual(self, n, f, a, lam, seed):
        rng = np.random.default_rng(seed)
        u = rng.normal(size=(n, f))
        y = rng.normal(size=(n, a))
        w = ridge_solve(u, y, lam)
        uty = u.T @ y
        resid = (u.T @ u + lam * np.eye(f)) @ w - uty
        assert np.abs(resid).max() <= 1e-8 * (1 + np.abs(uty).max())

    @pytest.mark.parametrize("seed", range(5))
    def test_monotone_shrinkage(self, seed):
        rng = np.random.default_rng(seed)
        u = rng.normal(size=(12, 5))
        y = rng.normal(size=(12, 3))
        norms = [np.linalg.norm(ridge_solve(u, y, lam)) for lam in (0.01, 0.1, 1, 10)]
        assert all(b <= a + 1e-12 for a, b in zip(norms, norms[1:]))


class TestPseudoInverse:
    def test_identity(self):
        np.testing.assert_allclose(pseudo_inverse(np.eye(3)), np.eye(3), atol=1e-7)

    def test_scalar(self):
        np.testing.assert_allclose(pseudo_inverse([[2.0]]), [[0.5]], atol=1e-7)

    def test_tall_embedding(self):
        u = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
        p = pseudo_inverse(u)
        np.testing.assert_allclose(p, [[1, 0, 0], [0, 1, 0]], atol=1e-7)
        np.testing.assert_allclose(p @ u, np.eye(2), atol=1e-6)

    def test_full_column_rank_left_inverse(self):
        rng = np.random.default_rng(3)
        u = rng.normal(size=(9, 4))
        np.testing.assert_allclose(pseudo_inverse(u) @ u, np.eye(4), atol=1e-6)
        np.testing.assert_allclose(pseudo_inverse(u), np.linalg.pinv(u), atol=1e-6)

    def test_ill_conditioned_square(self):
        # smallest singular value 1e-3: a plain lambda=1e-8 ridge would miss I by ~1e-2
        q1, _ = np.linalg.qr(np.random.default_rng(4).normal(size=(5, 5)))
        u = q1 @ np.diag([3.0, 1.0, 0.1, 0.01, 1e-3]) @ q1.T
        np.testing.assert_allclose(pseudo_inverse(u) @ u, np.eye(5), atol=1e-6)

    def test_rank_deficient_is_minimum_norm(self):
        u = np.array([[1.0, 1.0], [2.0, 2.0], [0.0, 0.0]])
        np.testing.assert_allclose(pseudo_inverse(u), np.linalg.pinv(u), atol=1e-6)
