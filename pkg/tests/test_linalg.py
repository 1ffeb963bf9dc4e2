import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from mmvfacs.errors import DimensionMismatch, RankDeficient
from mmvfacs.linalg import (as_mat, embed_rows, index_set, keep_top_k_rows, lstsq, lstsq_min_norm,
                            mixed_norm, numerical_rank, row_l2_norms, top_k_rows)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def mats(max_rows=12, max_cols=6):
    shapes = st.tuples(st.integers(1, max_rows), st.integers(1, max_cols))
    return shapes.flatmap(lambda s: arrays(np.float64, s, elements=finite))


def test_lstsq_identity():
    B = np.array([[1.5, -2.0], [3.0, 0.25]])
    np.testing.assert_allclose(lstsq(np.eye(2), B), B, atol=1e-15)


def test_lstsq_mean_of_two_equations():
    np.testing.assert_allclose(lstsq(np.array([[1.0], [1.0]]), np.array([[1.0], [3.0]])), [[2.0]])


def test_lstsq_matches_normal_equations():
    rng = np.random.default_rng(3)
    A = rng.standard_normal((8, 3))
    B = rng.standard_normal((8, 2))
    oracle = np.linalg.solve(A.T @ A, A.T @ B)
    assert np.linalg.norm(lstsq(A, B) - oracle) <= 1e-10


def test_lstsq_vector_rhs_and_empty_columns():
    A = np.array([[1.0, 0.0], [0.0, 2.0], [0.0, 0.0]])
    np.testing.assert_allclose(lstsq(A, np.array([1.0, 4.0, 7.0])), [1.0, 2.0])
    assert lstsq(np.zeros((3, 0)), np.ones((3, 2))).shape == (0, 2)


def test_lstsq_rank_deficient_raises():
    A = np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]])
    with pytest.raises(RankDeficient):
        lstsq(A, np.ones((3, 1)))
    with pytest.raises(RankDeficient):
        lstsq(np.ones((2, 3)), np.ones((2, 1)))


def test_lstsq_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        lstsq(np.eye(3), np.ones((2, 1)))


def test_min_norm_fallback_matches_pinv():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((6, 2))
    A = np.hstack([A, A[:, :1]])
    B = rng.standard_normal((6, 2))
    np.testing.assert_allclose(lstsq_min_norm(A, B), np.linalg.pinv(A) @ B, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 6), st.integers(0, 4), st.integers(1, 3))
def test_lstsq_residual_orthogonal(seed, n, extra, L):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n + extra, n))
    B = rng.standard_normal((n + extra, L))
    X = lstsq(A, B)
    ortho = np.linalg.norm(A.T @ (A @ X - B))
    assert ortho <= 1e-8 * np.linalg.norm(A) * np.linalg.norm(B)


def test_numerical_rank():
    assert numerical_rank(np.zeros((3, 3))) == 0
    assert numerical_rank(np.diag([1.0, 1e-12, 1.0])) == 2
    assert numerical_rank(np.eye(4)) == 4


def test_row_norms_examples():
    np.testing.assert_array_equal(row_l2_norms(np.zeros((3, 2))), np.zeros(3))
    np.testing.assert_allclose(row_l2_norms(np.array([[3.0, 4.0], [0.0, 0.0]])), [5.0, 0.0])


def test_row_norms_match_direct_sum():
    X = np.random.default_rng(1).standard_normal((20, 7))
    oracle = np.array([np.sqrt(sum(v * v for v in row)) for row in X])
    np.testing.assert_allclose(row_l2_norms(X), oracle, rtol=0, atol=1e-12)


def test_mixed_norm_examples():
    assert mixed_norm(np.eye(3), 2, 1) == pytest.approx(3.0)
    assert mixed_norm(np.array([[3.0, 4.0]]), 2, 1) == pytest.approx(5.0)
    X = np.random.default_rng(2).standard_normal((9, 4))
    assert mixed_norm(X, 2, 2) == pytest.approx(np.linalg.norm(X), rel=1e-12)
    assert mixed_norm(X, 2, np.inf) == pytest.approx(row_l2_norms(X).max())
    assert mixed_norm(X, 1, 1) == pytest.approx(np.abs(X).sum())
    with pytest.raises(ValueError):
        mixed_norm(X, 0.5, 1)


@settings(max_examples=100, deadline=None)
@given(mats())
def test_mixed_norm_ordering(X):
    if not np.any(X):
        return
    n21, nf, n2inf = mixed_norm(X, 2, 1), mixed_norm(X, 2, 2), mixed_norm(X, 2, np.inf)
    assert nf == pytest.approx(np.linalg.norm(X), rel=1e-12)
    assert n21 >= nf * (1 - 1e-12)
    assert nf >= n2inf * (1 - 1e-12)


def test_top_k_examples():
    X = np.array([[1.0, 0.0], [3.0, 4.0], [0.0, 5.0], [0.0, 0.0]])
    np.testing.assert_array_equal(top_k_rows(X, 2), [1, 2])
    np.testing.assert_array_equal(top_k_rows(np.full((3, 1), 2.0), 2), [0, 1])
    with pytest.raises(ValueError):
        top_k_rows(X, 5)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 50))
def test_top_k_matches_sort_oracle(seed, K):
    rng = np.random.default_rng(seed)
    X = rng.integers(-3, 4, size=(50, 3)).astype(float)  # integer entries create ties
    norms = [float(np.sqrt(np.sum(r * r))) for r in X]
    oracle = sorted(sorted(range(50), key=lambda i: (-norms[i], i))[:K])
    np.testing.assert_array_equal(top_k_rows(X, K), oracle)
    np.testing.assert_array_equal(top_k_rows(X, K), top_k_rows(X.copy(), K))


def test_keep_top_k_rows_zeroes_the_rest():
    X = np.array([[1.0], [-3.0], [2.0]])
    np.testing.assert_array_equal(keep_top_k_rows(X, 2), [[0.0], [-3.0], [2.0]])


def test_index_set_canonical():
    np.testing.assert_array_equal(index_set([5, 1, 5, 3]), [1, 3, 5])
    assert index_set().size == 0
    assert index_set(i for i in (2, 0)).tolist() == [0, 2]
    with pytest.raises(IndexError):
        index_set([0, 4], dim=4)
    with pytest.raises(IndexError):
        index_set([-1])


def test_as_mat_and_embed():
    assert as_mat([1.0, 2.0]).shape == (2, 1)
    with pytest.raises(ValueError):
        as_mat([[np.nan]])
    with pytest.raises(DimensionMismatch):
        as_mat(np.zeros((2, 2, 2)))
    out = embed_rows(np.ones((2, 3)), np.array([1, 3]), 5)
    assert out.shape == (5, 3) and out[[0, 2, 4]].sum() == 0 and out[[1, 3]].sum() == 6
