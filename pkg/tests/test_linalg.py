import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wlasso.errors import DimensionMismatch, NotPositiveDefinite, RankDeficient
from wlasso.linalg import (
    KroneckerOperator,
    SymmetricToeplitz,
    cholesky_lower,
    kron_apply,
    projection_complement,
    unvec,
    vec,
)


def ar1_cov(phi, q):
    h = np.abs(np.subtract.outer(np.arange(q), np.arange(q)))
    return phi**h / (1 - phi**2)


def test_cholesky_identity():
    assert np.array_equal(cholesky_lower(np.eye(3)), np.eye(3))


def test_cholesky_diagonal():
    np.testing.assert_allclose(cholesky_lower([[4.0, 0.0], [0.0, 9.0]]), [[2.0, 0.0], [0.0, 3.0]])


def test_cholesky_ar1_precision_matches_dense_inverse():
    prec = np.linalg.inv(ar1_cov(0.5, 4))
    L = cholesky_lower(prec)
    assert np.all(np.triu(L, 1) == 0.0)
    np.testing.assert_allclose(L @ L.T, prec, rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("S", [
    [[1.0, 2.0], [2.0, 1.0]],
    [[1.0, 0.0], [0.0, 0.0]],
    [[1.0, 0.5], [0.4, 1.0]],
])
def test_cholesky_rejects(S):
    with pytest.raises(NotPositiveDefinite):
        cholesky_lower(S)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_cholesky_reconstructs(dim, seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((dim, dim))
    S = A @ A.T + dim * np.eye(dim)
    L = cholesky_lower(S)
    assert np.all(np.triu(L, 1) == 0.0)
    assert np.max(np.abs(L @ L.T - S)) <= 1e-10 * np.max(np.abs(S))


def test_kron_apply_identity():
    v = np.arange(6.0)
    op = KroneckerOperator(np.eye(2), np.eye(3))
    np.testing.assert_array_equal(kron_apply(op, v), v)


def test_kron_apply_scalar():
    op = KroneckerOperator(2 * np.eye(2), np.eye(2))
    np.testing.assert_array_equal(kron_apply(op, [1.0, 2.0, 3.0, 4.0]), [2.0, 4.0, 6.0, 8.0])


def test_kron_apply_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        kron_apply(KroneckerOperator(np.eye(2), np.eye(3)), np.ones(5))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 6), st.integers(1, 6),
       st.integers(0, 2**32 - 1))
def test_kron_apply_matches_materialized(a, b, c, d, seed):
    rng = np.random.default_rng(seed)
    op = KroneckerOperator(rng.standard_normal((a, b)), rng.standard_normal((c, d)))
    v = rng.standard_normal(b * d)
    dense = np.kron(op.left, op.right) @ v
    got = kron_apply(op, v)
    assert np.linalg.norm(got - dense) <= 1e-10 * max(np.linalg.norm(dense), 1.0)
    w = rng.standard_normal(a * c)
    np.testing.assert_allclose(op.apply_transpose(w), np.kron(op.left, op.right).T @ w, atol=1e-10)


def test_vec_is_column_major():
    M = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    np.testing.assert_array_equal(vec(M), [1, 3, 5, 2, 4, 6])
    np.testing.assert_array_equal(unvec(vec(M), 3, 2), M)


def test_projection_single_axis():
    P = projection_complement(np.array([[1.0], [0.0]]))
    np.testing.assert_allclose(P, [[0.0, 0.0], [0.0, 1.0]], atol=1e-15)


def test_projection_full_column_space():
    np.testing.assert_allclose(projection_complement(np.eye(4)), np.zeros((4, 4)), atol=1e-15)


def test_projection_balanced_anova():
    X = np.array([[1, 0], [1, 0], [0, 1], [0, 1]], dtype=float)
    P = projection_complement(X)
    assert np.trace(P) == pytest.approx(2.0, abs=1e-12)
    np.testing.assert_allclose(P @ P, P, atol=1e-12)
    block = np.array([[0.5, -0.5], [-0.5, 0.5]])
    np.testing.assert_allclose(P[:2, :2], block, atol=1e-12)
    np.testing.assert_allclose(P[:2, 2:], 0.0, atol=1e-12)


def test_projection_rank_deficient():
    X = np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]])
    with pytest.raises(RankDeficient):
        projection_complement(X)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.integers(0, 6), st.integers(0, 2**32 - 1))
def test_projection_properties(p, extra, seed):
    n = p + extra + 1
    X = np.random.default_rng(seed).standard_normal((n, p))
    P = projection_complement(X)
    np.testing.assert_allclose(P @ P, P, atol=1e-8)
    np.testing.assert_allclose(P, P.T, atol=1e-8)
    np.testing.assert_allclose(P @ X, 0.0, atol=1e-8)
    assert np.trace(P) == pytest.approx(n - p, abs=1e-8)


def test_toeplitz_materialize():
    T = SymmetricToeplitz([3.0, 1.0, 0.5]).materialize()
    np.testing.assert_array_equal(T, [[3, 1, 0.5], [1, 3, 1], [0.5, 1, 3]])
    with pytest.raises(ValueError):
        SymmetricToeplitz([0.0, 1.0])
