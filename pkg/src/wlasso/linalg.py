"""Structured linear algebra used throughout the package.

Dense matrices are plain 2-d ``numpy`` arrays.  Vectorization is
column-major, so ``(A kron B) vec(M) == vec(B @ M @ A.T)``.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, toeplitz

from .errors import DimensionMismatch, NotPositiveDefinite, RankDeficient

PD_EPS = 1e-12


def vec(M):
    """Stack the columns of ``M`` into one vector."""
    return np.asarray(M, dtype=float).reshape(-1, order="F")


def unvec(v, rows, cols):
    return np.asarray(v, dtype=float).reshape(rows, cols, order="F")


def as_matrix(A, name="matrix"):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-d, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} has non-finite entries")
    return A


@dataclass(frozen=True)
class SymmetricToeplitz:
    """Symmetric Toeplitz matrix stored by its first row ``r_0 .. r_{q-1}``."""

    first_row: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.first_row, dtype=float).ravel()
        if r.size == 0 or not r[0] > 0:
            raise ValueError("first_row[0] must be positive")
        r.setflags(write=False)
        object.__setattr__(self, "first_row", r)

    @property
    def dim(self):
        return self.first_row.size

    def materialize(self):
        return toeplitz(self.first_row)


@dataclass(frozen=True)
class KroneckerOperator:
    """Implicit ``left kron right``; never forms the product matrix."""

    left: np.ndarray
    right: np.ndarray

    @property
    def shape(self):
        (a, b), (c, d) = self.left.shape, self.right.shape
        return a * c, b * d

    def apply(self, v):
        return kron_apply(self, v)

    def apply_transpose(self, v):
        return kron_apply(KroneckerOperator(self.left.T, self.right.T), v)

    def materialize(self):
        """Dense product.  Only for tests and tiny problems."""
        return np.kron(self.left, self.right)


def kron_apply(op, v):
    """Compute ``(left kron right) @ v`` as ``vec(right @ V @ left.T)``."""
    v = np.asarray(v, dtype=float)
    nr = op.right.shape[1]
    nl = op.left.shape[1]
    if v.ndim != 1 or v.size != nr * nl:
        raise DimensionMismatch(
            f"vector of length {v.size} does not match operator with "
            f"{nl * nr} columns"
        )
    V = unvec(v, nr, nl)
    return vec(op.right @ V @ op.left.T)


def cholesky_lower(S, eps=PD_EPS):
    """Lower Cholesky factor ``L`` with ``L @ L.T == S``.

    Raises NotPositiveDefinite when ``S`` is not symmetric or a squared pivot
    falls below ``eps * trace(S) / dim``.
    """
    S = as_matrix(S, "S")
    if S.shape[0] != S.shape[1]:
        raise DimensionMismatch(f"S must be square, got {S.shape}")
    scale = np.max(np.abs(S)) if S.size else 0.0
    if not np.allclose(S, S.T, rtol=0.0, atol=1e-12 * max(scale, 1.0)):
        raise NotPositiveDefinite("matrix is not symmetric")
    dim = S.shape[0]
    threshold = eps * np.trace(S) / dim
    if not threshold > 0:
        raise NotPositiveDefinite("matrix has non-positive trace")
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    pivots = np.diag(L) ** 2
    if np.min(pivots) <= threshold:
        k = int(np.argmin(pivots))
        raise NotPositiveDefinite(f"pivot {k} = {pivots[k]:.3g} below {threshold:.3g}")
    return np.tril(L)


def gram_cholesky(X):
    """Cholesky factor of ``X.T @ X``; RankDeficient if ``X`` lacks full column rank."""
    X = as_matrix(X, "X")
    n, p = X.shape
    if p > n:
        raise RankDeficient(f"X has more columns ({p}) than rows ({n})")
    try:
        return cholesky_lower(X.T @ X)
    except NotPositiveDefinite as exc:
        raise RankDeficient(f"X'X is singular: {exc}") from None


def projection_complement(X):
    """Projector ``I - X (X'X)^{-1} X'`` onto the orthogonal complement of col(X)."""
    X = as_matrix(X, "X")
    L = gram_cholesky(X)
    H = X @ cho_solve((L, True), X.T)
    P = np.eye(X.shape[0]) - H
    return 0.5 * (P + P.T)
