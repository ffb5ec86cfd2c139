"""Whitened, vectorized form of the multivariate linear model.

With ``Y = X B + E`` and a precision factor ``half`` (``half @ half.T`` is the
inverse row covariance), right-multiplying by ``half`` and vectorizing gives
``vec(Y half) = (half.T kron X) vec(B) + vec(E half)``.  The design on the
right-hand side is kept implicit; the solver only needs its Gram matrix
``sigma_inv kron X'X`` and the correlation vector ``vec(X' Y sigma_inv)``.

Coordinate ``j`` (0-based) of ``vec(B)`` is row ``j % p``, column ``j // p``
of ``B``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch
from .linalg import KroneckerOperator, as_matrix, kron_apply, unvec, vec


@dataclass(frozen=True)
class ProblemShape:
    n: int
    p: int
    q: int

    def __post_init__(self):
        if min(self.n, self.p, self.q) < 1:
            raise DimensionMismatch(f"all dimensions must be >= 1, got {self}")

    @property
    def n_coef(self):
        return self.p * self.q

    def coord(self, j):
        """``(row r, column k)`` of ``B`` for 0-based coordinate ``j``."""
        return j % self.p, j // self.p

    def index(self, r, k):
        return k * self.p + r


@dataclass(frozen=True)
class VectorizedProblem:
    shape: ProblemShape
    design_op: KroneckerOperator
    y_vec: np.ndarray
    gram_left: np.ndarray
    gram_right: np.ndarray
    xty: np.ndarray

    @property
    def lambda_max(self):
        """Smallest penalty whose solution is identically zero."""
        return 2.0 * float(np.max(np.abs(self.xty))) if self.xty.size else 0.0

    def gram_diag(self):
        return np.kron(np.diag(self.gram_left), np.diag(self.gram_right))

    def gram_matvec(self, beta):
        return kron_apply(KroneckerOperator(self.gram_left, self.gram_right), beta)

    def gram_submatrix(self, rows, cols):
        """Entries of ``gram_left kron gram_right`` without forming it."""
        p = self.shape.p
        rows = np.asarray(rows, dtype=np.intp)
        cols = np.asarray(cols, dtype=np.intp)
        GL = self.gram_left[np.ix_(rows // p, cols // p)]
        GR = self.gram_right[np.ix_(rows % p, cols % p)]
        return GL * GR

    def gradient(self, beta):
        """``X'(Y - X beta)`` in the whitened coordinates."""
        return self.xty - self.gram_matvec(beta)

    def objective(self, beta, lam):
        r = residual_vector(self, beta)
        return float(r @ r + lam * np.sum(np.abs(beta)))


def build_problem(Y, X, factor):
    Y = as_matrix(Y, "Y")
    X = as_matrix(X, "X")
    n, p = X.shape
    if Y.shape[0] != n:
        raise DimensionMismatch(f"Y has {Y.shape[0]} rows but X has {n}")
    q = Y.shape[1]
    if factor.dim != q:
        raise DimensionMismatch(f"precision factor has dim {factor.dim}, Y has {q} columns")
    half = factor.half
    YH = Y @ half
    gram_left = half @ half.T
    return VectorizedProblem(
        shape=ProblemShape(n, p, q),
        design_op=KroneckerOperator(half.T, X),
        y_vec=vec(YH),
        gram_left=gram_left,
        gram_right=X.T @ X,
        xty=vec(X.T @ YH @ half.T),
    )


def residual_vector(prob, beta):
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (prob.shape.n_coef,):
        raise DimensionMismatch(f"beta must have length {prob.shape.n_coef}, got {beta.shape}")
    return prob.y_vec - prob.design_op.apply(beta)


def coef_matrix(prob, beta):
    """Reshape a coefficient vector back into the ``p x q`` matrix ``B``."""
    return unvec(beta, prob.shape.p, prob.shape.q)


def design_problem(X, factor):
    """Problem with zero responses; enough for Gram-only quantities such as audits."""
    X = as_matrix(X, "X")
    return build_problem(np.zeros((X.shape[0], factor.dim)), X, factor)
