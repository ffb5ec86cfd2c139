"""Finite-sample audits of the sign-consistency conditions.

Everything is computed from the Kronecker Gram ``sigma_inv kron X'X``; the
whitened design is never formed.
"""

from dataclasses import asdict, dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .errors import InvalidExponents, NotDiagonallyDominant, SingularSubGram


@dataclass(frozen=True)
class ICReport:
    lhs: np.ndarray
    max_lhs: float
    eta: float
    holds: bool

    def to_dict(self):
        return {"lhs": self.lhs.tolist(), "max_lhs": self.max_lhs, "eta": self.eta, "holds": self.holds}


@dataclass(frozen=True)
class PlacementCheck:
    """Support placement used by the closed-form AR(1) bound.

    ``interior``: every support index ``j`` (1-based) has ``p < j < pq - p``.
    ``no_sandwich``: no index ``j`` in ``1..pq`` has both ``j - p`` and ``j + p``
    in the support.
    """

    interior: bool
    no_sandwich: bool

    @property
    def passed(self):
        return self.interior and self.no_sandwich


@dataclass(frozen=True)
class AssumptionAudit:
    n: int
    p: int
    q: int
    support_size: int
    c1: float
    c2: float
    m1_bound: float
    m2_bound: float | None
    min_beta_scaled: float | None
    sparsity_ratio: float
    nu: float
    x_orth_defect: float
    xtx_col_max: float
    xtx_min_eig: float
    xtx_inf_norm: float
    sigma_inv_max_eig: float
    sigma_inv_min_eig: float
    lambda_window: tuple
    lambda_window_heuristic: bool
    placement: PlacementCheck

    def to_dict(self):
        d = asdict(self)
        d["lambda_window"] = list(self.lambda_window)
        d["placement"] = {**asdict(self.placement), "passed": self.placement.passed}
        return d


def _split(prob, truth):
    n_coef = prob.shape.n_coef
    J = np.asarray(truth.indices, dtype=np.intp)
    mask = np.ones(n_coef, dtype=bool)
    mask[J] = False
    return J, np.flatnonzero(mask)


def check_ic(prob, truth):
    """Irrepresentable-condition left-hand side over the complement of the support."""
    J, Jc = _split(prob, truth)
    if J.size == 0:
        lhs = np.zeros(Jc.size)
    else:
        S_JJ = prob.gram_submatrix(J, J)
        try:
            c = cho_factor(S_JJ, lower=True)
        except LinAlgError:
            raise SingularSubGram("Gram submatrix on the support is singular") from None
        if np.min(np.abs(np.diag(c[0]))) ** 2 <= 1e-12 * np.trace(S_JJ) / J.size:
            raise SingularSubGram("Gram submatrix on the support is numerically singular")
        w = cho_solve(c, np.asarray(truth.signs, dtype=float))
        lhs = np.abs(prob.gram_submatrix(Jc, J) @ w)
    max_lhs = float(lhs.max()) if lhs.size else 0.0
    return ICReport(lhs, max_lhs, 1.0 - max_lhs, max_lhs < 1.0)


def ar1_ic_bound(phi1):
    a = abs(phi1)
    if not a < 1:
        raise ValueError("|phi_1| must be < 1")
    return a / (1.0 + a * a - a)


def varah_bound(A):
    """Upper bound on ``||A^{-1}||_inf`` for a strictly diagonally dominant ``A``."""
    A = np.asarray(A, dtype=float)
    diag = np.abs(np.diag(A))
    off = np.sum(np.abs(A), axis=1) - diag
    gap = diag - off
    if A.size == 0 or np.min(gap) <= 0:
        raise NotDiagonallyDominant("matrix is not strictly diagonally dominant")
    return float(1.0 / np.min(gap))


def placement_check(indices, p, q):
    """Check the AR(1) placement hypotheses; ``indices`` are 0-based."""
    J = {int(i) + 1 for i in indices}
    pq = p * q
    interior = all(p < j < pq - p for j in J)
    no_sandwich = not any((j - p) in J and (j + p) in J for j in range(1, pq + 1))
    return PlacementCheck(interior, no_sandwich)


def audit_assumptions(prob, truth, c1, c2, beta=None):
    if not (c1 >= 0 and c2 >= 0 and 0 < c1 + c2 < 0.5):
        raise InvalidExponents(f"need c1, c2 >= 0 and 0 < c1 + c2 < 1/2, got c1={c1}, c2={c2}")
    n, p, q = prob.shape.n, prob.shape.p, prob.shape.q
    J, _ = _split(prob, truth)
    XtX = prob.gram_right
    m1 = float(np.max(prob.gram_diag()) / n)
    m2 = None
    if J.size:
        m2 = float(np.linalg.eigvalsh(prob.gram_submatrix(J, J))[0] / n)
    min_beta = None
    if beta is not None and J.size:
        min_beta = float(q ** c2 * np.min(np.abs(np.asarray(beta)[J])))
    nu = float(np.trace(XtX) / p)
    defect = float(np.max(np.sum(np.abs(XtX - nu * np.eye(p)), axis=1)) / nu)
    xtx_eigs = np.linalg.eigvalsh(XtX)
    s_eigs = np.linalg.eigvalsh(prob.gram_left)
    window = (float(np.sqrt(n) * np.log(n)), float(n * q ** (-(c1 + c2))))
    return AssumptionAudit(
        n=n, p=p, q=q, support_size=int(J.size), c1=float(c1), c2=float(c2),
        m1_bound=m1, m2_bound=m2, min_beta_scaled=min_beta,
        sparsity_ratio=float(J.size / q ** c1),
        nu=nu, x_orth_defect=defect,
        xtx_col_max=float(np.max(np.diag(XtX)) / n),
        xtx_min_eig=float(xtx_eigs[0] / n),
        xtx_inf_norm=float(np.max(np.sum(np.abs(XtX), axis=1)) / n),
        sigma_inv_max_eig=float(s_eigs[-1]),
        sigma_inv_min_eig=float(s_eigs[0]),
        lambda_window=window,
        lambda_window_heuristic=True,
        placement=placement_check(J, p, q),
    )
