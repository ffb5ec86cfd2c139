"""Response covariance models: construction, estimation from residuals, precision factors."""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_solve

from .errors import DegenerateResiduals, DimensionMismatch, NonStationaryFit
from .linalg import SymmetricToeplitz, as_matrix, cholesky_lower, gram_cholesky

PHI_CLAMP = 1e-6
STATIONARY_RADIUS = 1.001


def ar_roots(coeffs):
    """Roots of ``1 - phi_1 z - ... - phi_m z^m``."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.size == 0 or not np.any(coeffs):
        return np.array([], dtype=complex)
    poly = np.concatenate([-coeffs[::-1], [1.0]])
    poly = np.trim_zeros(poly, "f")
    return np.roots(poly)


def is_stationary(coeffs, radius=1.0):
    roots = ar_roots(coeffs)
    return bool(roots.size == 0 or np.min(np.abs(roots)) > radius)


def ar_autocovariance(coeffs, sigma2, nlags):
    """Autocovariances ``gamma_0 .. gamma_{nlags-1}`` of a causal AR process.

    Solves the first ``m + 1`` Yule-Walker equations for ``gamma_0..gamma_m``
    and extends with the recursion ``gamma_h = sum_i phi_i gamma_{h-i}``.
    """
    phi = np.asarray(coeffs, dtype=float)
    m = phi.size
    A = np.eye(m + 1)
    for h in range(m + 1):
        for i in range(1, m + 1):
            A[h, abs(h - i)] -= phi[i - 1]
    rhs = np.zeros(m + 1)
    rhs[0] = sigma2
    head = np.linalg.solve(A, rhs)
    gamma = np.empty(max(nlags, m + 1))
    gamma[: m + 1] = head
    for h in range(m + 1, gamma.size):
        gamma[h] = phi @ gamma[h - m : h][::-1]
    return gamma[:nlags]


@dataclass(frozen=True)
class CovarianceModel:
    """Stationary covariance of one row of the noise matrix.

    ``kind`` is ``"ar1"``, ``"arm"`` or ``"toeplitz"``.  AR kinds keep their
    coefficients and innovation variance; ``"toeplitz"`` keeps the first row.
    """

    kind: str
    dim: int
    coeffs: tuple = ()
    sigma2: float = 1.0
    first_row: tuple = field(default=(), repr=False)

    def __post_init__(self):
        if self.dim < 1:
            raise DimensionMismatch("covariance dimension must be >= 1")
        if self.kind == "ar1":
            if len(self.coeffs) != 1 or not abs(self.coeffs[0]) < 1:
                raise NonStationaryFit(f"AR(1) needs |phi_1| < 1, got {self.coeffs}")
        elif self.kind == "arm":
            if len(self.coeffs) < 1 or not is_stationary(self.coeffs):
                raise NonStationaryFit(f"AR coefficients {self.coeffs} are not stationary")
        elif self.kind == "toeplitz":
            if len(self.first_row) != self.dim:
                raise DimensionMismatch("first_row length must equal dim")
        else:
            raise ValueError(f"unknown covariance kind {self.kind!r}")
        if self.kind != "toeplitz" and not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")

    @classmethod
    def ar1(cls, phi1, q, sigma2=1.0):
        return cls("ar1", int(q), (float(phi1),), float(sigma2))

    @classmethod
    def arm(cls, coeffs, q, sigma2=1.0):
        return cls("arm", int(q), tuple(float(c) for c in coeffs), float(sigma2))

    @classmethod
    def toeplitz(cls, first_row):
        row = tuple(float(r) for r in np.ravel(first_row))
        return cls("toeplitz", len(row), first_row=row)

    @classmethod
    def identity(cls, q):
        return cls.ar1(0.0, q)

    @property
    def order(self):
        return len(self.coeffs)

    def with_unit_variance(self):
        if self.kind == "toeplitz":
            r = np.asarray(self.first_row)
            return CovarianceModel.toeplitz(r / r[0])
        return replace(self, sigma2=1.0)

    def to_dict(self):
        d = {"kind": self.kind, "dim": self.dim}
        if self.kind == "toeplitz":
            d["first_row"] = list(self.first_row)
        else:
            d["coeffs"] = list(self.coeffs)
            d["sigma2"] = self.sigma2
        return d

    @classmethod
    def from_dict(cls, d):
        kind = d["kind"]
        if kind == "toeplitz":
            return cls.toeplitz(d["first_row"])
        return cls(kind, int(d["dim"]), tuple(float(c) for c in d["coeffs"]), float(d.get("sigma2", 1.0)))


@dataclass(frozen=True)
class PrecisionFactor:
    """``sigma_inv`` and its lower Cholesky factor ``half`` (``half @ half.T == sigma_inv``)."""

    sigma_inv: np.ndarray
    half: np.ndarray

    @property
    def dim(self):
        return self.half.shape[0]

    @classmethod
    def identity(cls, q):
        return cls(np.eye(q), np.eye(q))


@dataclass(frozen=True)
class ResidualEstimate:
    e_hat: np.ndarray
    projector_trace: float


def materialize_sigma(model):
    """Covariance of one noise row as a symmetric Toeplitz matrix."""
    q = model.dim
    if model.kind == "toeplitz":
        return SymmetricToeplitz(np.asarray(model.first_row))
    if model.kind == "ar1":
        phi = model.coeffs[0]
        row = model.sigma2 * phi ** np.arange(q) / (1.0 - phi * phi)
        return SymmetricToeplitz(row)
    return SymmetricToeplitz(ar_autocovariance(model.coeffs, model.sigma2, q))


def ar1_precision(phi1, q, sigma2=1.0):
    """Closed-form tridiagonal inverse of the AR(1) covariance."""
    diag = np.full(q, 1.0 + phi1 * phi1)
    diag[0] = diag[-1] = 1.0
    P = np.diag(diag)
    if q > 1:
        idx = np.arange(q - 1)
        P[idx, idx + 1] = P[idx + 1, idx] = -phi1
    else:
        P[0, 0] = 1.0 - phi1 * phi1
    return P / sigma2


def build_precision(model):
    if model.kind == "ar1":
        sigma_inv = ar1_precision(model.coeffs[0], model.dim, model.sigma2)
    else:
        S = materialize_sigma(model).materialize()
        L = cholesky_lower(S)
        sigma_inv = cho_solve((L, True), np.eye(model.dim))
        sigma_inv = 0.5 * (sigma_inv + sigma_inv.T)
    return PrecisionFactor(sigma_inv, cholesky_lower(sigma_inv))


def extract_residuals(Y, X):
    """Column-wise OLS residuals ``(I - X (X'X)^{-1} X') Y``."""
    Y = as_matrix(Y, "Y")
    X = as_matrix(X, "X")
    n, p = X.shape
    if Y.shape[0] != n:
        raise DimensionMismatch(f"Y has {Y.shape[0]} rows but X has {n}")
    if p >= n:
        raise DimensionMismatch(f"residual estimation needs p < n (p={p}, n={n})")
    L = gram_cholesky(X)
    coef = cho_solve((L, True), X.T @ Y)
    return ResidualEstimate(Y - X @ coef, float(n - p))


def estimate_phi1(res, clamp=PHI_CLAMP):
    """Pooled lag-one ratio of the residuals, clamped inside (-1, 1)."""
    E = np.asarray(res.e_hat, dtype=float)
    n, q = E.shape
    if q < 2:
        raise DimensionMismatch("estimating phi_1 needs q >= 2")
    num = np.sum(E[:, 1:] * E[:, :-1])
    den = np.sum(E[:, :-1] ** 2)
    if den < 1e-14 * n * q:
        raise DegenerateResiduals(f"residual energy {den:.3g} is too small")
    return float(np.clip(num / den, -1.0 + clamp, 1.0 - clamp))


def yule_walker(acov, m):
    """AR(m) coefficients and innovation variance from autocovariances ``gamma_0..gamma_m``.

    ``acov`` may be 1-d or a stack of sequences (one per row).
    """
    g = np.atleast_2d(np.asarray(acov, dtype=float))
    idx = np.abs(np.subtract.outer(np.arange(m), np.arange(m)))
    R = g[:, idx]
    r = g[:, 1 : m + 1]
    phi = np.linalg.solve(R, r[..., None])[..., 0]
    sigma2 = g[:, 0] - np.sum(phi * r, axis=1)
    if np.ndim(acov) == 1:
        return phi[0], float(sigma2[0])
    return phi, sigma2


def sample_autocovariance(E, maxlag):
    """Biased (divide by q) autocovariances of each row, lags ``0..maxlag``."""
    E = np.asarray(E, dtype=float)
    q = E.shape[1]
    out = np.empty((E.shape[0], maxlag + 1))
    for h in range(maxlag + 1):
        out[:, h] = np.sum(E[:, h:] * E[:, : q - h], axis=1) / q
    return out


def project_stationary(coeffs, radius=STATIONARY_RADIUS, resolution=1e-6):
    """Shrink ``coeffs`` toward zero just enough that every root lies beyond ``radius``."""
    coeffs = np.asarray(coeffs, dtype=float)
    if is_stationary(coeffs, 1.0):
        return coeffs
    lo, hi = 0.0, 1.0
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if is_stationary(mid * coeffs, radius):
            lo = mid
        else:
            hi = mid
    out = lo * coeffs
    if not is_stationary(out, 1.0):
        raise NonStationaryFit(f"could not project {coeffs} to stationarity")
    return out


def estimate_arm(res, m):
    """Row-wise Yule-Walker AR(m) fits averaged over the rows of the residuals."""
    E = np.asarray(res.e_hat, dtype=float)
    n, q = E.shape
    if m < 1 or q <= 2 * m:
        raise DimensionMismatch(f"AR({m}) fitting needs q > 2m, got q={q}")
    g = sample_autocovariance(E, m)
    usable = g[:, 0] > 1e-14
    if not np.any(usable) or np.sum(g[:, 0]) * q < 1e-14 * n * q:
        raise DegenerateResiduals("all residual rows are numerically zero")
    phi, s2 = yule_walker(g[usable], m)
    coeffs = project_stationary(phi.mean(axis=0))
    sigma2 = float(np.mean(s2))
    if not sigma2 > 0:
        raise DegenerateResiduals("non-positive innovation variance estimate")
    return CovarianceModel.arm(coeffs, q, sigma2)


def estimate_ar1_model(res):
    """AR(1) model with the pooled ``phi_1`` estimate and its innovation variance."""
    phi = estimate_phi1(res)
    E = res.e_hat
    sigma2 = float(np.mean((E[:, 1:] - phi * E[:, :-1]) ** 2))
    return CovarianceModel.ar1(phi, E.shape[1], max(sigma2, np.finfo(float).tiny))


def estimate_covariance(res, order):
    """AR(1) through the pooled ratio, AR(m) through row averaging."""
    if order == 1:
        return estimate_ar1_model(res)
    return estimate_arm(res, order)

