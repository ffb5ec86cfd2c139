"""LASSO on the whitened, vectorized problem by cyclic coordinate descent.

The criterion is ``||y - X beta||^2 + lam * ||beta||_1`` with no ``1/(2n)``
scaling, so the smallest all-zero penalty is ``2 * max|X'y|``.  The solver never
touches the design itself: coordinate updates move the gradient
``X'y - X'X beta`` through the two Kronecker Gram factors, skipping their
structural zeros (tridiagonal for AR(1), diagonal for cell-means ANOVA).
"""

from dataclasses import dataclass

import numba
import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .errors import DimensionMismatch, NotConverged

MAX_POLISH = 3000
DENSE_GRAM_MAX = 1200
POLISH_EVERY = 10


@dataclass(frozen=True)
class LassoConfig:
    n_lambda: int = 100
    lambda_min_ratio: float = 1e-3
    # stopping rule for a sweep: max_j G_jj |delta beta_j| < tol_ratio * lambda_max / 2
    tol_ratio: float = 1e-9
    kkt_tol_ratio: float = 1e-6
    max_sweeps: int = 20000
    debug: bool = False

    def __post_init__(self):
        if self.n_lambda < 1:
            raise ValueError("n_lambda must be >= 1")
        if not 0 < self.lambda_min_ratio < 1:
            raise ValueError("lambda_min_ratio must lie in (0, 1)")
        if not (self.tol_ratio > 0 and self.kkt_tol_ratio > 0):
            raise ValueError("tolerances must be positive")

    def grid(self, lambda_max):
        """Log-spaced penalties from ``lambda_max`` down to ``lambda_max * lambda_min_ratio``."""
        if self.n_lambda == 1:
            return np.array([lambda_max], dtype=float)
        return lambda_max * np.logspace(0.0, np.log10(self.lambda_min_ratio), self.n_lambda)


@dataclass(frozen=True)
class LassoPath:
    lambdas: np.ndarray
    betas: np.ndarray  # (n_lambda, pq)
    sweeps_used: np.ndarray
    kkt_residuals: np.ndarray

    def __len__(self):
        return self.lambdas.size


@dataclass(frozen=True)
class SupportSpec:
    """Nonzero coordinates (0-based, sorted) of a coefficient vector and their signs."""

    indices: tuple
    signs: tuple

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        sg = tuple(int(s) for s in self.signs)
        if len(idx) != len(sg):
            raise ValueError("indices and signs differ in length")
        if len(set(idx)) != len(idx):
            raise ValueError("support indices must be distinct")
        if any(s not in (-1, 1) for s in sg):
            raise ValueError("signs must be -1 or +1")
        order = sorted(range(len(idx)), key=idx.__getitem__)
        object.__setattr__(self, "indices", tuple(idx[i] for i in order))
        object.__setattr__(self, "signs", tuple(sg[i] for i in order))

    @classmethod
    def from_beta(cls, beta):
        beta = np.asarray(beta)
        idx = np.flatnonzero(beta)
        return cls(tuple(idx), tuple(np.sign(beta[idx]).astype(int)))

    def sign_vector(self, size):
        if self.indices and max(self.indices) >= size:
            raise DimensionMismatch(f"support index {max(self.indices)} out of range for size {size}")
        out = np.zeros(size, dtype=np.int8)
        out[list(self.indices)] = self.signs
        return out

    def __len__(self):
        return len(self.indices)


@dataclass(frozen=True)
class Recovery:
    any_lambda: bool
    best_lambda: float | None


def _nonzero_structure(G):
    """CSC-style lists of the structurally nonzero rows of each column of ``G``."""
    mask = G != 0.0
    counts = mask.sum(axis=0)
    ptr = np.zeros(G.shape[1] + 1, dtype=np.int64)
    np.cumsum(counts, out=ptr[1:])
    idx = np.nonzero(mask.T)[1].astype(np.int64)
    return ptr, idx


@numba.njit(cache=True)
def _cd_kernel(GL, GR, lptr, lidx, rptr, ridx, beta, grad, lam, coords, max_sweeps, tol):
    p = GR.shape[0]
    sweeps = 0
    change = np.inf
    while sweeps < max_sweeps:
        sweeps += 1
        change = 0.0
        for t in range(coords.size):
            j = coords[t]
            k = j // p
            r = j - k * p
            d = 2.0 * GL[k, k] * GR[r, r]
            if d <= 0.0:
                continue
            old = beta[j]
            z = 2.0 * grad[j] + d * old
            if z > lam:
                new = (z - lam) / d
            elif z < -lam:
                new = (z + lam) / d
            else:
                new = 0.0
            delta = new - old
            if delta == 0.0:
                continue
            beta[j] = new
            step = 0.5 * d * abs(delta)
            if step > change:
                change = step
            for a in range(lptr[k], lptr[k + 1]):
                kk = lidx[a]
                w = GL[kk, k] * delta
                base = kk * p
                for b in range(rptr[r], rptr[r + 1]):
                    rr = ridx[b]
                    grad[base + rr] -= w * GR[rr, r]
        if change < tol:
            break
    return sweeps, change


def kkt_residual(prob, beta, lam, grad=None):
    """Largest violation of the LASSO optimality conditions at ``beta``."""
    beta = np.asarray(beta, dtype=float)
    g2 = 2.0 * (prob.gradient(beta) if grad is None else grad)
    active = beta != 0.0
    out = 0.0
    if np.any(active):
        out = np.max(np.abs(g2[active] - lam * np.sign(beta[active])))
    if np.any(~active):
        out = max(out, float(np.max(np.abs(g2[~active]))) - lam)
    return max(float(out), 0.0)


class _Solver:
    """Working state for one problem; reused across a path."""

    def __init__(self, prob, cfg):
        self.prob = prob
        self.cfg = cfg
        self.GL = np.ascontiguousarray(prob.gram_left, dtype=float)
        self.GR = np.ascontiguousarray(prob.gram_right, dtype=float)
        self.lptr, self.lidx = _nonzero_structure(self.GL)
        self.rptr, self.ridx = _nonzero_structure(self.GR)
        self.lambda_max = prob.lambda_max
        self.all_coords = np.arange(prob.shape.n_coef, dtype=np.int64)
        # the pq x pq Gram (not the design) is cheap to hold for moderate pq
        self.gram = np.kron(self.GL, self.GR) if prob.shape.n_coef <= DENSE_GRAM_MAX else None

    def sub_gram(self, idx):
        if self.gram is not None:
            return self.gram[np.ix_(idx, idx)]
        return self.prob.gram_submatrix(idx, idx)

    def gradient(self, beta):
        if self.gram is not None:
            return self.prob.xty - self.gram @ beta
        return self.prob.gradient(beta)

    def _sweep(self, beta, grad, lam, coords, max_sweeps, tol):
        if not self.cfg.debug:
            return _cd_kernel(self.GL, self.GR, self.lptr, self.lidx, self.rptr, self.ridx,
                              beta, grad, lam, coords, max_sweeps, tol)
        used, change = 0, np.inf
        before = self.prob.objective(beta, lam)
        while used < max_sweeps:
            s, change = _cd_kernel(self.GL, self.GR, self.lptr, self.lidx, self.rptr, self.ridx,
                                   beta, grad, lam, coords, 1, tol)
            used += s
            after = self.prob.objective(beta, lam)
            assert after <= before + 1e-10 * max(abs(before), 1.0), "objective increased"
            before = after
            if change < tol:
                break
        return used, change

    def _polish(self, beta, lam, kkt_tol):
        """Solve the stationarity equations on the current support with signs fixed."""
        active = np.flatnonzero(beta)
        if active.size == 0 or active.size > MAX_POLISH:
            return None
        signs = np.sign(beta[active])
        S = self.sub_gram(active)
        try:
            c = cho_factor(S, lower=True, check_finite=False)
        except LinAlgError:
            return None
        sol = cho_solve(c, self.prob.xty[active] - 0.5 * lam * signs, check_finite=False)
        if not np.all(np.sign(sol) == signs):
            return None
        cand = np.zeros_like(beta)
        cand[active] = sol
        grad = self.gradient(cand)
        if kkt_residual(self.prob, cand, lam, grad) > kkt_tol:
            return None
        return cand, grad

    def _feature_sign(self, beta, lam, kkt_tol, max_iter=None):
        """Active-set search over sign patterns, started from ``beta``.

        Each step solves the stationarity equations on the current signed support
        and moves toward that solution only as far as the first coefficient that
        would change sign, so the objective never increases.  Returns ``None`` if
        the search stalls; the caller then falls back to coordinate descent.
        """
        prob = self.prob
        n_coef = prob.shape.n_coef
        max_iter = max_iter or 2 * n_coef + 20
        beta = beta.copy()
        grad = self.gradient(beta)
        theta = np.sign(beta)
        for _ in range(max_iter):
            active = np.flatnonzero(theta)
            if active.size > MAX_POLISH:
                return None
            if active.size == 0:
                target = np.zeros(0)
            else:
                try:
                    c = cho_factor(self.sub_gram(active), lower=True, check_finite=False)
                except LinAlgError:
                    return None
                target = cho_solve(c, prob.xty[active] - 0.5 * lam * theta[active], check_finite=False)
            cur = beta[active]
            wrong = np.sign(target) != theta[active]
            if np.any(wrong):
                # first zero crossing along the segment cur -> target
                with np.errstate(divide="ignore", invalid="ignore"):
                    t = np.where(wrong, cur / (cur - target), np.inf)
                t_star = float(np.min(t))
                if t_star <= 0.0:
                    # coefficients entering with the wrong sign: drop them and retry
                    drop = active[wrong & (cur == 0.0)]
                    if drop.size == 0:
                        return None
                    theta[drop] = 0.0
                    continue
                beta[active] = cur + t_star * (target - cur)
                hit = active[t <= t_star]
                beta[hit] = 0.0
                theta[hit] = 0.0
                grad = self.gradient(beta)
                continue
            beta[:] = 0.0
            beta[active] = target
            grad = self.gradient(beta)
            g2 = 2.0 * grad
            viol = np.abs(g2) - lam
            viol[active] = -np.inf
            if viol.size == 0 or np.max(viol) <= kkt_tol:
                if kkt_residual(prob, beta, lam, grad) <= kkt_tol:
                    return beta, grad
                return None
            add = np.flatnonzero(viol > kkt_tol)
            theta[add] = np.sign(g2[add])
        return None

    def solve(self, lam, init=None):
        n_coef = self.prob.shape.n_coef
        beta = np.zeros(n_coef) if init is None else np.array(init, dtype=float)
        if beta.shape != (n_coef,):
            raise DimensionMismatch(f"init must have length {n_coef}")
        if lam < 0:
            raise ValueError("lambda must be non-negative")
        lmax = self.lambda_max
        kkt_tol = self.cfg.kkt_tol_ratio * lmax
        if lmax == 0.0:
            return np.zeros(n_coef), 0, 0.0
        if lam >= lmax:
            return np.zeros(n_coef), 0, kkt_residual(self.prob, np.zeros(n_coef), lam)
        tol = self.cfg.tol_ratio * lmax / 2.0
        grad = self.gradient(beta)
        budget = self.cfg.max_sweeps
        used = 0
        first = True
        while used < budget:
            s, change = self._sweep(beta, grad, lam, self.all_coords, 2 if first else 1, tol)
            used += s
            if first:
                found = self._feature_sign(beta, lam, kkt_tol)
                if found is not None:
                    return found[0], used, kkt_residual(self.prob, found[0], lam, found[1])
            first = False
            if change < tol:
                grad = self.gradient(beta)
                res = kkt_residual(self.prob, beta, lam, grad)
                if res <= kkt_tol:
                    return beta, used, res
            active = np.flatnonzero(beta).astype(np.int64)
            pattern = None
            chunk = POLISH_EVERY
            while active.size and used < budget:
                s, change = self._sweep(beta, grad, lam, active, min(chunk, budget - used), tol)
                used += s
                current = np.sign(beta[active])
                if pattern is not None and np.array_equal(current, pattern):
                    polished = self._polish(beta, lam, kkt_tol)
                    if polished is not None:
                        return polished[0], used, kkt_residual(self.prob, polished[0], lam, polished[1])
                    chunk *= 2
                pattern = current
                if change < tol:
                    break
            grad = self.gradient(beta)
        res = kkt_residual(self.prob, beta, lam)
        if res <= kkt_tol:
            return beta, used, res
        raise NotConverged(
            f"coordinate descent did not converge in {budget} sweeps (KKT residual {res:.3g})",
            beta=beta, kkt_residual=res,
        )


def solve_lasso(prob, lam, init=None, cfg=None):
    """Minimizer of the LASSO criterion at penalty ``lam``, KKT-certified."""
    beta, _, _ = _Solver(prob, cfg or LassoConfig()).solve(float(lam), init)
    return beta


def solve_path(prob, cfg=None):
    """Warm-started solutions on the log grid below ``lambda_max``."""
    cfg = cfg or LassoConfig()
    solver = _Solver(prob, cfg)
    lambdas = cfg.grid(solver.lambda_max)
    n_coef = prob.shape.n_coef
    betas = np.zeros((lambdas.size, n_coef))
    sweeps = np.zeros(lambdas.size, dtype=np.int64)
    kkt = np.zeros(lambdas.size)
    beta = np.zeros(n_coef)
    for i, lam in enumerate(lambdas):
        try:
            beta, sweeps[i], kkt[i] = solver.solve(lam, beta)
        except NotConverged as exc:
            exc.lambda_index = i
            raise
        betas[i] = beta
    return LassoPath(lambdas, betas, sweeps, kkt)


def sign_recovered(path, truth):
    """Whether some grid penalty reproduces the true signs exactly; the largest such penalty."""
    if len(path) == 0:
        raise ValueError("empty path")
    target = truth.sign_vector(path.betas.shape[1])
    hits = np.all(np.sign(path.betas) == target, axis=1)
    if not np.any(hits):
        return Recovery(False, None)
    return Recovery(True, float(path.lambdas[np.argmax(hits)]))
