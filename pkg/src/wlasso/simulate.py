"""Monte Carlo sign-recovery experiments: oracle, whitened and raw LASSO.

Each replicate draws its randomness from ``SeedSequence(seed, spawn_key=(cell, replicate))``
so results do not depend on worker count or scheduling order.
"""

import itertools
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np
from threadpoolctl import threadpool_limits

from .covariance import (
    CovarianceModel,
    PrecisionFactor,
    ar_autocovariance,
    build_precision,
    estimate_covariance,
    extract_residuals,
    materialize_sigma,
)
from .errors import ConfigError, IncompatibleSize, PlacementInfeasible, WlassoError
from .lasso import LassoConfig, SupportSpec, sign_recovered, solve_path
from .linalg import cholesky_lower, unvec
from .theory import placement_check
from .whitening import ProblemShape, build_problem

ESTIMATORS = ("oracle", "whitened", "raw")
DESIGN_KINDS = ("balanced_anova", "unbalanced_anova", "correlated_regression")


@dataclass(frozen=True)
class DesignSpec:
    kind: str = "balanced_anova"
    r: float = 0.5
    p: int = 9
    rho: float = 0.0

    def __post_init__(self):
        if self.kind not in DESIGN_KINDS:
            raise ConfigError(f"unknown design kind {self.kind!r}")
        if self.kind == "unbalanced_anova" and not 0 < self.r < 1:
            raise ConfigError("r must lie in (0, 1)")
        if self.kind == "correlated_regression" and not (0 <= self.rho < 1 and self.p >= 1):
            raise ConfigError("rho must lie in [0, 1) and p >= 1")

    @property
    def n_predictors(self):
        return self.p if self.kind == "correlated_regression" else 2

    @property
    def fixed(self):
        """ANOVA designs are deterministic; regression designs are redrawn per replicate."""
        return self.kind != "correlated_regression"

    def label(self):
        if self.kind == "balanced_anova":
            return "balanced_anova"
        if self.kind == "unbalanced_anova":
            return f"unbalanced_anova(r={self.r:g})"
        return f"correlated_regression(p={self.p},rho={self.rho:g})"


def group_sizes(spec, n):
    if spec.kind == "balanced_anova":
        if n % 2:
            raise IncompatibleSize(f"balanced two-group ANOVA needs even n, got {n}")
        return n // 2, n // 2
    n1 = math.ceil(spec.r * n - 1e-9)
    if not 1 <= n1 <= n - 1:
        raise IncompatibleSize(f"r={spec.r} with n={n} leaves an empty group")
    return n1, n - n1


def gen_design(spec, n, rng=None):
    if spec.kind == "correlated_regression":
        if n < 1:
            raise IncompatibleSize("n must be positive")
        p = spec.p
        cov = (1.0 - spec.rho) * np.eye(p) + spec.rho * np.ones((p, p))
        rng = np.random.default_rng() if rng is None else rng
        return rng.standard_normal((n, p)) @ cholesky_lower(cov).T
    n1, n2 = group_sizes(spec, n)
    X = np.zeros((n, 2))
    X[:n1, 0] = 1.0
    X[n1:, 1] = 1.0
    return X


@dataclass(frozen=True)
class SignalSpec:
    """Sparse coefficients with ``|J| = floor(q^c1)`` entries of magnitude ``m3 * q^-c2``."""

    c1: float
    c2: float
    m3: float = 1.0
    placement: str = "prop4"

    def __post_init__(self):
        if self.placement not in ("prop4", "uniform"):
            raise ConfigError(f"unknown placement {self.placement!r}")
        if self.c1 < 0 or self.c2 < 0 or not self.m3 > 0:
            raise ConfigError("c1, c2 must be non-negative and m3 positive")

    @classmethod
    def from_k(cls, k, m3=1.0, placement="prop4"):
        """Equal exponents with ``c1 + c2 = 1 / (2k)``."""
        c = 1.0 / (4.0 * k)
        return cls(c, c, m3, placement)

    def support_size(self, q):
        return int(math.floor(q ** self.c1 + 1e-9))

    def min_magnitude(self, q):
        return self.m3 * q ** (-self.c2)


def _prop4_support(size, p, q, rng, attempts=50):
    pq = p * q
    candidates = np.array([j for j in range(pq) if p < j + 1 < pq - p], dtype=np.intp)
    if size > candidates.size:
        raise PlacementInfeasible(f"support of size {size} does not fit in {candidates.size} interior slots")
    for _ in range(attempts):
        chosen = set()
        for j in rng.permutation(candidates):
            if (j - 2 * p) in chosen or (j + 2 * p) in chosen:
                continue
            chosen.add(int(j))
            if len(chosen) == size:
                return np.array(sorted(chosen), dtype=np.intp)
    raise PlacementInfeasible(f"could not place {size} coefficients compatibly (p={p}, q={q})")


def gen_signal(spec, shape, rng):
    """Coefficient vector ``vec(B)`` and its support."""
    pq = shape.n_coef
    size = spec.support_size(shape.q)
    if size > pq:
        raise PlacementInfeasible(f"support size {size} exceeds pq={pq}")
    if size == 0:
        return np.zeros(pq), SupportSpec((), ())
    if spec.placement == "prop4":
        idx = _prop4_support(size, shape.p, shape.q, rng)
        assert placement_check(idx, shape.p, shape.q).passed
    else:
        idx = np.sort(rng.choice(pq, size=size, replace=False))
    signs = rng.choice(np.array([-1, 1]), size=size)
    beta = np.zeros(pq)
    beta[idx] = signs * spec.min_magnitude(shape.q)
    return beta, SupportSpec(tuple(idx), tuple(signs))


def gen_noise(model, n, rng):
    """``n`` independent rows, each a stationary path with the model's covariance."""
    q = model.dim
    if model.kind == "toeplitz" or model.order >= q:
        L = cholesky_lower(materialize_sigma(model).materialize())
        return rng.standard_normal((n, q)) @ L.T
    phi = np.asarray(model.coeffs)
    m = phi.size
    gamma = ar_autocovariance(phi, model.sigma2, m)
    Lm = cholesky_lower(materialize_sigma(CovarianceModel.toeplitz(gamma)).materialize())
    Z = rng.standard_normal((n, q))
    E = np.empty((n, q))
    E[:, :m] = Z[:, :m] @ Lm.T
    sd = math.sqrt(model.sigma2)
    for t in range(m, q):
        E[:, t] = E[:, t - m : t][:, ::-1] @ phi + sd * Z[:, t]
    return E


@dataclass(frozen=True)
class NoiseSpec:
    """AR noise family: AR(1) if one coefficient, AR(m) otherwise."""

    coeffs: tuple
    sigma2: float = 1.0

    def model(self, q):
        if len(self.coeffs) == 1:
            return CovarianceModel.ar1(self.coeffs[0], q, self.sigma2)
        return CovarianceModel.arm(self.coeffs, q, self.sigma2)

    @property
    def order(self):
        return len(self.coeffs)

    def label(self):
        if self.order == 1:
            return f"ar1(phi={self.coeffs[0]:g})"
        return "ar{}({})".format(self.order, ",".join(f"{c:g}" for c in self.coeffs))


@dataclass(frozen=True)
class Cell:
    index: int
    design: DesignSpec
    noise: NoiseSpec
    n: int
    q: int
    k: float

    def key(self):
        return {"cell": self.index, "design": self.design.label(), "noise": self.noise.label(),
                "n": self.n, "q": self.q, "k": self.k}


@dataclass(frozen=True)
class ExperimentConfig:
    n: tuple
    q: tuple
    k: tuple = (2.0,)
    noises: tuple = (NoiseSpec((0.5,)),)
    designs: tuple = (DesignSpec(),)
    m3: float = 1.0
    placement: str = "prop4"
    estimators: tuple = ESTIMATORS
    replicates: int = 1000
    seed: int = 20180401
    lasso: LassoConfig = field(default_factory=LassoConfig)
    name: str = "experiment"

    def __post_init__(self):
        if not (self.n and self.q and self.k and self.noises and self.designs and self.estimators):
            raise ConfigError("all grids must be nonempty")
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")
        bad = set(self.estimators) - set(ESTIMATORS)
        if bad:
            raise ConfigError(f"unknown estimators {sorted(bad)}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")

    def cells(self):
        grid = itertools.product(self.designs, self.noises, self.n, self.q, self.k)
        return [Cell(i, d, nz, int(n), int(q), float(k)) for i, (d, nz, n, q, k) in enumerate(grid)]

    def signal(self, k):
        return SignalSpec.from_k(k, self.m3, self.placement)

    def to_dict(self):
        return {
            "name": self.name,
            "n": list(self.n),
            "q": list(self.q),
            "k": list(self.k),
            "noise": [{"coeffs": list(nz.coeffs), "sigma2": nz.sigma2} for nz in self.noises],
            "design": [{"kind": d.kind, "r": d.r, "p": d.p, "rho": d.rho} for d in self.designs],
            "m3": self.m3,
            "placement": self.placement,
            "estimators": list(self.estimators),
            "replicates": self.replicates,
            "seed": self.seed,
            "lasso": {f.name: getattr(self.lasso, f.name) for f in fields(LassoConfig) if f.name != "debug"},
        }

    @classmethod
    def from_dict(cls, d):
        """Build from the declarative form used by config files.

        Grids may be given as scalars or lists.  ``noise`` accepts ``{"phi": [...]}``
        (one AR(1) per value), ``{"coeffs": [...]}`` (one AR(m)) or a list of those.
        ``design`` accepts ``{"kind": ..., "r": [...], "rho": [...]}`` or a list.
        """
        d = dict(d)
        known = {"name", "n", "q", "k", "noise", "design", "m3", "placement", "estimators",
                 "replicates", "seed", "lasso"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config fields {sorted(unknown)}")
        try:
            lasso = LassoConfig(**d.get("lasso", {}))
            return cls(
                n=tuple(int(v) for v in _as_list(d["n"])),
                q=tuple(int(v) for v in _as_list(d["q"])),
                k=tuple(float(v) for v in _as_list(d.get("k", 2.0))),
                noises=tuple(_parse_noises(d.get("noise", {"phi": [0.5]}))),
                designs=tuple(_parse_designs(d.get("design", {"kind": "balanced_anova"}))),
                m3=float(d.get("m3", 1.0)),
                placement=str(d.get("placement", "prop4")),
                estimators=tuple(_as_list(d.get("estimators", list(ESTIMATORS)))),
                replicates=int(d.get("replicates", 1000)),
                seed=int(d.get("seed", 20180401)),
                lasso=lasso,
                name=str(d.get("name", "experiment")),
            )
        except KeyError as exc:
            raise ConfigError(f"missing config field {exc.args[0]!r}") from None
        except (TypeError, ValueError) as exc:
            if isinstance(exc, WlassoError):
                raise
            raise ConfigError(str(exc)) from None


def _as_list(v):
    return list(v) if isinstance(v, (list, tuple)) else [v]


def _parse_noises(spec):
    out = []
    for item in _as_list(spec):
        if not isinstance(item, dict):
            raise ConfigError(f"noise entries must be tables, got {item!r}")
        sigma2 = float(item.get("sigma2", 1.0))
        if "phi" in item:
            out.extend(NoiseSpec((float(phi),), sigma2) for phi in _as_list(item["phi"]))
        elif "coeffs" in item:
            coeffs = item["coeffs"]
            groups = coeffs if coeffs and isinstance(coeffs[0], (list, tuple)) else [coeffs]
            out.extend(NoiseSpec(tuple(float(c) for c in g), sigma2) for g in groups)
        else:
            raise ConfigError("noise entries need 'phi' or 'coeffs'")
    for nz in out:
        nz.model(max(2 * nz.order + 1, 2))  # validates stationarity
    return out


def _parse_designs(spec):
    out = []
    for item in _as_list(spec):
        if not isinstance(item, dict):
            raise ConfigError(f"design entries must be tables, got {item!r}")
        kind = item.get("kind", "balanced_anova")
        if kind == "unbalanced_anova":
            out.extend(DesignSpec(kind, r=float(r)) for r in _as_list(item.get("r", 0.5)))
        elif kind == "correlated_regression":
            p = int(item.get("p", 9))
            out.extend(DesignSpec(kind, p=p, rho=float(rho)) for rho in _as_list(item.get("rho", 0.0)))
        else:
            out.append(DesignSpec(kind))
    return out


def draw_dataset(design, noise_model, signal, n, rng):
    """One synthetic data set ``Y = X B + E``; returns ``(Y, X, beta, support)``."""
    X = gen_design(design, n, rng)
    shape = ProblemShape(n, X.shape[1], noise_model.dim)
    beta, support = gen_signal(signal, shape, rng)
    E = gen_noise(noise_model, n, rng)
    Y = X @ unvec(beta, shape.p, shape.q) + E
    return Y, X, beta, support


def replicate_rng(seed, cell, replicate):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(cell, replicate)))


def _fit_one(estimator, Y, X, cell, cfg, support):
    model = cell.noise.model(cell.q)
    phi1_hat = None
    if estimator == "oracle":
        factor = build_precision(model)
    elif estimator == "whitened":
        est = estimate_covariance(extract_residuals(Y, X), cell.noise.order)
        phi1_hat = est.coeffs[0]
        factor = build_precision(est.with_unit_variance())
    else:
        factor = PrecisionFactor.identity(cell.q)
    path = solve_path(build_problem(Y, X, factor), cfg.lasso)
    return sign_recovered(path, support), phi1_hat


def run_replicate(cfg, cell, replicate):
    """Rows (one per estimator) for a single replicate of one cell."""
    rng = replicate_rng(cfg.seed, cell.index, replicate)
    with threadpool_limits(1):
        Y, X, _, support = draw_dataset(cell.design, cell.noise.model(cell.q), cfg.signal(cell.k), cell.n, rng)
        rows = []
        for estimator in cfg.estimators:
            row = {**cell.key(), "estimator": estimator, "replicate": replicate,
                   "recovered": 0, "best_lambda": None, "phi1_hat": None, "status": "ok"}
            try:
                rec, phi1_hat = _fit_one(estimator, Y, X, cell, cfg, support)
                row.update(recovered=int(rec.any_lambda), best_lambda=rec.best_lambda, phi1_hat=phi1_hat)
            except WlassoError as exc:
                row["status"] = type(exc).__name__
            rows.append(row)
    return rows


def _run_task(args):
    cfg, cell, replicates = args
    return [(cell.index, rep, run_replicate(cfg, cell, rep)) for rep in replicates]


def default_threads():
    env = os.environ.get("WLASSO_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"WLASSO_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def iter_replicates(cfg, threads=None, chunk=10):
    """Yield ``(cell_index, replicate, rows)`` as replicates finish, in no particular order."""
    threads = threads or default_threads()
    cells = cfg.cells()
    for cell in cells:
        # surface size errors before spawning any work
        gen_design(cell.design, cell.n, np.random.default_rng(0))
    tasks = [(cfg, cell, range(start, min(start + chunk, cfg.replicates)))
             for cell in cells for start in range(0, cfg.replicates, chunk)]
    if threads == 1:
        for task in tasks:
            yield from _run_task(task)
        return
    with ProcessPoolExecutor(max_workers=threads) as pool:
        for batch in pool.map(_run_task, tasks):
            yield from batch


@dataclass
class RecoveryReport:
    config: ExperimentConfig
    rows: list
    complete: bool = True

    FREQ_COLUMNS = ("cell", "design", "noise", "n", "q", "k", "estimator",
                    "replicates", "recovered", "failures", "frequency")
    ROW_COLUMNS = ("cell", "design", "noise", "n", "q", "k", "estimator",
                   "replicate", "recovered", "best_lambda", "phi1_hat", "status")

    def sorted_rows(self):
        order = {e: i for i, e in enumerate(self.config.estimators)}
        return sorted(self.rows, key=lambda r: (r["cell"], order[r["estimator"]], r["replicate"]))

    def frequencies(self):
        groups = {}
        for row in self.sorted_rows():
            key = (row["cell"], row["estimator"])
            groups.setdefault(key, []).append(row)
        out = []
        for (_, estimator), rows in groups.items():
            hits = sum(r["recovered"] for r in rows)
            first = rows[0]
            out.append({**{c: first[c] for c in ("cell", "design", "noise", "n", "q", "k")},
                        "estimator": estimator, "replicates": len(rows), "recovered": hits,
                        "failures": sum(r["status"] != "ok" for r in rows),
                        "frequency": hits / len(rows)})
        return out

    def frequency(self, estimator, **where):
        """Recovery frequency of ``estimator`` in the single cell matching ``where``."""
        match = [f for f in self.frequencies() if f["estimator"] == estimator
                 and all(f[k] == v for k, v in where.items())]
        if len(match) != 1:
            raise KeyError(f"{len(match)} cells match {where} for {estimator}")
        return match[0]["frequency"]


def run_experiment(cfg, threads=None, on_row=None):
    rows = []
    complete = True
    try:
        for _, _, batch in iter_replicates(cfg, threads):
            rows.extend(batch)
            if on_row is not None:
                for row in batch:
                    on_row(row)
    except KeyboardInterrupt:
        complete = False
    return RecoveryReport(cfg, rows, complete)
