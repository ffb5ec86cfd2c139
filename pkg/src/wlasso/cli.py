"""``wlasso`` command line: fit, simulate, audit.

Exit codes: 0 ok, 2 input error, 3 convergence failure, 4 numerical singularity.
"""

import argparse
import logging
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .covariance import (
    CovarianceModel,
    PrecisionFactor,
    build_precision,
    estimate_covariance,
    extract_residuals,
)
from .errors import ConfigError, WlassoError
from .io import (
    InputError,
    RunManifest,
    file_digest,
    load_config,
    read_matrix,
    read_rows,
    write_json,
    write_rows,
)
from .lasso import LassoConfig, SupportSpec, solve_lasso, solve_path
from .simulate import DesignSpec, ExperimentConfig, RecoveryReport, default_threads, gen_design, run_experiment
from .theory import ar1_ic_bound, audit_assumptions, check_ic
from .whitening import build_problem, design_problem

log = logging.getLogger("wlasso")

BUNDLED = ("fig1-desk", "fig2-desk", "fig3-desk", "smoke")


def _out_dir(path):
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _lasso_config(args, base=None):
    base = base or LassoConfig()
    kw = {}
    if getattr(args, "n_lambda", None) is not None:
        kw["n_lambda"] = args.n_lambda
    if getattr(args, "lambda_min_ratio", None) is not None:
        kw["lambda_min_ratio"] = args.lambda_min_ratio
    if not kw:
        return base
    try:
        return LassoConfig(**{**base.__dict__, **kw})
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _parse_cov(tokens):
    """``identity``, ``ar1`` or ``ar M`` -> AR order (0 for identity)."""
    kind = tokens[0].lower()
    if kind == "identity" and len(tokens) == 1:
        return 0
    if kind == "ar1" and len(tokens) == 1:
        return 1
    if kind == "ar" and len(tokens) == 2 and tokens[1].isdigit() and int(tokens[1]) >= 1:
        return int(tokens[1])
    raise InputError(f"--cov expects 'identity', 'ar1' or 'ar M', got {' '.join(tokens)!r}")


def cmd_fit(args):
    Y, _ = read_matrix(args.y)
    X, xhead = read_matrix(args.x)
    if Y.shape[0] != X.shape[0]:
        raise InputError(f"Y has {Y.shape[0]} rows but X has {X.shape[0]}")
    n, p = X.shape
    q = Y.shape[1]
    if p >= n:
        raise InputError(f"need p < n, got p={p}, n={n}")
    order = _parse_cov(args.cov)
    cfg = _lasso_config(args)
    if args.select == "fixed" and args.lam is None:
        raise InputError("--select fixed requires --lambda")
    out = _out_dir(args.out_dir)
    config = {
        "command": "fit", "cov": " ".join(args.cov), "select": args.select, "lambda": args.lam,
        "n_lambda": cfg.n_lambda, "lambda_min_ratio": cfg.lambda_min_ratio,
        "inputs": {"Y": file_digest(args.y), "X": file_digest(args.x)},
    }
    manifest = RunManifest("fit", config)

    cov_doc = {"order": order}
    if order == 0:
        factor = PrecisionFactor.identity(q)
        cov_doc["model"] = CovarianceModel.identity(q).to_dict()
    else:
        est = estimate_covariance(extract_residuals(Y, X), order)
        cov_doc["model"] = est.to_dict()
        cov_doc["phi_hat"] = list(est.coeffs)
        cov_doc["innovation_variance"] = est.sigma2
        factor = build_precision(est.with_unit_variance())
    prob = build_problem(Y, X, factor)

    if args.select == "fixed":
        lambdas = np.array([args.lam])
        betas = solve_lasso(prob, args.lam, cfg=cfg)[None, :]
    else:
        path = solve_path(prob, cfg)
        lambdas, betas = path.lambdas, path.betas
    coef_rows, support_rows = [], []
    for i, (lam, beta) in enumerate(zip(lambdas, betas)):
        for j, b in enumerate(beta):
            row = {"lambda_index": i, "lambda": lam, "j": j + 1, "r": j % p, "k": j // p, "beta": b}
            coef_rows.append(row)
            if b != 0.0:
                support_rows.append({**row, "sign": int(np.sign(b))})
    cols = ("lambda_index", "lambda", "j", "r", "k")
    manifest.add(write_rows(out / "coefficients.csv", cols + ("beta",), coef_rows))
    manifest.add(write_rows(out / "support.csv", cols + ("beta", "sign"), support_rows))
    cov_doc["lambda_max"] = prob.lambda_max
    cov_doc["predictors"] = xhead
    manifest.add(write_json(out / "covariance.json", cov_doc))
    manifest.write(out)
    return 0


def resolve_config_path(name):
    path = Path(name)
    if path.exists():
        return path
    stem = path.name.removesuffix(".toml")
    if stem in BUNDLED:
        return Path(str(resources.files("wlasso") / "configs" / f"{stem}.toml"))
    raise ConfigError(f"config file {name!r} not found (bundled: {', '.join(BUNDLED)})")


def cmd_simulate(args):
    raw = load_config(resolve_config_path(args.config))
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.replicates is not None:
        raw["replicates"] = args.replicates
    lasso = dict(raw.get("lasso", {}))
    if args.n_lambda is not None:
        lasso["n_lambda"] = args.n_lambda
    if args.lambda_min_ratio is not None:
        lasso["lambda_min_ratio"] = args.lambda_min_ratio
    if lasso:
        raw["lasso"] = lasso
    cfg = ExperimentConfig.from_dict(raw)
    threads = args.threads or default_threads()
    out = _out_dir(args.out_dir)
    manifest = RunManifest("simulate", cfg.to_dict(), seed=cfg.seed)
    log.info("running %d cells x %d replicates on %d workers", len(cfg.cells()), cfg.replicates, threads)
    report = run_experiment(cfg, threads=threads)
    write_report(report, out, manifest)
    if not report.complete:
        log.warning("interrupted; partial results written to %s", out)
        return 130
    return 0


def write_report(report, out, manifest):
    manifest.complete = report.complete
    manifest.add(write_rows(out / "replicates.csv", RecoveryReport.ROW_COLUMNS, report.sorted_rows()))
    manifest.add(write_rows(out / "frequencies.csv", RecoveryReport.FREQ_COLUMNS, report.frequencies()))
    manifest.write(out)


def _parse_support(text, n_coef):
    """Support from a CSV file with ``j,sign`` columns or inline ``j:+1,j:-1`` (1-based j)."""
    pairs = []
    if Path(text).exists():
        for row in read_rows(text):
            try:
                pairs.append((int(row["j"]), int(row["sign"])))
            except (KeyError, TypeError, ValueError):
                raise InputError(f"{text}: support rows need integer 'j' and 'sign' columns") from None
    elif text.strip():
        for item in text.split(","):
            try:
                j, s = item.split(":")
                pairs.append((int(j), int(s)))
            except ValueError:
                raise InputError(f"bad support entry {item!r}; expected j:sign") from None
    for j, _ in pairs:
        if not 1 <= j <= n_coef:
            raise InputError(f"support index {j} outside 1..{n_coef}")
    try:
        return SupportSpec(tuple(j - 1 for j, _ in pairs), tuple(s for _, s in pairs))
    except ValueError as exc:
        raise InputError(str(exc)) from None


def cmd_audit(args):
    if args.x is not None:
        X, _ = read_matrix(args.x)
    elif args.design is not None:
        if args.n is None:
            raise InputError("--design needs --n")
        try:
            spec = DesignSpec(args.design, r=args.r)
        except ConfigError as exc:
            raise InputError(str(exc)) from None
        X = gen_design(spec, args.n)
    else:
        raise InputError("give --x or --design")
    phi1 = None
    if args.cov_file is not None:
        doc = load_config(args.cov_file)
        model = CovarianceModel.from_dict(doc.get("model", doc))
        if model.kind == "ar1":
            phi1 = model.coeffs[0]
    elif args.phi1 is not None:
        if args.q is None:
            raise InputError("--phi1 needs --q")
        if not abs(args.phi1) < 1:
            raise InputError("--phi1 must satisfy |phi1| < 1")
        model = CovarianceModel.ar1(args.phi1, args.q)
        phi1 = args.phi1
    else:
        if args.q is None:
            raise InputError("give --phi1/--q, --cov-file, or --q for independent responses")
        model = CovarianceModel.identity(args.q)
        phi1 = 0.0
    prob = design_problem(X, build_precision(model))
    truth = _parse_support(args.support, prob.shape.n_coef)
    out = _out_dir(args.out_dir)
    config = {"command": "audit", "support": list(zip(truth.indices, truth.signs)),
              "model": model.to_dict(), "c1": args.c1, "c2": args.c2,
              "X": file_digest(args.x) if args.x else {"design": args.design, "n": args.n, "r": args.r}}
    manifest = RunManifest("audit", config)
    ic = check_ic(prob, truth)
    audit = audit_assumptions(prob, truth, args.c1, args.c2)
    doc = {"ic": ic.to_dict(), "assumptions": audit.to_dict(),
           "ar1_ic_bound": ar1_ic_bound(phi1) if phi1 is not None else None}
    manifest.add(write_json(out / "audit.json", doc))
    manifest.write(out)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="wlasso", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out-dir", default=".")
        p.add_argument("--n-lambda", type=int)
        p.add_argument("--lambda-min-ratio", type=float)

    fit = sub.add_parser("fit", help="whitened LASSO on CSV data")
    fit.add_argument("y", help="responses, n x q CSV with header")
    fit.add_argument("x", help="design, n x p CSV with header")
    fit.add_argument("--cov", nargs="+", default=["ar1"], metavar="KIND",
                     help="identity | ar1 | ar M (default ar1)")
    fit.add_argument("--select", choices=("exists", "fixed"), default="exists",
                     help="exists: write the whole penalty path; fixed: one penalty given by --lambda")
    fit.add_argument("--lambda", dest="lam", type=float)
    common(fit)
    fit.set_defaults(func=cmd_fit)

    sim = sub.add_parser("simulate", help="Monte Carlo sign-recovery campaign")
    sim.add_argument("config", help=f"TOML or JSON config, or a bundled name ({', '.join(BUNDLED)})")
    sim.add_argument("--seed", type=int)
    sim.add_argument("--replicates", type=int)
    sim.add_argument("--threads", type=int)
    common(sim)
    sim.set_defaults(func=cmd_simulate)

    aud = sub.add_parser("audit", help="irrepresentable condition and assumption audit")
    aud.add_argument("--x", help="design CSV")
    aud.add_argument("--design", choices=("balanced_anova", "unbalanced_anova"))
    aud.add_argument("--n", type=int)
    aud.add_argument("--r", type=float, default=0.5)
    aud.add_argument("--q", type=int)
    aud.add_argument("--support", required=True, help="CSV with j,sign columns or inline j:sign,...")
    aud.add_argument("--phi1", type=float)
    aud.add_argument("--cov-file")
    aud.add_argument("--c1", type=float, default=0.125)
    aud.add_argument("--c2", type=float, default=0.125)
    aud.add_argument("--out-dir", default=".")
    aud.set_defaults(func=cmd_audit)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if getattr(args, "threads", None) is not None and args.threads < 1:
        print("wlasso: error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except WlassoError as exc:
        print(f"wlasso: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except KeyboardInterrupt:
        return 130
