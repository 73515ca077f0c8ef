"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 numerical or convergence failure,
3 IO failure. All outputs are files or stdout CSV/JSON; nothing is
interactive. Every subcommand taking --seed is bit-deterministic.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import coupling as coupling_mod
from . import estimators, experiments, labels, theory
from .gmm import ThetaParam, generate, load_dataset_csv, save_dataset_csv
from .numutil import ConvergenceError
from .rng import make_rng


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); remap to exit code 1
        raise UsageError(message)


def _parse_vector(text: str, flag: str) -> np.ndarray:
    try:
        return np.asarray([float(v) for v in text.split(",") if v.strip() != ""])
    except ValueError as exc:
        raise UsageError(f"{flag}: expected comma-separated numbers, got {text!r}") from exc


def _require(args, flag: str, condition: bool):
    if not condition:
        raise UsageError(f"{flag} is required for this invocation")


def _write_json(data: dict, out: str | None) -> None:
    text = json.dumps(data, indent=2, sort_keys=True) + "\n"
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _load_config(args, overrides: dict) -> experiments.ExperimentConfig:
    with open(args.config) as fh:
        data = json.load(fh)
    data.pop("kind", None)
    for key, val in overrides.items():
        if val is not None:
            data[key] = val
    return experiments.ExperimentConfig.from_dict(data)


def _workers(args) -> int:
    if args.workers is None:
        return os.cpu_count() or 1
    if args.workers < 1:
        raise UsageError("--workers must be >= 1")
    return args.workers


# ---------------------------------------------------------------------------
# Subcommand handlers


def _cmd_gen_labels(args) -> int:
    rng = make_rng(args.seed)
    if args.model == "cw":
        _require(args, "--n", args.n is not None)
        z = labels.sample_cw(args.n, args.beta, rng)
    else:
        _require(args, "--coupling", args.coupling is not None)
        coup = coupling_mod.load_coupling_csv(args.coupling)
        if args.n is not None and args.n != coup.n:
            raise UsageError(f"--n {args.n} does not match the coupling size {coup.n}")
        sweeps = args.sweeps or labels.default_burn_in_sweeps(coup.n)
        z = labels.sample_glauber(coup, args.beta, sweeps, rng)
    labels.save_labels_csv(z, args.out)
    return 0


def _cmd_gen_data(args) -> int:
    theta = ThetaParam(vec=_parse_vector(args.theta, "--theta"))
    z = labels.load_labels_csv(args.labels)
    ds = generate(theta, z, make_rng(args.seed))
    save_dataset_csv(ds, args.out)
    return 0


def _cmd_estimate(args) -> int:
    if args.method in ("mf", "amle", "mle") and args.beta is None:
        raise UsageError(f"--beta is required for method {args.method!r}")
    ds = load_dataset_csv(args.infile)
    x = ds.x
    if args.method == "iid":
        res = estimators.em_iid(x, tol=args.tol, max_iter=args.max_iter)
    elif args.method == "mf":
        res = estimators.em_mf(x, args.beta, tol=args.tol, max_iter=args.max_iter)
    elif args.method == "amle":
        res = estimators.amle(x, args.beta, tol=args.tol, max_iter=args.max_iter)
    else:
        res = estimators.exact_mle_cw(x, args.beta)
    _write_json(res.to_json_dict(), args.out)
    return 0 if res.converged else 2


def _cmd_info(args) -> int:
    theta = ThetaParam(vec=_parse_vector(args.theta, "--theta"))
    rep = theory.info_report(theta, args.beta)
    _write_json(rep.to_json_dict(), args.out)
    return 0


def _cmd_identities(args) -> int:
    theta = ThetaParam(vec=_parse_vector(args.theta, "--theta"))
    rep = theory.verify_identities(theta, args.beta)
    for name, value in rep.residuals.items():
        print(f"{name}: {value:.3e}")
    if args.out:
        _write_json(rep.to_json_dict(), args.out)
    return 0


def _cmd_sweep(args) -> int:
    cfg = _load_config(args, {"seed": args.seed})
    table = experiments.run_variance_sweep(cfg)
    out = args.out or cfg.output_path
    _require(args, "--out (or output_path in the config)", out is not None)
    experiments.persist(table, out)
    return 0


def _cmd_simulate(args) -> int:
    cfg = _load_config(args, {"seed": args.seed, "replications": args.replications,
                              "n": args.n})
    summary = experiments.run_monte_carlo(cfg, workers=_workers(args))
    out = args.out or cfg.output_path
    _require(args, "--out (or output_path in the config)", out is not None)
    experiments.persist(summary, out)
    if any(e.flagged for e in summary.entries):
        return 2
    return 0


def _cmd_lan_check(args) -> int:
    cfg = _load_config(args, {"seed": args.seed, "replications": args.replications})
    h = _parse_vector(args.h, "--h")
    report = experiments.run_lan_diagnostic(cfg, h, workers=_workers(args))
    if args.out:
        experiments.persist(report, args.out)
    else:
        _write_json(report.to_json_dict(), None)
    if args.out_csv:
        report.to_csv(args.out_csv)
    return 0


def _cmd_paired_info(args) -> int:
    theta = ThetaParam(vec=_parse_vector(args.theta, "--theta"))
    res = theory.paired_fisher_info(theta, args.beta, draws=args.draws,
                                    rng=make_rng(args.seed))
    _write_json({
        "kind": "paired_info",
        "theta0": theta.vec.tolist(),
        "beta": args.beta,
        "draws": res.draws,
        "info": res.info.ravel().tolist(),
        "se": res.se.ravel().tolist(),
    }, args.out)
    return 0


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> _Parser:
    p = _Parser(
        prog="isingmix",
        description="Gaussian mixtures with Ising-dependent labels: "
                    "samplers, estimators, limiting variances, Monte Carlo.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser(
        "gen-labels", help="sample a label vector",
        description="Sample labels and write them as a one-column CSV (header 'z', "
                    "entries +-1). Model 'cw' draws exactly; 'ising' runs Glauber "
                    "dynamics on a coupling CSV of '# coupling n=<n>' plus "
                    "(i,j,value) triples.")
    sp.add_argument("--model", choices=["cw", "ising"], default="cw")
    sp.add_argument("--n", type=int,
                    help="number of sites (required for cw; the coupling file "
                         "fixes it for ising)")
    sp.add_argument("--beta", type=float, required=True, help="inverse temperature >= 0")
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--out", required=True, help="output CSV path")
    sp.add_argument("--coupling", help="coupling CSV (required for --model ising)")
    sp.add_argument("--sweeps", type=int, help="Glauber sweeps (default: burn-in rule)")
    sp.set_defaults(func=_cmd_gen_labels)

    sp = sub.add_parser(
        "gen-data", help="generate observations from labels",
        description="Draw X_i = theta z_i + N(0, I) for labels read from a label CSV "
                    "and write a dataset CSV with columns x1..xd,z (17 significant "
                    "digits).")
    sp.add_argument("--theta", required=True, help="comma-separated mean vector")
    sp.add_argument("--labels", required=True, help="label CSV from gen-labels")
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=_cmd_gen_data)

    sp = sub.add_parser(
        "estimate", help="fit the mean parameter",
        description="Fit theta from a dataset CSV (columns x1..xd; a z column is "
                    "ignored). Writes JSON {estimator, theta_hat, u_hat, iterations, "
                    "converged, grad_norm, objective}. Exit 2 when the solver did "
                    "not converge. Methods mf, amle, mle require --beta.")
    sp.add_argument("--method", choices=["iid", "mf", "amle", "mle"], required=True)
    sp.add_argument("--beta", type=float)
    sp.add_argument("--in", dest="infile", required=True, help="dataset CSV")
    sp.add_argument("--out", help="output JSON (default stdout)")
    sp.add_argument("--tol", type=float, default=estimators.DEFAULT_TOL)
    sp.add_argument("--max-iter", type=int, default=estimators.DEFAULT_MAX_ITER)
    sp.set_defaults(func=_cmd_estimate)

    sp = sub.add_parser(
        "info", help="limiting-variance report",
        description="All limiting-variance objects at (theta, beta) as JSON; "
                    "matrices are row-major flattened.")
    sp.add_argument("--theta", required=True)
    sp.add_argument("--beta", type=float, required=True)
    sp.add_argument("--out")
    sp.set_defaults(func=_cmd_info)

    sp = sub.add_parser(
        "identities", help="check the variance identities",
        description="Print the relative residual of each limiting-variance identity "
                    "(full set above the transition, reduced set below).")
    sp.add_argument("--theta", required=True)
    sp.add_argument("--beta", type=float, required=True)
    sp.add_argument("--out", help="optional JSON output")
    sp.set_defaults(func=_cmd_identities)

    cfg_help = ("JSON config: {seed, n, d, replications, theta0, beta_grid, "
                "label_model, coupling_path, estimators, output_path}; "
                "flags override config values.")

    sp = sub.add_parser(
        "sweep", help="closed-form variance sweep over beta",
        description="Write the CSV table beta,m,inv_I0_ij,inv_Ibeta_ij,amle_var_ij "
                    "over the config's beta_grid. " + cfg_help)
    sp.add_argument("--config", required=True)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", help="output CSV (default: config output_path)")
    sp.set_defaults(func=_cmd_sweep)

    sp = sub.add_parser(
        "simulate", help="Monte Carlo estimator study",
        description="Run the configured replications and write a JSON summary with "
                    "empirical and theoretical covariances and Wald coverage. "
                    + cfg_help)
    sp.add_argument("--config", required=True)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--n", type=int)
    sp.add_argument("--replications", type=int)
    sp.add_argument("--out")
    sp.add_argument("--workers", type=int, help="default: machine parallelism")
    sp.set_defaults(func=_cmd_simulate)

    sp = sub.add_parser(
        "lan-check", help="likelihood-ratio expansion diagnostic",
        description="Exact Curie-Weiss log likelihood ratios against the quadratic "
                    "score expansion. JSON report to --out (or stdout); --out-csv "
                    "writes per-replication rows rep,llr,score_term,predicted. "
                    + cfg_help)
    sp.add_argument("--config", required=True)
    sp.add_argument("--h", required=True, help="local shift vector, comma-separated")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--replications", type=int)
    sp.add_argument("--out")
    sp.add_argument("--out-csv")
    sp.add_argument("--workers", type=int, help="default: machine parallelism")
    sp.set_defaults(func=_cmd_lan_check)

    sp = sub.add_parser(
        "paired-info", help="Fisher information of the paired-label model",
        description="Monte Carlo Fisher information (with standard errors) for the "
                    "matched-pairs label model; JSON output.")
    sp.add_argument("--theta", required=True)
    sp.add_argument("--beta", type=float, required=True)
    sp.add_argument("--draws", type=int, default=10_000_000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out")
    sp.set_defaults(func=_cmd_paired_info)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (ConvergenceError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io failure: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:  # console_scripts target
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
