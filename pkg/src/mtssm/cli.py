"""Command-line pipeline: preprocess, simulate, fit, gof, recover, diagnose.

Every command writes its resolved configuration (plain key=value) and a
JSON metadata sidecar next to its outputs, never writes outside --out,
and is deterministic given the config file — including across different
--threads settings.

Flag defaults can be overridden by MTSSM_-prefixed environment variables
(e.g. MTSSM_SEED, MTSSM_THREADS); explicit flags win over both.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import dataio
from .backend import backend_name
from .diagnostics import summarize
from .gof import (
    RecoveryScenario,
    aor_report,
    overlap_lambda,
    pi_curves,
    recovery_study,
    simulate_dataset,
    window_probability,
)
from .likelihood import estimate_kappas
from .model import ExperimentDesign, MeasurementParams, expand_theta, stimuli_beta
from .preprocess import MalformedInputError, ScreenBounds, build_dataset
from .sampler import ChainAbort, SamplerConfig, run_sampler


def _env_default(name, cast, fallback):
    raw = os.environ.get(f"MTSSM_{name.upper().replace('-', '_')}")
    if raw is None or raw == "":
        return fallback
    return cast(raw)


def _add_sampler_flags(p):
    p.add_argument("--chains", type=int, default=_env_default("chains", int, 20))
    p.add_argument("--iters", type=int, default=_env_default("iters", int, 10000))
    p.add_argument("--burnin", type=int, default=_env_default("burnin", int, 2500))
    p.add_argument("--adapt-interval", type=int,
                   default=_env_default("adapt_interval", int, 25))
    p.add_argument("--prior-var", type=float,
                   default=_env_default("prior_var", float, 25.0))
    p.add_argument("--quad-order", type=int,
                   default=_env_default("quad_order", int, 32))
    p.add_argument("--threads", type=int,
                   default=_env_default("threads", int, None))


def _add_common(p):
    p.add_argument("--seed", type=int, default=_env_default("seed", int, 0))
    p.add_argument("--out", required=True, help="output directory")


def _add_measurement_flags(p):
    p.add_argument("--mu1", type=float, default=_env_default("mu1", float, 2.75))
    p.add_argument("--mu2", type=float, default=_env_default("mu2", float, 0.75))


def _echo(args, out_dir, command):
    resolved = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    resolved["command"] = command
    dataio.write_config(os.path.join(out_dir, "config.txt"), resolved)
    return resolved


def _prepare_out(args):
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _sampler_config(args):
    return SamplerConfig(
        chains=args.chains,
        iterations=args.iters,
        burn_in=args.burnin,
        adapt_interval=args.adapt_interval,
        prior_var=args.prior_var,
        seed=args.seed,
        threads=args.threads,
        quad_order=args.quad_order,
    )


def _load_design(path, kind):
    trial_ids, levels, covariate = dataio.load_design_csv(path)
    x = covariate if kind != "categorical" else None
    try:
        design = ExperimentDesign.from_levels(levels, x=x, kind=kind)
    except ValueError as exc:
        raise MalformedInputError(f"{path}: {exc}") from None
    return trial_ids, design


def cmd_preprocess(args) -> int:
    out = _prepare_out(args)
    trajectories = dataio.load_raw_csv(args.data)
    dataset = build_dataset(
        trajectories,
        n_steps=args.n_steps,
        bounds=ScreenBounds(args.width, args.height),
        mode=args.mode,
    )
    dataio.write_dataset_csv(dataset, os.path.join(out, "dataset.csv"))
    _echo(args, out, "preprocess")
    dataio.write_json(
        os.path.join(out, "metadata.json"),
        {
            "command": "preprocess",
            "n_subjects": dataset.n_subjects,
            "n_trials": dataset.n_trials,
            "n_steps": dataset.n_steps,
            "subjects": dataset.subjects,
            "trials": dataset.trials,
        },
    )
    return 0


def cmd_simulate(args) -> int:
    out = _prepare_out(args)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(args.seed)))
    if args.trials % args.levels:
        raise MalformedInputError("--trials must be divisible by --levels")
    levels = np.repeat(np.arange(1, args.levels + 1), args.trials // args.levels)
    x = None
    if args.model != "categorical":
        x = rng.integers(-3, 4, size=args.trials).astype(float)
    design = ExperimentDesign.from_levels(levels, x=x, kind=args.model,
                                          n_levels=args.levels)
    d = design.n_params()
    if args.theta is not None:
        theta = np.array([float(v) for v in args.theta.split(",")])
        if theta.size != d:
            raise MalformedInputError(
                f"--theta needs {d} values for this design, got {theta.size}"
            )
    else:
        theta = rng.normal(0.0, float(np.sqrt(args.prior_var)), size=d)
    meas = MeasurementParams(args.mu1, args.mu2, args.kappa1, args.kappa2)
    dataset = simulate_dataset(theta, design, meas, args.subjects, args.n_steps, rng)
    dataio.write_dataset_csv(dataset, os.path.join(out, "dataset.csv"))
    with open(os.path.join(out, "design.csv"), "w", newline="", encoding="utf-8") as fh:
        fh.write("trial,level,covariate\n")
        for j, tid in enumerate(dataset.trials):
            cell = "" if x is None else dataio.fmt(x[j])
            fh.write(f"{tid},{design.levels[j]},{cell}\n")
    _echo(args, out, "simulate")
    dataio.write_json(
        os.path.join(out, "metadata.json"),
        {
            "command": "simulate",
            "theta_true": theta,
            "param_names": design.param_names(),
            "n_subjects": args.subjects,
            "n_trials": args.trials,
            "n_steps": args.n_steps,
        },
    )
    return 0


def cmd_fit(args) -> int:
    out = _prepare_out(args)
    dataset = dataio.read_dataset_csv(args.data)
    trial_ids, design = _load_design(args.design, args.model)
    if not np.array_equal(np.sort(trial_ids), dataset.trials):
        raise MalformedInputError("design trials do not match dataset trials")
    base = MeasurementParams(args.mu1, args.mu2, 1.0, 1.0)
    kappa1, kappa2 = estimate_kappas(dataset, base.mu1, base.mu2)
    meas = base.with_kappas(kappa1, kappa2)
    config = _sampler_config(args)
    try:
        draws = run_sampler(dataset, design, meas, config)
    except ChainAbort as exc:
        dataio.write_json(
            os.path.join(out, "abort.json"),
            {"chain": exc.chain_id, "iteration": exc.iteration, "cause": str(exc.cause)},
        )
        raise
    summaries = summarize(draws.draws, draws.param_names)
    dataio.write_draws_csv(draws.draws, draws.param_names, config.burn_in,
                           os.path.join(out, "draws.csv"))
    dataio.write_summary_csv(summaries, os.path.join(out, "summary.csv"))
    dataio.write_smoothed_csv(dataset.subjects, draws.smoothed_mean,
                              draws.smoothed_var, os.path.join(out, "smoothed.csv"))
    beta_hat = stimuli_beta(design, expand_theta(draws.posterior_mean, design))
    dataio.write_pi_csv(dataset.subjects, dataset.trials,
                        pi_curves(beta_hat, draws.smoothed_mean),
                        os.path.join(out, "pi_curves.csv"))
    _echo(args, out, "fit")
    dataio.write_json(
        os.path.join(out, "summary.json"),
        [
            {
                "param": s.name,
                "mean": s.mean,
                "q0.05": s.q05,
                "q0.975": s.q975,
                "rhat": s.rhat,
                "hdpi": list(s.hdpi),
            }
            for s in summaries
        ],
    )
    dataio.write_json(
        os.path.join(out, "metadata.json"),
        {
            "command": "fit",
            "backend": backend_name(),
            "kappa1": kappa1,
            "kappa2": kappa2,
            "theta0": draws.theta0,
            "acceptance_rate": draws.acceptance_rate,
            "kernel_failures": draws.kernel_failures,
            "param_names": draws.param_names,
            "posterior_mean": draws.posterior_mean,
        },
    )
    return 0


def cmd_gof(args) -> int:
    out = _prepare_out(args)
    dataset = dataio.read_dataset_csv(args.data)
    trial_ids, design = _load_design(args.design, args.model)
    if not np.array_equal(np.sort(trial_ids), dataset.trials):
        raise MalformedInputError("design trials do not match dataset trials")
    draws, names, _ = dataio.read_draws_csv(os.path.join(args.fit, "draws.csv"))
    if names != design.param_names():
        raise MalformedInputError("draws parameters do not match the design")
    smoothed = _read_smoothed(os.path.join(args.fit, "smoothed.csv"), dataset)
    kappa1, kappa2 = estimate_kappas(dataset, args.mu1, args.mu2)
    meas = MeasurementParams(args.mu1, args.mu2, kappa1, kappa2)
    pooled = draws.reshape(-1, draws.shape[2])
    theta_hat = pooled.mean(axis=0)
    simulate_fn = (lambda m: dataset.Y) if args.identity_check else None
    report = aor_report(dataset, theta_hat, smoothed, design, meas,
                        n_reps=args.reps, seed=args.seed, simulate_fn=simulate_fn)
    lambdas = [
        overlap_lambda(0.0, args.prior_var, pooled[:, p]) for p in range(pooled.shape[1])
    ]
    with open(os.path.join(out, "gof.csv"), "w", newline="", encoding="utf-8") as fh:
        fh.write("measure,name,value\n")
        fh.write(f"aor,overall,{dataio.fmt(report.overall)}\n")
        for i, sid in enumerate(dataset.subjects):
            fh.write(f"aor,subject_{sid},{dataio.fmt(report.per_subject[i])}\n")
        for p, name in enumerate(names):
            fh.write(f"lambda,{name},{dataio.fmt(lambdas[p])}\n")
    if args.window is not None:
        beta_hat = stimuli_beta(design, expand_theta(theta_hat, design))
        curves = pi_curves(beta_hat, smoothed)
        with open(os.path.join(out, "window.csv"), "w", newline="", encoding="utf-8") as fh:
            fh.write("subject,trial,p\n")
            for i, sid in enumerate(dataset.subjects):
                for j, tid in enumerate(dataset.trials):
                    p = window_probability(curves[i, j], args.window)
                    fh.write(f"{sid},{tid},{dataio.fmt(p)}\n")
    _echo(args, out, "gof")
    dataio.write_json(
        os.path.join(out, "metadata.json"),
        {
            "command": "gof",
            "aor_overall": report.overall,
            "lambda": {name: lambdas[p] for p, name in enumerate(names)},
            "n_reps": report.n_reps,
        },
    )
    return 0


def _read_smoothed(path, dataset):
    rows = {}
    import csv

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            if row:
                rows[(int(row[0]), int(row[1]))] = float(row[2])
    mean = np.empty((dataset.n_subjects, dataset.n_steps))
    for i, sid in enumerate(dataset.subjects):
        for n in range(dataset.n_steps):
            try:
                mean[i, n] = rows[(sid, n)]
            except KeyError:
                raise MalformedInputError(
                    f"{path}: missing smoothed state for subject {sid}, step {n}"
                ) from None
    return mean


def cmd_recover(args) -> int:
    out = _prepare_out(args)
    scenario = RecoveryScenario(
        kind=args.model,
        n_subjects=args.subjects,
        n_trials=args.trials,
        n_levels=args.levels,
        replications=args.reps,
        prior_var=args.prior_var,
        mu1=args.mu1,
        mu2=args.mu2,
        kappa1=args.kappa1,
        kappa2=args.kappa2,
        n_steps=args.n_steps,
    )
    result = recovery_study(scenario, _sampler_config(args), seed=args.seed,
                            aor_reps=args.aor_reps)
    lam_cols = ",".join(f"lambda_{n}" for n in result.param_names)
    with open(os.path.join(out, "recovery.csv"), "w", newline="", encoding="utf-8") as fh:
        fh.write(f"replication,aor,{lam_cols}\n")
        for row in result.rows:
            lams = ",".join(dataio.fmt(v) for v in row.lambdas)
            fh.write(f"{row.replication},{dataio.fmt(row.aor)},{lams}\n")
        if result.rows:
            lams = ",".join(dataio.fmt(v) for v in result.mean_lambda)
            fh.write(f"mean,{dataio.fmt(result.mean_aor)},{lams}\n")
            lams = ",".join(dataio.fmt(v) for v in result.pooled_lambda)
            fh.write(f"pooled,,{lams}\n")
    _echo(args, out, "recover")
    dataio.write_json(
        os.path.join(out, "metadata.json"),
        {
            "command": "recover",
            "mean_aor": result.mean_aor,
            "mean_lambda": {
                name: result.mean_lambda[p] for p, name in enumerate(result.param_names)
            },
            "pooled_lambda": {
                name: result.pooled_lambda[p] for p, name in enumerate(result.param_names)
            },
            "completed": len(result.rows),
            "failures": [{"replication": m, "reason": r} for m, r in result.failures],
        },
    )
    return 0


def cmd_diagnose(args) -> int:
    out = _prepare_out(args)
    draws, names, first_iter = dataio.read_draws_csv(args.draws)
    summaries = summarize(draws, names, acf_lags=args.acf_lags)
    dataio.write_summary_csv(summaries, os.path.join(out, "summary.csv"))
    with open(os.path.join(out, "acf.csv"), "w", newline="", encoding="utf-8") as fh:
        fh.write("param,lag,value\n")
        for s in summaries:
            for lag, value in enumerate(s.acf):
                fh.write(f"{s.name},{lag},{dataio.fmt(value)}\n")
    _echo(args, out, "diagnose")
    dataio.write_json(
        os.path.join(out, "metadata.json"),
        {
            "command": "diagnose",
            "first_kept_iteration": first_iter,
            "rhat": {s.name: s.rhat for s in summaries},
        },
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mtssm",
        description="State-space modeling of two-choice mouse-tracking trajectories",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="raw x-y paths to angle dataset")
    p.add_argument("--data", required=True, help="raw CSV (subject,trial,t,x,y)")
    p.add_argument("--n-steps", type=int, default=_env_default("n_steps", int, 101))
    p.add_argument("--mode", choices=["index", "arclength"], default="index")
    p.add_argument("--width", type=float, default=1.0, help="screen width")
    p.add_argument("--height", type=float, default=1.0, help="screen height")
    _add_common(p)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("simulate", help="draw a synthetic dataset from the model")
    p.add_argument("--model", choices=["categorical", "continuous", "interaction"],
                   default="categorical")
    p.add_argument("--subjects", type=int, default=12)
    p.add_argument("--trials", type=int, default=12)
    p.add_argument("--levels", type=int, default=2)
    p.add_argument("--n-steps", type=int, default=_env_default("n_steps", int, 101))
    p.add_argument("--theta", default=None,
                   help="comma-separated true parameters (default: prior draw)")
    p.add_argument("--prior-var", type=float,
                   default=_env_default("prior_var", float, 25.0))
    p.add_argument("--kappa1", type=float, default=100.0)
    p.add_argument("--kappa2", type=float, default=100.0)
    _add_measurement_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="estimate the model on a preprocessed dataset")
    p.add_argument("--data", required=True, help="dataset CSV from preprocess/simulate")
    p.add_argument("--design", required=True, help="design CSV (trial,level,covariate)")
    p.add_argument("--model", choices=["categorical", "continuous", "interaction"],
                   default="categorical")
    _add_measurement_flags(p)
    _add_sampler_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("gof", help="goodness of fit for a finished fit")
    p.add_argument("--data", required=True)
    p.add_argument("--design", required=True)
    p.add_argument("--model", choices=["categorical", "continuous", "interaction"],
                   default="categorical")
    p.add_argument("--fit", required=True, help="directory written by `mtssm fit`")
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--prior-var", type=float,
                   default=_env_default("prior_var", float, 25.0))
    p.add_argument("--window", type=float, nargs=2, default=None,
                   metavar=("A", "B"), help="report mean pi over [A%%, B%%]")
    p.add_argument("--identity-check", action="store_true",
                   help="replicate the observed angles verbatim (plumbing test)")
    _add_measurement_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_gof)

    p = sub.add_parser("recover", help="parameter recovery study")
    p.add_argument("--model", choices=["categorical", "continuous", "interaction"],
                   default="categorical")
    p.add_argument("--subjects", type=int, default=12)
    p.add_argument("--trials", type=int, default=12)
    p.add_argument("--levels", type=int, default=2)
    p.add_argument("--reps", type=int, default=50)
    p.add_argument("--n-steps", type=int, default=_env_default("n_steps", int, 101))
    p.add_argument("--kappa1", type=float, default=100.0)
    p.add_argument("--kappa2", type=float, default=100.0)
    p.add_argument("--aor-reps", type=int, default=5)
    _add_measurement_flags(p)
    _add_sampler_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_recover)

    p = sub.add_parser("diagnose", help="summaries and convergence diagnostics")
    p.add_argument("--draws", required=True, help="draws CSV from `mtssm fit`")
    p.add_argument("--acf-lags", type=int, default=20)
    _add_common(p)
    p.set_defaults(func=cmd_diagnose)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except MalformedInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
