"""Command-line interface.

Subcommands: ``fit`` (estimate a mixing distribution from a counts file),
``predict`` (apply a fitted, Robbins, or worst-case rule), ``evaluate``
(score predictions against truths), and ``simulate`` (replicated
experiments with plot-ready output).  Exit codes: 0 success, 2 usage
error, 3 data error, 4 solver failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import asdict

from . import dataio
from .core import EmpiricalPMF, PosteriorUndefinedError, bayes_curve, robbins_estimate
from .divergences import DISTANCES, get_distance
from .evaluation import prediction_metrics
from .simulate import (parse_prior_spec, run_hellinger_experiment,
                       run_regression_experiment, run_regret_experiment)
from .solver import SolverConfig, SolverError, fit, worst_case_prior

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_SOLVER = 4


def _write_text(path, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


def _solver_config(args) -> SolverConfig:
    return SolverConfig(
        max_iters=args.max_iter,
        init_grid_size=args.grid,
        support_max=args.support_max,
    )


def _cmd_fit(args) -> int:
    counts = dataio.read_counts_csv(args.counts)
    emp = EmpiricalPMF.from_sample(counts)
    config = _solver_config(args)
    spec = get_distance(args.dist)
    try:
        result = fit(spec, emp, config)
    except SolverError as exc:
        trace_path = (args.out or "fit") + ".trace.json"
        payload = {"error": str(exc), "objective_trace": list(exc.trace)}
        with open(trace_path, "w", newline="") as fh:
            fh.write(dataio.canonical_json(payload))
        print(f"error: solver failed: {exc} (trace at {trace_path})",
              file=sys.stderr)
        return EXIT_SOLVER
    cert = result.certificate
    doc = dataio.PriorDocument(
        atoms=result.prior.atoms,
        weights=result.prior.weights,
        dist=spec.name,
        objective=result.objective,
        certificate={"min_D": cert.min_d,
                     "max_abs_D_atoms": cert.max_abs_d_atoms,
                     "scale": cert.scale},
        config=asdict(config),
        seed=args.seed,
        data_sha256=dataio.sha256_file(args.counts),
    )
    print(f"dist={spec.name} atoms={result.prior.num_atoms} "
          f"objective={result.objective:.12g} min_D={cert.min_d:.6g} "
          f"max_abs_D_atoms={cert.max_abs_d_atoms:.6g} scale={cert.scale:.6g} "
          f"iterations={result.iterations_used} converged={result.converged}",
          file=sys.stderr)
    _write_text(args.out, doc.render())
    return EXIT_OK


def _cmd_predict(args) -> int:
    counts = dataio.read_counts_csv(args.counts)
    if args.prior is not None:
        doc = dataio.read_prior_document(args.prior)
        predictions = bayes_curve(doc.to_prior(), counts)
    elif args.robbins:
        emp = EmpiricalPMF.from_sample(counts)
        predictions = [robbins_estimate(emp, y) for y in counts]
    else:
        prior = worst_case_prior(args.support_max, args.grid)
        predictions = bayes_curve(prior, counts)
    _write_text(args.out, dataio.render_predictions_csv(counts, predictions))
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    predictions = dataio.read_values_csv(args.predictions)
    truths = dataio.read_values_csv(args.truths)
    try:
        metrics = prediction_metrics(predictions, truths)
    except ValueError as exc:
        raise dataio.DataError(str(exc)) from None
    payload = {"rmse": metrics.rmse, "mad": metrics.mad, "n": metrics.n}
    _write_text(args.out, dataio.canonical_json(payload))
    return EXIT_OK


def _method_payload(mres) -> dict:
    return {
        "mean": mres.mean,
        "sd": mres.sd,
        "half_width": mres.half_width,
        "reps_used": mres.reps_used,
        "failures": mres.failures,
        "samples": list(mres.samples),
    }


def _experiment_payload(res) -> dict:
    return {
        "statistic": res.statistic,
        "methods": {name: _method_payload(m) for name, m in res.methods.items()},
        "config": res.config,
    }


def _plot_rows(xs_and_results) -> str:
    lines = ["x,method,mean,ci_low,ci_high"]
    rows = []
    for x, res in xs_and_results:
        for name, m in res.methods.items():
            rows.append((x, name, m.mean, m.mean - m.half_width,
                         m.mean + m.half_width))
    rows.sort(key=lambda r: (r[0], r[1]))
    for x, name, mean, lo, hi in rows:
        lines.append(f"{x},{name},{dataio.format_fixed(mean)},"
                     f"{dataio.format_fixed(lo)},{dataio.format_fixed(hi)}")
    return "\n".join(lines) + "\n"


def _parse_methods(text: str) -> tuple:
    return tuple(m.strip() for m in text.split(",") if m.strip())


def _cmd_simulate(args) -> int:
    methods = _parse_methods(args.methods)
    if args.experiment == "regret":
        spec = parse_prior_spec(args.prior)
        res = run_regret_experiment(spec, args.n, args.reps, methods, args.seed)
        payload = _experiment_payload(res)
        plot = _plot_rows([(args.n, res)])
    elif args.experiment == "hellinger":
        spec = parse_prior_spec(args.prior)
        sizes = tuple(int(s) for s in args.sizes.split(","))
        by_size = run_hellinger_experiment(spec, sizes, args.reps, methods,
                                           args.seed)
        payload = {
            "statistic": "hellinger_sq",
            "sizes": list(sizes),
            "by_size": {str(size): _experiment_payload(r)
                        for size, r in by_size.items()},
        }
        plot = _plot_rows(sorted(by_size.items()))
    else:
        res = run_regression_experiment(args.d, args.n, args.reps, methods,
                                        args.seed)
        payload = _experiment_payload(res)
        plot = _plot_rows([(args.d, res)])
    _write_text(args.out, dataio.canonical_json(payload))
    if args.plot_out is not None:
        _write_text(args.plot_out, plot)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ebpoisson",
        description="Empirical-Bayes estimation for Poisson count data.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit a mixing distribution to counts")
    p_fit.add_argument("counts", help="CSV of counts, one per row")
    p_fit.add_argument("--dist", choices=sorted(DISTANCES), default="kl")
    p_fit.add_argument("--support-max", type=float, default=None,
                       help="restrict atoms to [0, h]")
    p_fit.add_argument("--grid", type=int, default=1000)
    p_fit.add_argument("--max-iter", type=int, default=15)
    p_fit.add_argument("--seed", type=int, default=0,
                       help="recorded in the output document")
    p_fit.add_argument("--out", default=None, help="document path (default stdout)")
    p_fit.set_defaults(func=_cmd_fit)

    p_pred = sub.add_parser("predict", help="posterior-mean predictions per row")
    p_pred.add_argument("counts", help="CSV of counts, one per row")
    mode = p_pred.add_mutually_exclusive_group(required=True)
    mode.add_argument("--prior", metavar="DOC", help="fitted prior document")
    mode.add_argument("--robbins", action="store_true")
    mode.add_argument("--minimax", action="store_true",
                      help="Bayes rule of the least-favorable prior on [0, h]")
    p_pred.add_argument("--support-max", type=float, default=50.0, metavar="H")
    p_pred.add_argument("--grid", type=int, default=1000)
    p_pred.add_argument("--out", default=None)
    p_pred.set_defaults(func=_cmd_predict)

    p_eval = sub.add_parser("evaluate", help="rmse/mad of predictions vs truths")
    p_eval.add_argument("predictions")
    p_eval.add_argument("truths")
    p_eval.add_argument("--out", default=None)
    p_eval.set_defaults(func=_cmd_evaluate)

    p_sim = sub.add_parser("simulate", help="replicated experiments")
    sim_sub = p_sim.add_subparsers(dest="experiment", required=True)

    p_reg = sim_sub.add_parser("regret", help="regret vs the true rule")
    p_reg.add_argument("--prior", required=True,
                       help="e.g. gamma:4,2  uniform:0,3  point:2  poimix:1=0.5,8=0.5")
    p_reg.add_argument("--n", type=int, default=200)
    p_reg.add_argument("--reps", type=int, default=50)
    p_reg.add_argument("--methods", default="robbins,kl,h2,chi2")
    p_reg.add_argument("--seed", type=int, default=0)
    p_reg.add_argument("--out", default=None)
    p_reg.add_argument("--plot-out", default=None)
    p_reg.set_defaults(func=_cmd_simulate)

    p_hel = sim_sub.add_parser("hellinger", help="pmf error across sample sizes")
    p_hel.add_argument("--prior", required=True)
    p_hel.add_argument("--sizes", default="100,1000,10000")
    p_hel.add_argument("--reps", type=int, default=20)
    p_hel.add_argument("--methods", default="kl,h2,chi2")
    p_hel.add_argument("--seed", type=int, default=0)
    p_hel.add_argument("--out", default=None)
    p_hel.add_argument("--plot-out", default=None)
    p_hel.set_defaults(func=_cmd_simulate)

    p_fil = sim_sub.add_parser("filter-regress",
                               help="regression on denoised covariates")
    p_fil.add_argument("--d", type=int, default=2)
    p_fil.add_argument("--n", type=int, default=1200)
    p_fil.add_argument("--reps", type=int, default=20)
    p_fil.add_argument("--methods", default="kl,h2,chi2")
    p_fil.add_argument("--seed", type=int, default=0)
    p_fil.add_argument("--out", default=None)
    p_fil.add_argument("--plot-out", default=None)
    p_fil.set_defaults(func=_cmd_simulate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except dataio.DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except PosteriorUndefinedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SolverError as exc:
        print(f"error: solver failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
