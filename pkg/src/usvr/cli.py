"""Command-line entry point: ``usvr <subcommand> ...``.

Exit codes: 0 success, 1 usage or input error, 2 numerical failure.
Floats are printed with 4 significant digits; files keep full precision.
Set ``USVR_LOG`` (e.g. ``INFO``, ``DEBUG``) to control log verbosity.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import diagnostics, experiment, qp
from .cccp import UniversumSet, UsvrHyperParams, fit_usvr
from .data import DataError, load_csv, load_inputs, save_csv
from .kernel import KernelError, KernelSpec
from .modelsel import GridSpec, MetricError, SelectionError, nrms, select_svr, select_usvr
from .svr import Model, SvrHyperParams, fit_svr
from .universum import UniversumError, generate

log = logging.getLogger("usvr")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _g(x: float) -> str:
    return f"{x:.4g}"


# -- shared argument groups ---------------------------------------------------


def _add_data(p, *, universum: bool = True) -> None:
    p.add_argument("--data", required=True, help="training CSV with a header row")
    p.add_argument("--target-column", default="y")
    if universum:
        p.add_argument("--universum", help="universum CSV in the same schema")


def _add_kernel(p) -> None:
    p.add_argument("--kernel", choices=("linear", "poly", "rbf"), default="linear")
    p.add_argument("--gamma", type=float, help="rbf width (required for rbf)")
    p.add_argument("--degree", type=int, help="polynomial degree (required for poly)")


def _add_common(p) -> None:
    p.add_argument("--tol", type=float, default=qp.DEFAULT_TOL)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output path (file or directory, per subcommand)")


def _kernel(args) -> KernelSpec:
    if args.kernel == "rbf":
        if args.gamma is None:
            raise UsageError("--kernel rbf needs --gamma")
        return KernelSpec.rbf(args.gamma)
    if args.kernel == "poly":
        if args.degree is None:
            raise UsageError("--kernel poly needs --degree")
        return KernelSpec.poly(args.degree)
    return KernelSpec.linear()


def _check_inputs(*paths) -> None:
    for p in paths:
        if p is not None and not Path(p).is_file():
            raise UsageError(f"no such file: {p}")


def _floats(text: str | None):
    return None if text is None else tuple(float(v) for v in text.split(","))


# -- subcommands --------------------------------------------------------------


def cmd_train(args) -> int:
    _check_inputs(args.data, args.universum, args.val)
    train = load_csv(args.data, args.target_column)
    C = args.c if args.c is not None else float(np.ptp(train.targets))
    base = SvrHyperParams(C, args.epsilon, _kernel(args))
    if args.universum is None:
        model, diag = fit_svr(train, base, args.tol)
        print(f"svr: C={_g(C)} epsilon={_g(args.epsilon)} n_support={model.n_support} "
              f"iterations={diag.solver['iterations']} kkt={_g(diag.solver['kkt_violation'])}")
    else:
        U = load_csv(args.universum, args.target_column)
        U = UniversumSet(U.inputs, U.targets)
        if args.cstar is None or args.delta is None:
            if args.val is None:
                raise UsageError("--universum needs --cstar and --delta, or --val to select them")
            val = load_csv(args.val, args.target_column)
            params, _ = select_usvr(train, val, U, base, GridSpec(), args.tol)
            if args.cstar is not None or args.delta is not None:
                params = UsvrHyperParams(base, args.cstar if args.cstar is not None else params.cstar,
                                         args.delta if args.delta is not None else params.delta)
        else:
            params = UsvrHyperParams(base, args.cstar, args.delta)
        model, diag, state = fit_usvr(train, U, params, args.tol)
        print(f"usvr: C={_g(C)} epsilon={_g(args.epsilon)} cstar={_g(params.cstar)} "
              f"delta={_g(params.delta)} n_support={model.n_support} "
              f"outer={state.iteration} status={state.status}")
    print(f"train NRMS {_g(nrms(train.targets, model.decision(train.inputs)))}")
    out = Path(args.out or "model.json")
    model.save(out)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_predict(args) -> int:
    _check_inputs(args.model, args.data)
    try:
        model = Model.load(args.model)
    except (ValueError, KeyError) as exc:
        raise UsageError(f"{args.model}: not a model file ({exc})") from None
    names, X = load_inputs(args.data)
    y = None
    if args.target_column in names:
        ds = load_csv(args.data, args.target_column, drop_missing=False)
        X, y = ds.inputs, ds.targets
    if X.shape[1] != model.n_features:
        raise UsageError(f"{args.data}: model expects {model.n_features} features, got {X.shape[1]}")
    pred = model.decision(X)
    out = Path(args.out or "predictions.csv")
    with out.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["prediction"])
        w.writerows([[repr(float(v))] for v in pred])
    print(f"wrote {pred.size} predictions to {out}")
    if y is not None and y.size > 1 and np.std(y) > 0:
        print(f"NRMS {_g(nrms(y, pred))}")
    return EXIT_OK


def cmd_universum(args) -> int:
    train = None
    if args.strategy != "hypercube1":
        if args.data is None:
            raise UsageError(f"strategy {args.strategy} needs --data")
        _check_inputs(args.data)
        train = load_csv(args.data, args.target_column)
    U = generate(args.strategy, args.m, args.seed, train)
    out = Path(args.out or "universum.csv")
    save_csv(U, out, args.target_column)
    print(f"wrote {U.n} universum rows ({U.d} features) to {out}")
    return EXIT_OK


def cmd_select(args) -> int:
    _check_inputs(args.data, args.val, args.universum)
    train = load_csv(args.data, args.target_column)
    val = load_csv(args.val, args.target_column)
    kernels = (_kernel(args),)
    if args.kernel == "rbf" and args.gammas:
        kernels = tuple(KernelSpec.rbf(g) for g in _floats(args.gammas))
    base = GridSpec(kernels=kernels)
    grid = GridSpec(
        _floats(args.epsilons) or base.epsilons,
        kernels,
        _floats(args.ratios) or base.cstar_ratios,
        _floats(args.deltas) or base.deltas,
    )
    params, rep = select_svr(train, val, grid, args.tol)
    print(f"svr: kernel={params.kernel} C={_g(params.C)} epsilon={_g(params.epsilon)} "
          f"val NRMS {_g(rep.best_score)}")
    reports = {"svr": rep}
    if args.universum:
        U = load_csv(args.universum, args.target_column)
        uparams, urep = select_usvr(train, val, UniversumSet(U.inputs, U.targets), params, grid, args.tol)
        print(f"usvr: cstar={_g(uparams.cstar)} delta={_g(uparams.delta)} val NRMS {_g(urep.best_score)}")
        reports["usvr"] = urep
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for name, r in reports.items():
            (out / f"select_{name}.csv").write_text(r.to_csv())
            (out / f"select_{name}.json").write_text(r.to_json())
        print(f"wrote selection tables to {out}")
    return EXIT_OK


def _print_summary(rep: experiment.ExperimentReport) -> None:
    print(f"{rep.config['name']} m={rep.config['m']} trials={len(rep.ok_rows)}/{len(rep.rows)}")
    for method, stats in rep.summary().items():
        cells = [f"{k} {_g(v['mean'])} +- {_g(v['std'])}" for k, v in stats.items()]
        print(f"  {method:12s} " + "  ".join(cells))
    conv = rep.convergence()
    if conv["fits"]:
        print(f"  cccp: median outer {_g(conv['median_outer_iterations'])}, "
              f"max objective increase {_g(conv['max_objective_increase'])}")


def cmd_experiment(args) -> int:
    if args.config:
        _check_inputs(args.config)
        cfg = experiment.ExperimentConfig.from_dict(json.loads(Path(args.config).read_text()))
        real = None
    elif args.scenario in experiment.PRESETS:
        cfg, real = experiment.PRESETS[args.scenario], None
    elif args.scenario in experiment.REAL_PRESETS:
        real, cfg = experiment.REAL_PRESETS[args.scenario]
        if args.data is None:
            raise UsageError(f"scenario {args.scenario} needs --data")
    else:
        choices = sorted(experiment.PRESETS) + sorted(experiment.REAL_PRESETS)
        raise UsageError(f"unknown scenario {args.scenario!r}; choose one of {choices} or pass --config")
    overrides = {"seed": args.seed}
    if args.trials is not None:
        overrides["trials"] = args.trials
    if args.tol is not None:
        overrides["tol"] = args.tol
    if args.m is not None:
        overrides["m"] = args.m
    cfg = replace(cfg, **overrides)
    out = Path(args.out or "results")
    if real is not None:
        if args.m is not None:
            real = replace(real, m=args.m)
        reports = [experiment.run_real_dataset(args.data, real, cfg, args.jobs)]
    elif args.scenario == "table4" and args.m is None:
        reports = experiment.run_universum_size_sweep(cfg, experiment.TABLE4_SIZES, args.jobs)
    else:
        reports = [experiment.run_scenario(cfg, args.jobs)]
    for rep in reports:
        stem = rep.config["name"] + (f"_m{rep.config['m']}" if len(reports) > 1 else "")
        paths = rep.write(out, stem)
        _print_summary(rep)
        print(f"  wrote {len(paths)} files to {out}")
    return EXIT_OK


def cmd_histogram(args) -> int:
    _check_inputs(args.model, args.data, args.universum)
    model = Model.load(args.model)
    train = load_csv(args.data, args.target_column)
    r_train = diagnostics.residuals(model, train)
    r_univ = np.zeros(0)
    if args.universum:
        r_univ = diagnostics.residuals(model, load_csv(args.universum, args.target_column))
    params = model.meta.get("params", {})
    eps = args.epsilon if args.epsilon is not None else float(params.get("epsilon", 0.0))
    delta = args.delta if args.delta is not None else float(params.get("delta", 0.0))
    hist = diagnostics.histogram(r_train, r_univ, args.bins, eps, delta)
    out = Path(args.out or "histogram.csv")
    hist.save(out)
    print(f"wrote {args.bins} bins to {out}")
    if r_univ.size:
        print(f"universum within delta: {_g(diagnostics.fraction_within_delta(r_univ, delta))}")
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="usvr", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="fit an SVR, or a universum SVR when --universum is given")
    _add_data(p)
    _add_kernel(p)
    _add_common(p)
    p.add_argument("--val", help="validation CSV used to select --cstar/--delta when omitted")
    p.add_argument("--c", type=float, help="penalty C (default: target range)")
    p.add_argument("--epsilon", type=float, default=0.0)
    p.add_argument("--cstar", type=float)
    p.add_argument("--delta", type=float)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="apply a saved model to a CSV")
    p.add_argument("--model", required=True)
    _add_data(p, universum=False)
    _add_common(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("universum", help="generate a synthetic universum")
    p.add_argument("--data", help="training CSV (not needed for hypercube1)")
    p.add_argument("--target-column", default="y")
    p.add_argument("--strategy", choices=("1", "2", "3", "4", "hypercube1"), required=True)
    p.add_argument("--m", type=int, required=True)
    _add_common(p)
    p.set_defaults(func=cmd_universum)

    p = sub.add_parser("select", help="two-step grid selection on a validation set")
    _add_data(p)
    _add_kernel(p)
    _add_common(p)
    p.add_argument("--val", required=True, help="validation CSV")
    p.add_argument("--epsilons", help="comma-separated epsilon grid")
    p.add_argument("--ratios", help="comma-separated C*/C grid")
    p.add_argument("--deltas", help="comma-separated Delta grid")
    p.add_argument("--gammas", help="comma-separated rbf width grid")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("experiment", help="run a named scenario or a JSON config")
    p.add_argument("scenario", nargs="?", default="table1-low-noise")
    p.add_argument("--config", help="JSON file with experiment settings")
    p.add_argument("--data", help="dataset file for real-data scenarios")
    p.add_argument("--trials", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", help="output directory (default: results)")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("histogram", help="export residual histograms for a saved model")
    p.add_argument("--model", required=True)
    _add_data(p)
    _add_common(p)
    p.add_argument("--bins", type=int, default=diagnostics.DEFAULT_BINS)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--delta", type=float)
    p.set_defaults(func=cmd_histogram)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("USVR_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, DataError, KernelError, UniversumError, MetricError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (qp.QpError, SelectionError, experiment.ScenarioError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
