"""Command line front end: ``darkmix <command> ...``.

Reports go to ``--out`` when given, otherwise to standard output, as plain
CSV blocks.  Every command exits non-zero on failure, with a distinct status
per error class (see `darkmix.errors`).
"""

from __future__ import annotations

import argparse
import contextlib
import os
import sys

import numpy as np

from . import _parallel
from .diagnostics import (
    block_avg_cov,
    classify,
    cross_condition_regression,
    hm_test,
    qq_data,
    trend_table,
    trim_by_mean,
)
from .em import FitConfig, evaluate, fit
from .errors import DarkmixError
from .inference import bootstrap_se, criteria, lr_test, sweep_k
from .io import fit_info, read_model, read_panel, write_csv_block, write_model, write_panel
from .simulate import preset_atik, simulate_panel

PRESETS = {"atik2": 2, "atik3": 3}


@contextlib.contextmanager
def _output(path):
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _config(args, **extra):
    kw = dict(threads=args.threads, seed=getattr(args, "seed", 0) or 0)
    if getattr(args, "tol", None) is not None:
        kw["rel_tol"] = args.tol
    if getattr(args, "max_iters", None) is not None:
        kw["max_em_iters"] = args.max_iters
    if getattr(args, "restarts", None) is not None:
        kw["restarts"] = args.restarts
    kw.update(extra)
    return FitConfig(**kw)


def cmd_simulate(args):
    model = preset_atik(PRESETS[args.preset], replicates=args.replicates)
    sim = simulate_panel(model, args.n, args.seed, quantize=args.quantize, threads=args.threads)
    write_panel(sim.panel, args.out, layout=args.format)
    if args.labels_out:
        with _output(args.labels_out) as fh:
            write_csv_block(fh, ["pixel", "label"], enumerate(sim.labels.tolist()))
    if args.model_out:
        write_model(model, args.model_out)


def cmd_fit(args):
    panel, _ = read_panel(args.data)
    res = fit(panel, args.k, args.mean, _config(args))
    write_model(res.model, args.out_model, fit_info(res))
    with _output(args.out) as fh:
        write_csv_block(fh, ["iteration", "loglik"], enumerate(res.trace.tolist()), "trace")
        write_csv_block(fh, ["K", "loglik", "iterations", "converged"],
                        [(res.K, res.loglik, res.iterations, int(res.converged))], "fit")


def _criteria_rows(rows):
    return [(r.K, r.loglik, r.params, r.bic, r.icl, r.entropy,
             "" if r.nec is None else r.nec, r.error or "") for r in rows]


def cmd_select(args):
    panel, _ = read_panel(args.data)
    sweep = sweep_k(panel, range(args.k_min, args.k_max + 1), args.mean, _config(args))
    with _output(args.out) as fh:
        write_csv_block(fh, ["K", "loglik", "params", "bic", "icl", "entropy", "nec", "error"],
                        _criteria_rows(sweep.rows), "criteria")
        write_csv_block(fh, ["criterion", "K"],
                        [(c, sweep.best(c) or "") for c in ("bic", "icl", "nec")], "selected")


def cmd_classify(args):
    panel, _ = read_panel(args.data)
    model, _ = read_model(args.model)
    cls = classify(evaluate(panel, model, args.threads))
    with _output(args.out) as fh:
        write_csv_block(fh, ["pixel", "label", "max_posterior"],
                        zip(range(panel.n), cls.labels.tolist(), cls.max_posterior.tolist()))


def _trimmed(panel, args):
    if args.trim is None:
        return panel
    return panel.take(np.flatnonzero(trim_by_mean(panel, args.trim).mask))


def cmd_diagnose(args):
    panel, _ = read_panel(args.data)
    with _output(args.out) as fh:
        if args.what in ("blockcov", "hm"):
            bc = block_avg_cov(_trimmed(panel, args))
            if args.what == "blockcov":
                E = bc.matrix.shape[0]
                write_csv_block(fh, ["condition"] + [f"e{f + 1}" for f in range(E)],
                                [[f"e{e + 1}"] + bc.matrix[e].tolist() for e in range(E)],
                                "block-averaged covariance")
            else:
                rep = hm_test(bc)
                write_csv_block(fh, ["intercept", "residual_variance", "mean_cell", "ratio",
                                     "excluded_cells", "used_cells", "multiplicative", "weighting"],
                                [(rep.intercept, rep.residual_variance, rep.mean_cell, rep.ratio,
                                  rep.excluded, rep.used, int(rep.multiplicative), "unweighted")],
                                "hm test")
                write_csv_block(fh, ["condition", "effect"],
                                [(e + 1, v) for e, v in enumerate(rep.effects.tolist())], "effects")
        elif args.what == "qq":
            sel = panel
            if args.model:
                model, _ = read_model(args.model)
                labels = classify(evaluate(panel, model, args.threads)).labels
                sel = panel.take(np.flatnonzero(labels == 0))
            else:
                sel = _trimmed(panel, args)
            conds = args.condition or list(range(1, panel.design.n_conditions + 1))
            for c in conds:
                qq = qq_data(sel.condition_means[:, c - 1])
                write_csv_block(fh, ["theoretical", "empirical"],
                                zip(qq.theoretical.tolist(), qq.empirical.tolist()),
                                f"qq condition {c} slope={qq.slope!r} flagged={int(qq.flagged)}")
        elif args.what == "xreg":
            other = read_panel(args.data_b)[0] if args.data_b else panel
            if other.n != panel.n:
                raise DarkmixError("panels for the cross-condition regression differ in pixel count")
            a = panel.condition_means[:, args.condition_a - 1]
            b = other.condition_means[:, args.condition_b - 1]
            res = cross_condition_regression(a, b, args.threshold)
            write_csv_block(fh, ["slope", "intercept", "residual_sd", "n_used"],
                            [(res.slope, res.intercept, res.residual_sd, res.n_used)],
                            "cross-condition regression")


def cmd_bootstrap(args):
    panel, _ = read_panel(args.data)
    model, _ = read_model(args.model)
    table = bootstrap_se(panel, model, args.b, args.seed, _config(args, threads=1),
                         warm_start=not args.cold_start, threads=args.threads)
    with _output(args.out) as fh:
        write_csv_block(fh, ["parameter", "estimate", "se"], table.as_rows(),
                        f"bootstrap B={table.B} failures={table.failures}")


def cmd_lrtest(args):
    panel, _ = read_panel(args.data)
    full = evaluate(panel, read_model(args.model_npm)[0], args.threads)
    rest = evaluate(panel, read_model(args.model_lei)[0], args.threads)
    res = lr_test(full, rest)
    with _output(args.out) as fh:
        write_csv_block(fh, ["statistic", "df", "p_value", "loglik_npm", "loglik_lei"],
                        [(res.statistic, res.df, res.p_value, full.loglik, rest.loglik)], "lr test")


def cmd_report(args):
    model, info = read_model(args.model)
    with _output(args.out) as fh:
        write_csv_block(fh, ["component", "temp_c", "duration_s", "mu", "sigma", "tau"],
                        trend_table(model), "trends")
        write_csv_block(fh, ["component", "pi"], enumerate(model.pi.tolist()), "weights")
        if args.data:
            panel, _ = read_panel(args.data)
            row = criteria(evaluate(panel, model, args.threads))
            write_csv_block(fh, ["K", "loglik", "params", "bic", "icl", "entropy"],
                            [(row.K, row.loglik, row.params, row.bic, row.icl, row.entropy)],
                            "criteria")


def build_parser():
    p = argparse.ArgumentParser(prog="darkmix", description=__doc__.splitlines()[0])
    p.add_argument("--threads", type=int, default=None,
                   help=f"worker threads (default: ${_parallel.ENV_THREADS} or 1)")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="sample a panel from a preset model")
    s.add_argument("--preset", choices=sorted(PRESETS), default="atik3")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--replicates", type=int, default=10)
    s.add_argument("--quantize", action="store_true")
    s.add_argument("--format", choices=["f64le", "csv"], default="f64le")
    s.add_argument("--out", required=True, help="manifest path (.json)")
    s.add_argument("--labels-out")
    s.add_argument("--model-out")
    s.set_defaults(func=cmd_simulate)

    def fit_flags(q):
        q.add_argument("--data", required=True)
        q.add_argument("--mean", choices=["npm", "lei"], default="npm")
        q.add_argument("--tol", type=float)
        q.add_argument("--max-iters", type=int)
        q.add_argument("--restarts", type=int)
        q.add_argument("--seed", type=int, default=0)
        q.add_argument("--out")

    f = sub.add_parser("fit", help="fit a K-component mixture")
    fit_flags(f)
    f.add_argument("--k", type=int, required=True)
    f.add_argument("--out-model", required=True)
    f.set_defaults(func=cmd_fit)

    s = sub.add_parser("select", help="criteria over a range of K")
    fit_flags(s)
    s.add_argument("--k-min", type=int, default=1)
    s.add_argument("--k-max", type=int, required=True)
    s.set_defaults(func=cmd_select)

    c = sub.add_parser("classify", help="posterior labels from a fitted model")
    c.add_argument("--data", required=True)
    c.add_argument("--model", required=True)
    c.add_argument("--out")
    c.set_defaults(func=cmd_classify)

    d = sub.add_parser("diagnose", help="exploratory diagnostics")
    d.add_argument("what", choices=["blockcov", "hm", "qq", "xreg"])
    d.add_argument("--data", required=True)
    d.add_argument("--trim", type=float, help="keep pixels with grand mean <= this")
    d.add_argument("--model", help="qq: restrict to pixels classified ordinary")
    d.add_argument("--condition", type=int, action="append", help="qq: 1-based condition (repeatable)")
    d.add_argument("--data-b", help="xreg: second panel on the same pixels")
    d.add_argument("--condition-a", type=int, default=1)
    d.add_argument("--condition-b", type=int, default=2)
    d.add_argument("--threshold", type=float, default=np.inf)
    d.add_argument("--out")
    d.set_defaults(func=cmd_diagnose)

    b = sub.add_parser("bootstrap", help="bootstrap standard errors")
    b.add_argument("--data", required=True)
    b.add_argument("--model", required=True)
    b.add_argument("--b", type=int, required=True)
    b.add_argument("--seed", type=int, required=True)
    b.add_argument("--tol", type=float)
    b.add_argument("--max-iters", type=int)
    b.add_argument("--cold-start", action="store_true")
    b.add_argument("--out")
    b.set_defaults(func=cmd_bootstrap)

    t = sub.add_parser("lrtest", help="likelihood ratio of NPM against LEI")
    t.add_argument("--data", required=True)
    t.add_argument("--model-npm", required=True)
    t.add_argument("--model-lei", required=True)
    t.add_argument("--out")
    t.set_defaults(func=cmd_lrtest)

    r = sub.add_parser("report", help="mean / sigma / tau trends of a model")
    r.add_argument("--model", required=True)
    r.add_argument("--data")
    r.add_argument("--out")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.threads is None:
        args.threads = _parallel.resolve_threads(os.environ.get(_parallel.ENV_THREADS))
    try:
        args.func(args)
    except DarkmixError as exc:
        print(f"darkmix: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, ValueError) as exc:
        print(f"darkmix: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
