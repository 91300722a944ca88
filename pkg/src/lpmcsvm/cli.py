"""Command-line interface.

Exit codes: 0 success, 2 bad flags, 3 data errors, 4 solver failure.
All randomness derives from ``--seed`` (default 0).  CSV output never holds
timing; timings go to the log on stderr.
"""
import argparse
import csv
import io
import logging
import sys
import time

import numpy as np

from . import bounds, complexity, dataio, experiments
from .fw import FwConfig, NotDescentDirection
from .losses import CLI_LOSSES, batch_values, loss_from_cli
from .norms import format_exponent, parse_exponent

log = logging.getLogger("lpmcsvm")

EXIT_FLAGS = 2
EXIT_DATA = 3
EXIT_SOLVER = 4
MODEL_MAGIC = "MCSVM 1"


class SolverFailure(RuntimeError):
    pass


# ---------------------------------------------------------------- model files


def write_model(path, w, label_map, p, lam, spec):
    d, c = w.shape
    head = f"d={d} c={c} p={format_exponent(p)} lambda={float(lam)!r} loss={spec.cli_name}"
    if spec.family == "top_k":
        head += f" k={spec.k}"
    if CLI_LOSSES[spec.cli_name][1] is None:
        head += f" base={spec.base}"
    lines = [MODEL_MAGIC, head, " ".join(str(lab) for lab in label_map)]
    lines += [" ".join("%.17g" % v for v in row) for row in np.asarray(w)]
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_model(path):
    """Returns ``(w, label_map, p, lam, spec)``."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if len(lines) < 3 or lines[0].strip() != MODEL_MAGIC:
        raise dataio.DataError(f"{path}: not a model file")
    try:
        head = dict(tok.split("=", 1) for tok in lines[1].split())
        d, c = int(head["d"]), int(head["c"])
        p = parse_exponent(head["p"])
        lam = float(head["lambda"])
        spec = loss_from_cli(head["loss"], c, int(head.get("k", 1)), head.get("base", "hinge"))
        label_map = tuple(int(t) for t in lines[2].split())
        w = np.array([[float(t) for t in ln.split()] for ln in lines[3:3 + d]], dtype=float).reshape(d, c)
    except (KeyError, ValueError) as exc:
        raise dataio.DataError(f"{path}: malformed model file ({exc})") from None
    if len(label_map) != c or len(lines) < 3 + d:
        raise dataio.DataError(f"{path}: model file is truncated or inconsistent")
    return w, label_map, p, lam, spec


# ---------------------------------------------------------------- helpers


def _float_list(text):
    return [float(t) for t in str(text).split(",") if t.strip()]


def _exp_list(text):
    return [parse_exponent(t) for t in str(text).split(",") if t.strip()]


def _int_list(text):
    return [int(t) for t in str(text).split(",") if t.strip()]


def _write_text(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="\n") as fh:
            fh.write(text)


def _fw_config(args, p=None, lam=None):
    return FwConfig(
        p=args.p if p is None else p,
        lam=args.lam if lam is None else lam,
        max_iters=args.max_iters,
        gap_tol=args.gap_tol,
        step_rule=args.step_rule,
    )


def _spec(args, c):
    return loss_from_cli(args.loss, c, args.k, args.base)


def _check_w(w):
    if not np.all(np.isfinite(w)):
        raise SolverFailure("solver produced non-finite weights")


def _require(parser, args, names):
    flags = {a.dest: a.option_strings[-1] for a in parser._actions if a.option_strings}
    missing = [flags.get(n, "--" + n) for n in names if getattr(args, n, None) is None]
    if missing:
        parser.error("missing required flag(s): " + ", ".join(missing))


# ---------------------------------------------------------------- commands


def cmd_train(args):
    ds = dataio.load_libsvm(args.data, n_features=args.n_features)
    spec = _spec(args, ds.c)
    t0 = time.perf_counter()
    rec = experiments.train(ds, spec, _fw_config(args), risk_lambda=args.risk_lambda)
    _check_w(rec.w)
    log.info("trained in %.2fs: %d iterations, gap %.3g, converged=%s",
             time.perf_counter() - t0, rec.fw_trace.iterations, rec.fw_trace.final_gap, rec.fw_trace.converged)
    write_model(args.out, rec.w, ds.label_map, args.p, args.lam, spec)
    print(f"train_loss={rec.train_loss!r} structural_risk={rec.structural_risk!r} "
          f"fw_iters={rec.fw_trace.iterations} fw_gap={rec.fw_trace.final_gap!r} converged={int(rec.fw_trace.converged)}")
    return 0


def cmd_predict(args):
    w, label_map, *_ = read_model(args.model)
    ds = dataio.load_libsvm(args.data, n_features=w.shape[0], label_map=None)
    pred = experiments.predict(w, ds.X)
    _write_text(args.out, "".join(f"{label_map[k - 1]}\n" for k in pred))
    return 0


def cmd_evaluate(args):
    w, label_map, p, lam, spec = read_model(args.model)
    ds = dataio.load_libsvm(args.data, n_features=w.shape[0], label_map=label_map)
    acc = experiments.accuracy(w, ds, label_map)
    loss = float(np.mean(batch_values(spec, ds.X @ w, ds.y0)))
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["n", "accuracy", "mean_loss"])
    wr.writerow([ds.n, repr(acc), repr(loss)])
    _write_text(args.out, buf.getvalue())
    return 0


def cmd_aerc(args, parser):
    if (args.p_list is None) == (args.c_list is None):
        parser.error("give exactly one of --p-list and --c-list")
    ds = dataio.load_libsvm(args.data, n_features=args.n_features)
    t0 = time.perf_counter()
    kw = dict(draws=args.draws, noise_kind=args.noise, seed=args.seed, restarts=args.restarts, jobs=args.jobs)
    if args.p_list is not None:
        ps = _exp_list(args.p_list)
        spec = _spec(args, ds.c)
        cfg = _fw_config(args, p=ps[0])
        ests = complexity.estimate_over_p(ds, spec, cfg, ps, warm_start=not args.no_warm_start, **kw)
        settings = [(p, ds.c, e) for p, e in zip(ps, ests)]
        fit = complexity.fit_scaling(ps, [e.mean for e in ests], ds.c, "in_p")
    else:
        cs = _int_list(args.c_list)
        settings = []
        for c_new in cs:
            sub = dataio.relabel(ds, c_new)
            est = complexity.estimate(sub, _spec(args, c_new), _fw_config(args), **kw)
            settings.append((args.p, c_new, est))
        fit = complexity.fit_scaling(cs, [e.mean for _, _, e in settings], args.p, "in_c")
    log.info("aerc finished in %.2fs", time.perf_counter() - t0)
    failed = [s for s in settings if s[2].failed]
    _write_text(args.out, complexity.aerc_csv(settings, fit))
    if failed:
        raise SolverFailure(f"{len(failed)} setting(s) had failed draws")
    return 0


def _read_means(path):
    xs, ys = [], []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            if row["kind"] != "mean":
                continue
            xs.append((row["p"], row["c"]))
            ys.append(float(row["value"]))
    if not ys:
        raise dataio.DataError(f"{path}: no mean rows")
    p_vals = {x[0] for x in xs}
    c_vals = {x[1] for x in xs}
    if len(c_vals) == 1 and len(p_vals) == len(xs):
        return [parse_exponent(x[0]) for x in xs], ys, float(next(iter(c_vals))), "in_p"
    if len(p_vals) == 1:
        return [float(x[1]) for x in xs], ys, parse_exponent(next(iter(p_vals))), "in_c"
    raise dataio.DataError(f"{path}: mean rows vary in both p and c")


def cmd_fit_scaling(args, parser):
    if args.aerc_csv is not None:
        xs, ys, c_or_p, kind = _read_means(args.aerc_csv)
        kind = args.model or kind
    else:
        _require(parser, args, ["x", "y", "c_or_p", "model"])
        xs = _exp_list(args.x) if args.model == "in_p" else _float_list(args.x)
        ys = _float_list(args.y)
        c_or_p = parse_exponent(args.c_or_p)
        kind = args.model
        if len(xs) != len(ys):
            parser.error("--x and --y need the same number of values")
    fit = complexity.fit_scaling(xs, ys, c_or_p, kind)
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["model_kind", "tau_hat", "residual_rms", "mean_value"])
    wr.writerow([fit.model_kind, repr(fit.tau_hat), repr(fit.residual_rms), repr(float(np.mean(ys)))])
    _write_text(args.out, buf.getvalue())
    return 0


def cmd_bounds(args, parser):
    method = bounds.CLI_METHODS[args.method]
    reg = "schatten" if method == "schatten" else "block_l2p"
    kw = dict(lam=args.lam, p=args.p, delta=args.delta, regularizer=reg, k=args.k if method == "top_k" else None)
    spec_b_psi = args.b_psi
    if args.data is not None:
        ds = dataio.load_libsvm(args.data, n_features=args.n_features)
        st = dataio.stats(ds)
        q = bounds.BoundQuery.from_stats(st, n=ds.n, c=ds.c, d=ds.d, **kw)
        if args.b_psi_model is not None:
            w, label_map, *_ = read_model(args.b_psi_model)
            ds_m = dataio.load_libsvm(args.data, n_features=w.shape[0], label_map=label_map)
            spec = bounds.method_loss(method, ds.c, args.k, args.base)
            spec_b_psi = float(np.max(batch_values(spec, ds_m.X @ w, ds_m.y0)))
    else:
        _require(parser, args, ["n", "c", "max_norm", "sumsq"])
        q = bounds.BoundQuery(n=args.n, c=args.c, d=args.d, max_norm=args.max_norm, sum_sq=args.sumsq, **kw)
    rep = bounds.method_bound(method, q, base=args.base, b_psi=spec_b_psi)
    for wmsg in rep.warnings:
        log.warning(wmsg)
    sys.stdout.write(rep.format_text() + "\n")
    if args.out is not None:
        _write_text(args.out, bounds.reports_csv([rep]))
    return 0


def cmd_select(args, parser):
    tr = dataio.load_libsvm(args.train, n_features=args.n_features)
    te = dataio.load_libsvm(args.test, n_features=tr.d, label_map=tr.label_map)
    spec = _spec(args, tr.c)
    grid = experiments.GridSpec(tuple(_exp_list(args.grid_p)), tuple(_float_list(args.grid_lambda)), args.risk_lambda)
    t0 = time.perf_counter()
    selected, oracle, table = experiments.select_model(tr, te, spec, grid, _fw_config(args, p=2.0, lam=1.0),
                                                       warm_start=not args.no_warm_start, jobs=args.jobs)
    for rec in table:
        _check_w(rec.w)
    log.info("grid of %d models in %.2fs", len(table), time.perf_counter() - t0)
    _write_text(args.out, experiments.grid_csv(table))
    if args.selected_out:
        write_model(args.selected_out, selected.w, tr.label_map, selected.p, selected.lam, spec)
    if args.oracle_out:
        write_model(args.oracle_out, oracle.w, tr.label_map, oracle.p, oracle.lam, spec)
    sys.stderr.write(
        f"selected p={format_exponent(selected.p)} lambda={selected.lam!r} accuracy={selected.test_accuracy!r}\n"
        f"oracle p={format_exponent(oracle.p)} lambda={oracle.lam!r} accuracy={oracle.test_accuracy!r}\n"
    )
    return 0


def cmd_split(args):
    ds = dataio.load_libsvm(args.data)
    head, tail = dataio.split_head_fraction(ds, args.fraction)
    _write_text(args.head_out, dataio.to_libsvm(head))
    _write_text(args.tail_out, dataio.to_libsvm(tail))
    return 0


def cmd_table1(args):
    rows = bounds.comparison_table(args.n, args.c, lam=args.lam, max_norm=args.max_norm, delta=args.delta,
                                   p=args.p, d=args.d, k=args.k)
    buf = io.StringIO()
    wr = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    wr.writeheader()
    wr.writerows(rows)
    _write_text(args.out, buf.getvalue())
    return 0


# ---------------------------------------------------------------- parser


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return v


def _exponent(text):
    try:
        return parse_exponent(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"bad exponent {text!r}") from None


def _add_common(sp):
    sp.add_argument("--config", help="flat key=value file; flags override it")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--jobs", type=_positive_int, default=1)
    sp.add_argument("-v", "--verbose", action="store_true")


def _add_loss(sp):
    sp.add_argument("--loss", choices=sorted(CLI_LOSSES))
    sp.add_argument("--k", type=_positive_int, default=1, help="k of the top-k loss")
    sp.add_argument("--base", choices=("hinge", "logistic"), default="hinge",
                    help="base loss of the ww, llw and jenssen losses")


def _add_solver(sp):
    sp.add_argument("--max-iters", type=int, default=10_000)
    sp.add_argument("--gap-tol", type=float, default=1e-4)
    sp.add_argument("--step-rule", choices=("armijo", "harmonic"), default="armijo")


def build_parser():
    parser = argparse.ArgumentParser(prog="lpmcsvm", description="Multi-class SVMs over block l2,p balls.")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("train", help="train one model")
    _add_common(sp)
    _add_loss(sp)
    _add_solver(sp)
    sp.add_argument("--data")
    sp.add_argument("--p", type=_exponent)
    sp.add_argument("--lambda", dest="lam", type=float)
    sp.add_argument("--out", default="model.txt")
    sp.add_argument("--n-features", type=int)
    sp.add_argument("--risk-lambda", type=float, default=experiments.RISK_LAMBDA)
    sp.set_defaults(required=("data", "loss", "p", "lam"))

    sp = sub.add_parser("predict", help="predict labels with a saved model")
    _add_common(sp)
    sp.add_argument("--model")
    sp.add_argument("--data")
    sp.add_argument("--out", default="-")
    sp.set_defaults(required=("model", "data"))

    sp = sub.add_parser("evaluate", help="accuracy and mean loss of a saved model")
    _add_common(sp)
    sp.add_argument("--model")
    sp.add_argument("--data")
    sp.add_argument("--out", default="-")
    sp.set_defaults(required=("model", "data"))

    sp = sub.add_parser("aerc", help="Monte-Carlo complexity estimates over p or over c")
    _add_common(sp)
    _add_loss(sp)
    _add_solver(sp)
    sp.add_argument("--data")
    sp.add_argument("--lambda", dest="lam", type=float)
    sp.add_argument("--p", type=_exponent, default=2.0, help="exponent for --c-list sweeps")
    sp.add_argument("--p-list")
    sp.add_argument("--c-list")
    sp.add_argument("--draws", type=_positive_int, default=20)
    sp.add_argument("--noise", choices=complexity.NOISE_KINDS, default="rademacher")
    sp.add_argument("--restarts", type=int, default=0)
    sp.add_argument("--no-warm-start", action="store_true")
    sp.add_argument("--n-features", type=int)
    sp.add_argument("--out", default="-")
    sp.set_defaults(required=("data", "loss", "lam"))

    sp = sub.add_parser("fit-scaling", help="fit tau in AERC ~ tau * c^(1/2 - 1/max(2,p))")
    _add_common(sp)
    sp.add_argument("--aerc-csv", help="CSV written by the aerc command")
    sp.add_argument("--x", help="comma-separated p (in_p) or c (in_c) values")
    sp.add_argument("--y", help="comma-separated AERC values")
    sp.add_argument("--c-or-p", help="fixed c (in_p) or p (in_c)")
    sp.add_argument("--model", choices=("in_p", "in_c"))
    sp.add_argument("--out", default="-")
    sp.set_defaults(required=())

    sp = sub.add_parser("bounds", help="evaluate generalization bounds")
    _add_common(sp)
    sp.add_argument("--method", choices=sorted(bounds.CLI_METHODS))
    sp.add_argument("--data")
    sp.add_argument("--n", type=_positive_int)
    sp.add_argument("--c", type=_positive_int)
    sp.add_argument("--d", type=_positive_int)
    sp.add_argument("--max-norm", type=float)
    sp.add_argument("--sumsq", type=float)
    sp.add_argument("--lambda", dest="lam", type=float, default=1.0)
    sp.add_argument("--p", type=_exponent, default=2.0)
    sp.add_argument("--delta", type=float, default=0.01)
    sp.add_argument("--k", type=_positive_int)
    sp.add_argument("--base", choices=("hinge", "logistic"), default="hinge")
    sp.add_argument("--b-psi", type=float, help="override the analytic loss bound")
    sp.add_argument("--b-psi-model", help="use the largest loss of this model on --data as the loss bound")
    sp.add_argument("--n-features", type=int)
    sp.add_argument("--out", help="also write the report as CSV")
    sp.set_defaults(required=("method",))

    sp = sub.add_parser("select", help="train a (p, lambda) grid and select by structural risk")
    _add_common(sp)
    _add_loss(sp)
    _add_solver(sp)
    sp.add_argument("--train")
    sp.add_argument("--test")
    sp.add_argument("--grid-p", default=",".join(format_exponent(p) for p in experiments.DEFAULT_PS))
    sp.add_argument("--grid-lambda", default=",".join(repr(v) for v in experiments.DEFAULT_LAMBDAS))
    sp.add_argument("--risk-lambda", type=float, default=experiments.RISK_LAMBDA)
    sp.add_argument("--no-warm-start", action="store_true")
    sp.add_argument("--n-features", type=int)
    sp.add_argument("--out", default="-")
    sp.add_argument("--selected-out")
    sp.add_argument("--oracle-out")
    sp.set_defaults(required=("train", "test", "loss"))

    sp = sub.add_parser("split", help="per-class head-fraction split")
    _add_common(sp)
    sp.add_argument("--data")
    sp.add_argument("--fraction", type=float)
    sp.add_argument("--head-out")
    sp.add_argument("--tail-out")
    sp.set_defaults(required=("data", "fraction", "head_out", "tail_out"))

    sp = sub.add_parser("table1", help="every method's bounds at one setting, with asymptotic shapes")
    _add_common(sp)
    sp.add_argument("--n", type=_positive_int, default=1000)
    sp.add_argument("--c", type=_positive_int, default=10)
    sp.add_argument("--d", type=_positive_int)
    sp.add_argument("--k", type=_positive_int)
    sp.add_argument("--lambda", dest="lam", type=float, default=1.0)
    sp.add_argument("--max-norm", type=float, default=1.0)
    sp.add_argument("--p", type=_exponent, default=2.0)
    sp.add_argument("--delta", type=float, default=0.01)
    sp.add_argument("--out", default="-")
    sp.set_defaults(required=())
    return parser


def read_config(path):
    """Flat ``key = value`` lines; ``#`` starts a comment; keys may use ``-`` or ``_``."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            out[key.strip().lstrip("-").replace("-", "_")] = value.strip()
    return out


def _apply_config(parser, argv, args):
    """Re-parse with config values inserted before the explicit flags."""
    try:
        conf = read_config(args.config)
    except OSError as exc:
        parser.error(f"cannot read config: {exc}")
    except ValueError as exc:
        parser.error(str(exc))
    sub_actions = parser._subparsers._group_actions[0].choices[args.command]._actions
    known = {}
    for act in sub_actions:
        for opt in act.option_strings:
            if opt.startswith("--"):
                known[opt[2:].replace("-", "_")] = (opt, act)
    extra = []
    for key, value in conf.items():
        if key not in known:
            parser.error(f"unknown config key {key!r}")
        opt, act = known[key]
        if act.nargs == 0:
            if value.lower() in ("1", "true", "yes", "on"):
                extra.append(opt)
        else:
            extra += [opt, value]
    argv = list(argv)
    cmd_at = argv.index(args.command)
    return parser.parse_args(argv[:cmd_at + 1] + extra + argv[cmd_at + 1:])


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        args = _apply_config(parser, argv, args)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    sub = parser._subparsers._group_actions[0].choices[args.command]
    _require(sub, args, args.required)
    try:
        if args.command == "train":
            return cmd_train(args)
        if args.command == "predict":
            return cmd_predict(args)
        if args.command == "evaluate":
            return cmd_evaluate(args)
        if args.command == "aerc":
            return cmd_aerc(args, sub)
        if args.command == "fit-scaling":
            return cmd_fit_scaling(args, sub)
        if args.command == "bounds":
            return cmd_bounds(args, sub)
        if args.command == "select":
            return cmd_select(args, sub)
        if args.command == "split":
            return cmd_split(args)
        return cmd_table1(args)
    except (dataio.DataError, OSError, UnicodeDecodeError) as exc:
        sys.stderr.write(f"data error: {exc}\n")
        return EXIT_DATA
    except (SolverFailure, NotDescentDirection, FloatingPointError) as exc:
        sys.stderr.write(f"solver failure: {exc}\n")
        return EXIT_SOLVER
    except ValueError as exc:
        # invalid combinations that argparse cannot see (k > c, bad method/regularizer pair, ...)
        sys.stderr.write(f"{parser.prog} {args.command}: error: {exc}\n")
        return EXIT_FLAGS


if __name__ == "__main__":
    sys.exit(main())
