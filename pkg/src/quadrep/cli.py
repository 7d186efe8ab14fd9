"""``quadrep`` command line: run, sweep, verify, calc, kernel-lb.

Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 verification failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace

from ._common import ConfigError, NumericalError
from .bench import MODELS, ExperimentConfig, StageError, run_single, run_sweep, write_records
from .features import monomial_feature_count, scale_bound
from .landscape import landscape_width, lambda_rule, witness_norm_bound
from .ntk_kernel import lower_bound_run, write_lambda_table
from .verify import format_report, run_verify

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_VERIFY = 0, 1, 2, 3

log = logging.getLogger("quadrep")


def _csv_list(text, cast):
    try:
        return [cast(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse list {text!r}: {exc}") from exc


def _load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            return ExperimentConfig.from_json(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def _cmd_run(args) -> int:
    cfg = _load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
        cfg.__post_init__()
    trace = [] if args.trace else None
    rec = run_single(cfg, trace)
    write_records([rec], args.out or sys.stdout)
    if args.trace:
        with open(args.trace, "w") as fh:
            for row in trace:
                fh.write(json.dumps(row) + "\n")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = _load_config(args.config)
    grid = _csv_list(args.grid, int)
    seeds = _csv_list(args.seeds, int)
    models = _csv_list(args.models, str) if args.models else None
    for name in models or []:
        if name not in MODELS:
            raise ConfigError(f"unknown model {name!r}; choose from {MODELS}")
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        write_records([], out)

        def emit(rec):
            write_records([rec], out, header=False)
            out.flush()
            log.info("%s n=%s seed=%s test_risk=%.4g %s", rec.model, rec.n, rec.seed, rec.test_risk, rec.error)

        run_sweep(cfg, args.axis, grid, seeds, models, on_record=emit)
    finally:
        if args.out:
            out.close()
    return EXIT_OK


def _cmd_verify(args) -> int:
    results = run_verify(args.level, args.seed)
    print(format_report(results))
    return EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY


def _cmd_calc(args) -> int:
    rows = []
    if args.k is not None:
        rows.append(("D_rule", monomial_feature_count(args.k, args.beta_norm, args.eps, args.delta)))
        rows.append(("readout_scale_bound", scale_bound(args.k, args.beta_norm)))
    B = args.B if args.B is not None else witness_norm_bound(args.r_star)
    rows.append(("witness_norm_bound", witness_norm_bound(args.r_star)))
    lam = lambda_rule(args.tau, args.M, args.eps, B)
    rows.append(("lambda", lam))
    if args.C is not None and args.B_h is not None:
        rows.append(("m_rule", landscape_width(args.eps, args.lam0 if args.lam0 is not None else lam, args.C, args.B_h, B)))
    for name, val in rows:
        print(f"{name} = {val:.10g}")
    return EXIT_OK


def _cmd_kernel_lb(args) -> int:
    best, rows = lower_bound_run(args.d, args.p, args.n, seed=args.seed, n_test=args.n_test)
    if args.out:
        write_lambda_table(rows, args.out)
    else:
        for r in rows:
            print(f"lambda={r['lambda']:.3g} train_mse={r['train_mse']:.6g} test_mse={r['test_mse']:.6g} ratio={r['ratio']:.6g}")
    print(f"best_ratio = {best:.10g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="quadrep", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one experiment config")
    r.add_argument("--config", required=True)
    r.add_argument("--out", help="CSV path (default: stdout)")
    r.add_argument("--seed", type=int, help="override the config seed")
    r.add_argument("--trace", help="write the optimizer trace as JSON lines")
    r.set_defaults(func=_cmd_run)

    s = sub.add_parser("sweep", help="paired sweep over one axis")
    s.add_argument("--config", required=True)
    s.add_argument("--axis", default="n", choices=["n", "d", "D", "m"])
    s.add_argument("--grid", required=True, help="comma-separated values")
    s.add_argument("--seeds", default="0", help="comma-separated seeds")
    s.add_argument("--models", help="comma-separated models (default: the config model)")
    s.add_argument("--out", help="CSV path (default: stdout)")
    s.set_defaults(func=_cmd_sweep)

    v = sub.add_parser("verify", help="self-check battery")
    v.add_argument("--level", default="fast", choices=["fast", "full"])
    v.add_argument("--seed", type=int, default=0)
    v.set_defaults(func=_cmd_verify)

    c = sub.add_parser("calc", help="print width and regularization prescriptions")
    c.add_argument("--k", type=int)
    c.add_argument("--beta-norm", type=float, default=1.0)
    c.add_argument("--eps", type=float, default=0.1)
    c.add_argument("--delta", type=float, default=0.1)
    c.add_argument("--r-star", type=int, default=1)
    c.add_argument("--tau", type=float, default=0.0)
    c.add_argument("--M", type=float, default=0.0)
    c.add_argument("--B", type=float, help="norm bound (default: witness bound for r-star)")
    c.add_argument("--lam0", type=float)
    c.add_argument("--C", type=float)
    c.add_argument("--B-h", type=float)
    c.set_defaults(func=_cmd_calc)

    k = sub.add_parser("kernel-lb", help="kernel ridge on a pure degree-p target")
    k.add_argument("--d", type=int, required=True)
    k.add_argument("--p", type=int, required=True)
    k.add_argument("--n", type=int, required=True)
    k.add_argument("--n-test", type=int, default=2000)
    k.add_argument("--seed", type=int, default=0)
    k.add_argument("--out", help="CSV path for the per-lambda table")
    k.set_defaults(func=_cmd_kernel_lb)
    return p


def _exit_code(exc) -> int:
    cause = exc.cause if isinstance(exc, StageError) else exc
    if isinstance(cause, NumericalError) or isinstance(cause, ArithmeticError):
        return EXIT_NUMERICAL
    return EXIT_CONFIG


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, NumericalError, StageError, ArithmeticError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
