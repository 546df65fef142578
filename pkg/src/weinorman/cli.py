"""Command-line interface: ``solve``, ``verify`` and ``bench``.

Exit status is 0 on success, 1 when a verification check fails, 2 for
configuration errors and 3 when a solver fails.
"""

import argparse
import contextlib
import csv
import os
import sys

from .bench import coefficient_curves, print_summary, run_bench, write_bench_csv, write_curves_csv
from .config import METHODS, MODELS, ConfigError, load_config
from .driver import SolverFailure, build_model, solve_series, state_labels

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3


def _parser():
    p = argparse.ArgumentParser(prog="weinorman", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_text in (("solve", "write the distribution at each query time as CSV"),
                            ("verify", "check the operator algebra of a model"),
                            ("bench", "time methods against model time")):
        s = sub.add_parser(name, help=help_text)
        s.add_argument("--config", help="YAML run configuration")
        s.add_argument("--model", choices=MODELS)
        s.add_argument("--times", help="comma-separated query times, sorted")
        s.add_argument("--method", choices=METHODS)
        s.add_argument("--out", help="CSV output path (default: standard output)")
        s.add_argument("--tol", type=float, help="solver tolerance override")
        s.add_argument("--size", type=int, help="n_max, N or m depending on the model")
        s.add_argument("--rate", action="append", default=[], metavar="NAME=SPEC",
                       help="rate override such as b=exp:1,0.1 (repeatable)")
        if name == "bench":
            s.add_argument("--repeats", type=int, help="timing repetitions per cell (minimum kept)")
            s.add_argument("--curves", help="CSV path for pure-birth f_i(t) curves")
    return p


@contextlib.contextmanager
def _output(path):
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def cmd_solve(config):
    if config.method == "all":
        raise ConfigError("method 'all' is only available for bench")
    if config.method == "oracle" and config.model == "pure-birth":
        raise ConfigError("the pure-birth model has no closed-form oracle")
    model = build_model(config)
    dists = solve_series(model, config.method, config.times, config.tolerances)
    labels = state_labels(model)
    with _output(config.out) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("t", "state", "p"))
        for t, p in zip(config.times, dists):
            tt = repr(float(t))
            w.writerows((tt, lab, repr(float(v))) for lab, v in zip(labels, p))
    return EXIT_OK


def cmd_verify(config):
    model = build_model(config)
    report = model.verify()
    for check in report.checks:
        print(f"{'ok  ' if check.passed else 'FAIL'} {check.name}  residual={check.residual:.3g}")
    print(report.summary())
    return EXIT_OK if report.passed else EXIT_VERIFY


def cmd_bench(config, curves=None):
    methods = config.bench_methods
    if "wei-norman" not in methods or "rk45" not in methods:
        raise ConfigError("bench needs at least the wei-norman and rk45 methods")
    records = run_bench(config, log=sys.stderr)
    with _output(config.out) as fh:
        write_bench_csv(records, fh)
    print_summary(records)
    if config.model == "pure-birth":
        path = curves
        if path is None and config.out is not None:
            root, _ = os.path.splitext(config.out)
            path = root + "_curves.csv"
        if path is not None:
            rows = coefficient_curves(build_model(config), config.times)
            with open(path, "w", newline="") as fh:
                write_curves_csv(rows, fh)
    return EXIT_OK


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        config = load_config(
            args.config, model=args.model, times=args.times, method=args.method, out=args.out,
            tol=args.tol, size=args.size, rates=args.rate,
            repeats=getattr(args, "repeats", None), bench=args.command == "bench",
            require_times=args.command != "verify",
        )
        if args.command == "solve":
            return cmd_solve(config)
        if args.command == "verify":
            return cmd_verify(config)
        return cmd_bench(config, curves=args.curves)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except BrokenPipeError:
        # downstream reader closed early (e.g. piped into head)
        sys.stdout = open(os.devnull, "w")
        return EXIT_OK
    except (ValueError, OSError) as exc:
        # model construction rejects sizes and parameters it cannot represent
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
