"""Command-line entry point: ``deva run|sweep|compare|check``."""
from __future__ import annotations

import argparse
import logging
import sys

from deva import __version__
from deva.errors import InvalidConfig, IoError, NumericalBreakdown

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_BREAKDOWN, EXIT_IO = 0, 1, 2, 3, 4

log = logging.getLogger("deva")


def _lr_grid(text):
    try:
        grid = [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad learning-rate grid {text!r}") from exc
    if not grid or any(lr <= 0 for lr in grid):
        raise argparse.ArgumentTypeError("learning rates must be positive")
    return grid


def build_parser():
    p = argparse.ArgumentParser(prog="deva", description="Run and compare optimizers on quadratic benchmarks.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0, help="-v for warnings, -vv for debug output")
    sub = p.add_subparsers(dest="command", required=True)

    def outputs(sp, default_out):
        sp.add_argument("--out", default=default_out, help="output directory (default: %(default)s)")
        sp.add_argument("--no-plot", action="store_true", help="skip the PNG figure")
        sp.add_argument("--workers", type=int, default=None, help="processes for parallel seeds")

    run = sub.add_parser("run", help="run one config over its seeds")
    run.add_argument("--config", required=True)
    outputs(run, "out")

    sw = sub.add_parser("sweep", help="run one config over a learning-rate grid and keep the best")
    sw.add_argument("--config", required=True)
    sw.add_argument("--lr-grid", required=True, type=_lr_grid, help="comma-separated learning rates")
    outputs(sw, "out_sweep")

    cmp_ = sub.add_parser("compare", help="run several configs on one problem and rank them")
    cmp_.add_argument("--configs", required=True, nargs="+")
    cmp_.add_argument("--lr-grid", type=_lr_grid, default=None, help="sweep each config over this grid first")
    outputs(cmp_, "out_compare")

    chk = sub.add_parser("check", help="run the property oracles and print pass/fail")
    chk.add_argument("names", nargs="*", help="subset of checks to run (default: all)")
    return p


def _finish(summaries, args, ordering=None, extra=None):
    from deva.harness import emit

    for path in emit(summaries, args.out, ordering=ordering, extra=extra):
        print(path)
    if not args.no_plot:
        from deva.plotting import render

        print(render(summaries, args.out))
    if all(s.final_losses == {} for s in summaries):
        log.error("every seed broke down")
        return EXIT_BREAKDOWN
    return EXIT_OK


def cmd_run(args):
    from deva.harness import load_config, run_experiment

    summary = run_experiment(load_config(args.config), args.workers)
    q25, med, q75 = summary.final_quantiles()
    print(f"{summary.label}: final loss median={med:.6g} q25={q25:.6g} q75={q75:.6g} failed={len(summary.failed)}")
    return _finish([summary], args)


def cmd_sweep(args):
    from deva.harness import load_config, sweep

    best, results = sweep(load_config(args.config), args.lr_grid, args.workers)
    for lr, s in results.items():
        print(f"lr={lr:g}: median final loss {s.median_final:.6g} (failed {len(s.failed)})")
    best_lr = best.config.hp().lr
    print(f"best lr={best_lr:g}")
    extra = {"lr_grid": [float(x) for x in args.lr_grid], "best_lr": best_lr,
             "median_final_by_lr": {repr(lr): s.median_final for lr, s in results.items()}}
    return _finish([best], args, extra=extra)


def cmd_compare(args):
    from deva.harness import compare_suite, load_config

    cfgs = [load_config(path) for path in args.configs]
    comparison = compare_suite(cfgs, args.lr_grid, args.workers)
    print(f"{'run':<36} {'lr':>9} {'median':>12} {'q25':>12} {'q75':>12} {'failed':>6}")
    for label, lr, med, q25, q75, failed in comparison.table():
        print(f"{label:<36} {lr:>9.3g} {med:>12.6g} {q25:>12.6g} {q75:>12.6g} {failed:>6}")
    print("ordering (best first): " + " < ".join(comparison.ordering))
    return _finish(comparison.summaries, args, ordering=comparison.ordering)


def cmd_check(args):
    from deva.checks import CHECKS, run_all

    unknown = [n for n in args.names if n not in CHECKS]
    if unknown:
        print(f"unknown checks: {', '.join(unknown)}; available: {', '.join(CHECKS)}", file=sys.stderr)
        return EXIT_CONFIG
    results = run_all(args.names or None)
    for r in results:
        print(r.line())
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_FAIL


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "compare": cmd_compare, "check": cmd_check}


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = (logging.ERROR, logging.WARNING, logging.DEBUG)[min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except InvalidConfig as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IoError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericalBreakdown as exc:
        print(f"numerical breakdown: {exc}", file=sys.stderr)
        return EXIT_BREAKDOWN


if __name__ == "__main__":
    sys.exit(main())
