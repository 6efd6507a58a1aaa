"""Command-line interface.

Subcommands:
  run <config>            run one experiment, write trace/summary
  compare <config>...     run several experiments and tabulate their summaries
  check-gradients         finite-difference and cross-estimator battery
  selftest                fast property battery over the numerical kernels

Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.
"""

import argparse
import sys

import numpy as np

from ..errors import ConvergenceError, DomainError, EstimationError
from .config import ConfigError, read_config
from .dataio import DataError
from .runner import format_summary, run_experiment
from .checks import check_gradients, selftest

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _cmd_run(args):
    cfg = read_config(args.config)
    trace, summary = run_experiment(cfg)
    sys.stdout.write(format_summary(summary))
    return EXIT_OK


def _cmd_compare(args):
    summaries = []
    for path in args.configs:
        cfg = read_config(path)
        _, summary = run_experiment(cfg)
        summary["config"] = path
        summaries.append(summary)
    keys = ["config", "method", "model", "seed", "iters", "neg_elbo",
            "train_logloss", "test_logloss", "elapsed_ms"]
    widths = {k: max(len(k), *(len(str(s.get(k, ""))) for s in summaries))
              for k in keys}
    line = "  ".join(k.ljust(widths[k]) for k in keys)
    print(line)
    print("-" * len(line))
    for s in summaries:
        print("  ".join(str(s.get(k, "")).ljust(widths[k]) for k in keys))
    return EXIT_OK


def _cmd_check_gradients(args):
    report = check_gradients(verbose=True)
    return EXIT_OK if report["ok"] else EXIT_NUMERIC


def _cmd_selftest(args):
    return EXIT_OK if selftest(verbose=True) else EXIT_NUMERIC


def build_parser():
    parser = argparse.ArgumentParser(
        prog="conjvi",
        description="variational inference via conjugate computations")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run one configured experiment")
    p_run.add_argument("config")
    p_run.set_defaults(func=_cmd_run)
    p_cmp = sub.add_parser("compare", help="run and tabulate several configs")
    p_cmp.add_argument("configs", nargs="+")
    p_cmp.set_defaults(func=_cmd_compare)
    p_chk = sub.add_parser("check-gradients",
                           help="finite-difference / cross-estimator battery")
    p_chk.set_defaults(func=_cmd_check_gradients)
    p_self = sub.add_parser("selftest", help="fast numerical property battery")
    p_self.set_defaults(func=_cmd_selftest)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError) as exc:
        print("data error: %s" % exc, file=sys.stderr)
        return EXIT_DATA
    except (DomainError, EstimationError, ConvergenceError,
            np.linalg.LinAlgError) as exc:
        print("numeric failure: %s" % exc, file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
