"""
Command-line entry point.

    cosco run    --config run.cfg [--out raw.csv]
    cosco sweep  --config sweep.cfg --out raw.csv [--workers 4] [--master-seed 7]
    cosco report raw.csv [--out agg.csv]

Exit status is 0 on success, 1 for invalid configuration or arguments and
2 for failures while running or writing output.
"""

import argparse
import os
import sys

from .harness import (
    ConfigError,
    aggregate_path,
    emit_report,
    load_config,
    read_raw_csv,
    report_rows,
    run_one,
    run_sweep,
)

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2
SEED_ENV = "COSCO_MASTER_SEED"


def _u64(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an unsigned integer, got {text!r}")
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError(f"master seed out of range: {v}")
    return v


def _positive(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cosco",
        description="Primal-dual stochastic compositional solvers: runs, sweeps and reports.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="configuration document")
        p.add_argument("--out", help="raw CSV path (overrides 'output' in the config)")
        p.add_argument("--master-seed", type=_u64, default=None,
                       help=f"master seed (default: ${SEED_ENV}, then the config, then 0)")

    p_run = sub.add_parser("run", help="a single run (first N and first seed of the config)")
    common(p_run)
    p_sweep = sub.add_parser("sweep", help="every (N, seed) pair of the config")
    common(p_sweep)
    p_sweep.add_argument("--workers", type=_positive, default=1, help="parallel worker processes")
    p_report = sub.add_parser("report", help="re-aggregate an existing raw CSV")
    p_report.add_argument("raw", help="raw CSV written by 'sweep' or 'run'")
    p_report.add_argument("--out", help="aggregate CSV path (default: <raw>_agg.csv)")
    return parser


def _master_seed(args, config):
    if args.master_seed is not None:
        return args.master_seed
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return _u64(env)
        except argparse.ArgumentTypeError as exc:
            raise ConfigError(SEED_ENV, str(exc)) from None
    return config.master_seed


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID

    try:
        if args.command == "report":
            rows = read_raw_csv(args.raw)
            if not rows:
                raise ConfigError(args.raw, "no rows to aggregate")
            print(report_rows(rows, None, args.out or aggregate_path(args.raw)))
            return EXIT_OK

        config = load_config(args.config)
        master = _master_seed(args, config)
        out = args.out or config.output
        if args.command == "run":
            records = [run_one(config, config.N[0], config.seeds[0], master)]
            rec = records[0]
            print(f"{rec.algorithm} {rec.problem} N={rec.N} seed={rec.seed} "
                  f"x_bar={rec.x_bar.tolist()} obj_gap={rec.obj_gap} "
                  f"feas_resid={rec.feas_resid} dual_norm_final={rec.dual_norm_final}")
        else:
            if out is None:
                raise ConfigError("output", "sweep needs --out or 'output' in the config")
            records = run_sweep(config, workers=args.workers, master_seed=master)
        if out is not None:
            print(emit_report(records, out))
        return EXIT_OK
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ValueError as exc:
        # malformed raw CSV handed to 'report'
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID if args.command == "report" else EXIT_RUNTIME
    except Exception as exc:  # solver or I/O failure
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
