"""Command-line entry point.

    abrsim run --config scenario.txt [--duration-s N] [--trace out.csv] [--metrics out.csv]
    abrsim table {1,2,3,4} [--out DIR] [--serial]
    abrsim --version

Exit status: 0 on success/pass, 1 on failure, 2 on configuration errors.
"""

import argparse
import sys

from . import __version__
from .config import ConfigError, load_scenario
from .harness import UNKNOWN, emit_metrics_csv, emit_trace_csv, reproduce_table, run_scenario


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="abrsim")
    parser.add_argument("--version", action="version", version=f"abrsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a single scenario")
    run_p.add_argument("--config", required=True, help="scenario file (key = value lines)")
    run_p.add_argument("--duration-s", type=float, default=None,
                       help="override the configured duration")
    run_p.add_argument("--trace", default=None, help="write the queue trace CSV here")
    run_p.add_argument("--metrics", default=None, help="write the metrics CSV here")
    run_p.add_argument("--scenario-id", default="run")

    table_p = sub.add_parser("table", help="reproduce one experiment table")
    table_p.add_argument("table_id", type=int, choices=(1, 2, 3, 4))
    table_p.add_argument("--out", default=None, help="directory for CSVs and the report")
    table_p.add_argument("--serial", action="store_true", help="disable row parallelism")
    return parser


def _cmd_run(args) -> int:
    config = load_scenario(args.config)
    if args.duration_s is not None:
        if args.duration_s <= 0:
            raise ConfigError("duration must be > 0", key="--duration-s")
        config.duration_s = args.duration_s
    metrics, trace = run_scenario(config, args.scenario_id, keep_trace=True)
    if args.metrics:
        emit_metrics_csv([metrics], args.metrics)
    if args.trace:
        emit_trace_csv(trace, args.trace, per_vc=config.trace_per_vc)
    print(f"{metrics.scenario_id}: goodput {metrics.goodput_mbps:.2f} Mbps, "
          f"max switch queue {metrics.max_switch_queue_cells} cells "
          f"({metrics.max_switch_queue_rtt_frac:.2f} x RTT), "
          f"max source queue {metrics.max_source_queue_cells} cells, "
          f"drops {metrics.drops_source + metrics.drops_switch}, {metrics.divergence}")
    return 1 if metrics.divergence == UNKNOWN else 0


def _cmd_table(args) -> int:
    lines, ok = reproduce_table(args.table_id, out_dir=args.out, parallel=not args.serial)
    print("\n".join(lines))
    return 0 if ok else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        return _cmd_table(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
