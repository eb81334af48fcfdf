"""Command-line interface.

Subcommands: ``partition`` (emit a partition CSV), ``run`` (one experiment
over its seeds), ``sweep`` (axis sweep), ``analyze`` (LLE + skew on a
gradient CSV), ``report`` (rebuild summaries from rounds.jsonl files).
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from . import harness
from .config import parse_config
from .errors import SkewflError


def _load_config(args):
    try:
        with open(args.config) as fh:
            text = fh.read()
    except OSError as exc:
        raise SkewflError(f"{args.config}: {exc}") from exc
    config = parse_config(text)
    if getattr(args, "seed", None) is not None:
        config = replace(config, seeds=(int(args.seed),))
    return config


def _add_common(sub, needs_config=True):
    if needs_config:
        sub.add_argument("--config", required=True,
                         help="path to the experiment configuration file")
        sub.add_argument("--seed", type=int, default=None,
                         help="override the configured seeds with this one")
    sub.add_argument("--out", default=None,
                     help="output directory (overrides output_dir)")
    sub.add_argument("--jobs", type=int, default=1,
                     help="parallel workers for seeds/sweep cells")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="skewfl",
        description="Federated-learning round simulator with Byzantine "
                    "attacks and robust aggregation defenses.")
    subs = parser.add_subparsers(dest="command", required=True)

    _add_common(subs.add_parser("partition", help="emit the partition CSV"))
    _add_common(subs.add_parser("run", help="run one experiment over its seeds"))
    _add_common(subs.add_parser("sweep", help="run the configured axis sweep"))

    analyze = subs.add_parser("analyze",
                              help="LLE embedding + skew score of a gradient CSV")
    analyze.add_argument("input", help="gradient batch CSV (client_id,g0,...)")
    analyze.add_argument("--out", default="analysis",
                         help="output directory for embedding.csv / skew.json")
    analyze.add_argument("--neighbors", type=int, default=None,
                         help="LLE neighbor count (default: floor(0.1*m), min 2)")
    analyze.add_argument("--byzantine", type=int, default=0,
                         help="byzantine count used for the skew selection")

    report = subs.add_parser("report",
                             help="rebuild summary.csv from rounds.jsonl files")
    report.add_argument("--out", required=True,
                        help="directory containing rounds.jsonl outputs")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "partition":
            path = harness.partition_command(_load_config(args), args.out)
            print(path)
        elif args.command == "run":
            rows = harness.run_command(_load_config(args), args.out,
                                       jobs=args.jobs)
            for row in rows:
                print(",".join(str(v) for v in row))
        elif args.command == "sweep":
            rows = harness.sweep_command(_load_config(args), args.out,
                                         jobs=args.jobs)
            for row in rows:
                print(",".join(str(v) for v in row))
        elif args.command == "analyze":
            payload = harness.analyze_command(args.input, args.out,
                                              neighbors=args.neighbors,
                                              byzantine=args.byzantine)
            print(f"skew_score = {payload['score']}")
        elif args.command == "report":
            rows = harness.report_command(args.out)
            for row in rows:
                print(",".join(str(v) for v in row))
    except SkewflError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
