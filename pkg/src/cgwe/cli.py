"""Command line: ``cgwe <subcommand> --config path.json [--seed N] [--out dir]``."""
from __future__ import annotations

import argparse
import sys

from .runner import EXIT_SCHEMA, SUBCOMMANDS, SchemaError, load_config, run_experiment


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cgwe", description=__doc__)
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="override the output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, subcommand=args.subcommand, seed=args.seed,
                          output_dir=args.out)
    except (SchemaError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    rec = run_experiment(cfg)
    for c in rec.checks:
        print(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']}: {c['value']} (threshold {c['threshold']})")
    if rec.error:
        print(f"error: {rec.error}", file=sys.stderr)
    print(f"status {rec.status}; record in {cfg.output_dir}/record.json")
    return rec.exit_code


if __name__ == "__main__":
    sys.exit(main())
