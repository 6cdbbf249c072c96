"""Command line: ``rislink run | validate | oracle``.

Log verbosity comes from ``RISLINK_LOG_LEVEL`` (default WARNING).
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

from ..exceptions import RisLinkError
from ..scene import synthesize_channels
from .campaign import TASKS, Campaign, check_task, run_campaign
from .config import parse_config
from .oracles import brute_force_wsr
from .report import emit_report

LOG_ENV = "RISLINK_LOG_LEVEL"


def _seed(text):
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


def _positive(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser():
    p = argparse.ArgumentParser(prog="rislink", description="RIS-assisted downlink link-level toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a Monte-Carlo campaign")
    run.add_argument("--scenario", required=True)
    run.add_argument("--task", required=True, choices=TASKS)
    run.add_argument("--trials", type=_positive, default=1)
    run.add_argument("--seed", type=_seed, default=0, help="seed of trial 0; trial i uses seed+i")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--oracle", action="store_true", help="cross-check against exact oracles")
    run.add_argument("--workers", type=_positive, default=1, help="parallel trial processes")

    val = sub.add_parser("validate", help="parse and validate a scenario file")
    val.add_argument("--scenario", required=True)
    val.add_argument("--task", choices=TASKS, help="also check the task's scenario requirements")

    ora = sub.add_parser("oracle", help="brute-force optimum of a single-user discrete scenario")
    ora.add_argument("--scenario", required=True)
    ora.add_argument("--seed", type=_seed, default=None, help="override the scenario seed")
    return p


def _configure_logging():
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None):
    _configure_logging()
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            cfg = parse_config(args.scenario)
            if args.task:
                check_task(cfg, args.task)
            sc = cfg.scenario
            print(f"ok: L={sc.L} K={sc.K} N={sc.N} Q={[p.Q for p in sc.ris]} "
                  f"mobility={cfg.mobility.kind}")
        elif args.command == "oracle":
            sc = parse_config(args.scenario).scenario
            if args.seed is not None:
                sc = sc.with_seed(args.seed)
            print(repr(brute_force_wsr(synthesize_channels(sc, 0), sc)))
        else:
            c = Campaign(args.scenario, args.task, args.trials, args.seed, args.out,
                         args.oracle, args.workers)
            rows, summary = run_campaign(c)
            paths = emit_report(rows, summary, args.out)
            print("\n".join(summary.lines()))
            print(f"wrote {paths['metrics.csv']}")
    except (RisLinkError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
