"""Command line: ``gadgets {collect,mine,cluster,report,all}``."""

from __future__ import annotations

import argparse
import logging
import sys

from . import pipeline
from .config import ENVS, load_config

STAGES = {
    "collect": pipeline.run_collect,
    "mine": pipeline.run_mine,
    "cluster": pipeline.run_cluster,
    "report": pipeline.run_report,
    "all": pipeline.run_all,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gadgets", description="Mine and cluster gadgets from agent interaction data.")
    sub = parser.add_subparsers(dest="stage", required=True)
    for name in STAGES:
        p = sub.add_parser(name, help=f"run the {name} stage" if name != "all" else "run every stage in order")
        p.add_argument("--config", help="TOML configuration file")
        p.add_argument("--seed", type=int, help="base random seed (overrides the config)")
        p.add_argument("--env", choices=ENVS, help="environment (overrides the config)")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("-v", "--verbose", action="store_true", help="log progress")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, env=args.env, seed=args.seed, out=args.out)
        result = STAGES[args.stage](cfg)
    except (pipeline.StageError, ValueError, OSError) as exc:
        print(f"gadgets {args.stage}: error: {exc}", file=sys.stderr)
        return 1
    if result is not None:
        print(result if not isinstance(result, (list, dict)) else "\n".join(str(x) for x in (result.values() if isinstance(result, dict) else result)))
    return 0


if __name__ == "__main__":
    sys.exit(main())
