"""Command line: ``hgcl pretrain|reduce|cluster|finetune|evaluate|sweep|all``."""

from __future__ import annotations

import argparse
import logging
import os
import sys

from threadpoolctl import threadpool_limits

from hgcl.config import ConfigError, parse_config
from hgcl.graph import SamplingError
from hgcl.pipeline import STAGES, StageDependencyError, run_pipeline, sweep
from hgcl.pretrain import TrainingDiverged

COMMANDS = STAGES + ("sweep", "all")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hgcl", description=__doc__)
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="key = value config file (defaults apply when omitted)")
    p.add_argument("--force", action="store_true", help="rerun stages even when up to date")
    p.add_argument("--seed", type=int, help="root seed (overrides the config)")
    p.add_argument("--out", help="run directory (overrides the config)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config key; repeatable")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    overrides = {}
    for item in args.set:
        if "=" not in item:
            print(f"hgcl: --set expects KEY=VALUE, got {item!r}", file=sys.stderr)
            return 2
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.out is not None:
        overrides["out"] = args.out

    try:
        cfg = parse_config(args.config, overrides)
    except (ConfigError, OSError) as exc:
        print(f"hgcl: config error: {exc}", file=sys.stderr)
        return 2

    threads = int(os.environ.get("HGCL_THREADS", "1"))
    try:
        with threadpool_limits(limits=max(threads, 1)):
            if args.command == "sweep":
                for row in sweep(cfg, args.force):
                    print(",".join(f"{k}={v}" for k, v in row.items()))
                return 0
            stages = STAGES if args.command == "all" else (args.command,)
            return run_pipeline(cfg, stages, args.force)
    except StageDependencyError as exc:
        print(f"hgcl: {exc}", file=sys.stderr)
        return 3
    except SamplingError as exc:
        print(f"hgcl: {exc} (the user-cluster graph needs rho * theta >= 2 clusters per user)", file=sys.stderr)
        return 4
    except TrainingDiverged as exc:
        print(f"hgcl: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
