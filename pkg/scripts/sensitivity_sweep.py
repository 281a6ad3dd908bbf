"""Cluster-granularity sensitivity on the toy data: a rho x theta grid.

    python3 scripts/sensitivity_sweep.py [--rho 2 4 8] [--theta 4 8] [--perplexity 30]

Pre-training runs once; each grid cell re-runs reduce, cluster, finetune
and evaluate under runs/toy_sweep/sweep/. The table lands in
runs/toy_sweep/sweep.csv.
"""

import argparse
import sys
from pathlib import Path

from hgcl.cli import main as hgcl_main

ROOT = Path(__file__).resolve().parent.parent


def main() -> int:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--rho", type=int, nargs="+", default=[2, 4, 8])
    p.add_argument("--theta", type=int, nargs="+", default=[4, 8])
    p.add_argument("--perplexity", type=float, nargs="+", default=[30.0])
    p.add_argument("--out", default=str(ROOT / "runs" / "toy_sweep"))
    args = p.parse_args()
    return hgcl_main([
        "sweep", "--config", str(ROOT / "configs" / "toy.conf"), "--out", args.out,
        "--set", "sweep_rho=" + ",".join(map(str, args.rho)),
        "--set", "sweep_theta=" + ",".join(map(str, args.theta)),
        "--set", "sweep_perplexity=" + ",".join(map(str, args.perplexity)),
    ])


if __name__ == "__main__":
    sys.exit(main())
