"""Generate the planted toy data (if missing) and run every stage on it.

    python3 scripts/run_toy_pipeline.py [--seed 0] [--force]

Prints the evaluation table from runs/toy/eval_report.csv.
"""

import argparse
import csv
import sys
from pathlib import Path

from hgcl.cli import main as hgcl_main
from hgcl.seeding import derive_rng
from hgcl.synthetic import planted_hierarchy, write_planted

ROOT = Path(__file__).resolve().parent.parent


def main() -> int:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--force", action="store_true")
    p.add_argument("--out", default=str(ROOT / "runs" / "toy"))
    args = p.parse_args()

    data = ROOT / "data" / "toy"
    if not (data / "train.txt").exists():
        write_planted(data, planted_hierarchy(derive_rng(0, "data")))
    argv = ["all", "--config", str(ROOT / "configs" / "toy.conf"), "--seed", str(args.seed), "--out", args.out]
    if args.force:
        argv.append("--force")
    code = hgcl_main(argv)
    if code:
        return code
    with open(Path(args.out) / "eval_report.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            print(f"{row['model']:>10}  Recall@20 {float(row['Recall@20']):.4f}  NDCG@20 {float(row['NDCG@20']):.4f}"
                  f"  train pos/neg strength {float(row['train_pos_mean']):.2f} / {float(row['train_neg_mean']):.2f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
