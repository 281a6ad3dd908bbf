"""Write a planted two-level synthetic dataset as train.txt / test.txt.

    python3 scripts/make_synthetic.py --out data/toy --seed 0
"""

import argparse

from hgcl.seeding import derive_rng
from hgcl.synthetic import planted_hierarchy, write_planted


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--out", default="data/toy")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--users", type=int, default=200)
    p.add_argument("--items", type=int, default=300)
    args = p.parse_args()
    data = planted_hierarchy(derive_rng(args.seed, "data"), n_users=args.users, n_items=args.items)
    train, test = write_planted(args.out, data)
    print(f"{train}: {data.train.edge_count} edges; {test}: {data.test.edge_count} edges")


if __name__ == "__main__":
    main()
