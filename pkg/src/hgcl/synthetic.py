"""Synthetic interaction data with planted two-level item groups."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from hgcl.graph import BipartiteGraph, graph_from_edges


@dataclass
class PlantedData:
    train: BipartiteGraph
    test: BipartiteGraph
    item_super: np.ndarray
    item_sub: np.ndarray
    user_home: np.ndarray  # home sub-group per user


def planted_hierarchy(
    rng: np.random.Generator,
    n_users: int = 200,
    n_items: int = 300,
    n_super: int = 3,
    n_sub: int = 2,
    min_items: int = 12,
    max_items: int = 24,
    mass: tuple[float, float, float] = (0.65, 0.25, 0.10),
    test_fraction: float = 0.2,
) -> PlantedData:
    """Users prefer one sub-group, then its super-group, then everything else.

    ``mass`` is the probability of an interaction falling in the home
    sub-group, the rest of the home super-group, and elsewhere.
    """
    groups = n_super * n_sub
    item_sub = np.arange(n_items) % groups
    item_super = item_sub // n_sub
    user_home = rng.integers(groups, size=n_users)

    train_u, train_i, test_u, test_i = [], [], [], []
    for u in range(n_users):
        home = user_home[u]
        in_sub = item_sub == home
        in_super = (item_super == home // n_sub) & ~in_sub
        other = ~(in_sub | in_super)
        w = mass[0] * in_sub / in_sub.sum() + mass[1] * in_super / max(in_super.sum(), 1) + mass[2] * other / max(other.sum(), 1)
        w = w / w.sum()
        count = int(rng.integers(min_items, max_items + 1))
        items = rng.choice(n_items, size=count, replace=False, p=w)
        n_test = max(1, int(round(test_fraction * count)))
        perm = rng.permutation(items)
        test_u.extend([u] * n_test)
        test_i.extend(perm[:n_test])
        train_u.extend([u] * (count - n_test))
        train_i.extend(perm[n_test:])

    train = graph_from_edges(np.array(train_u), np.array(train_i), n_users, n_items)
    test = graph_from_edges(np.array(test_u), np.array(test_i), n_users, n_items)
    return PlantedData(train, test, item_super, item_sub, user_home)


def write_interactions(path: str | Path, g: BipartiteGraph) -> None:
    """Write ``u<id> i<id>`` lines, one per edge."""
    with open(path, "w", encoding="utf-8") as fh:
        for u, i in g.edges():
            fh.write(f"u{u} i{i}\n")


def write_planted(directory: str | Path, data: PlantedData) -> tuple[Path, Path]:
    """Write train.txt and test.txt under ``directory``.

    Loading reassigns dense ids by first appearance, so they need not equal
    the generator's ids.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    train_path = directory / "train.txt"
    test_path = directory / "test.txt"
    write_interactions(train_path, data.train)
    write_interactions(test_path, data.test)
    return train_path, test_path
