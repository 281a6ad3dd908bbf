"""Full-ranking top-K evaluation and connecting-strength statistics."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from hgcl.graph import BipartiteGraph

log = logging.getLogger(__name__)

Scorer = Callable[[np.ndarray], np.ndarray]  # user ids -> (len(users), n) scores
PairScorer = Callable[[np.ndarray, np.ndarray], np.ndarray]  # (users, items) -> scores


def top_k(scores: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest finite-or-not scores; ties broken by ascending index."""
    n = len(scores)
    k = min(k, n)
    if k < n:
        threshold = np.partition(scores, n - k)[n - k]
        cand = np.flatnonzero(scores >= threshold)
    else:
        cand = np.arange(n)
    order = np.lexsort((cand, -scores[cand]))
    return cand[order[:k]]


def rank_items(scores, exclude=(), k: int = 20) -> np.ndarray:
    """Top-k items by descending score, skipping ``exclude``.

    Returns fewer than k ids when fewer candidates remain.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    scores = np.array(scores, dtype=np.float64)
    exclude = np.asarray(exclude, dtype=np.int64)
    keep = np.ones(len(scores), dtype=bool)
    keep[exclude] = False
    remaining = int(keep.sum())
    scores[~keep] = -np.inf
    return top_k(scores, min(k, remaining))


def recall_at_k(topk, relevant) -> float:
    relevant = set(int(r) for r in relevant)
    if not relevant:
        raise ValueError("relevant set is empty")
    hits = sum(1 for i in topk if int(i) in relevant)
    return hits / len(relevant)


def ndcg_at_k(topk, relevant, k: int) -> float:
    relevant = set(int(r) for r in relevant)
    if not relevant:
        raise ValueError("relevant set is empty")
    dcg = sum(1.0 / math.log2(r + 2) for r, i in enumerate(list(topk)[:k]) if int(i) in relevant)
    idcg = sum(1.0 / math.log2(r + 2) for r in range(min(len(relevant), k)))
    return dcg / idcg


@dataclass
class EvalReport:
    k: int
    recall: float
    ndcg: float
    n_users: int
    skipped_users: int
    per_user: np.ndarray = field(repr=False, default=None)  # rows of (user, recall, ndcg)

    def as_row(self) -> dict:
        return {
            f"Recall@{self.k}": self.recall,
            f"NDCG@{self.k}": self.ndcg,
            "users": self.n_users,
        }


def evaluate(
    scorer: Scorer,
    g_train: BipartiteGraph,
    test: BipartiteGraph,
    k: int = 20,
    batch_users: int = 1024,
) -> EvalReport:
    """Average Recall@k and NDCG@k over users with at least one test item.

    Training items are removed from each user's candidates before ranking.
    """
    if test.edge_count == 0:
        raise ValueError("empty test set")
    users = np.flatnonzero(test.user_degrees() > 0)
    skipped = int(g_train.m - len(users))
    if skipped:
        log.debug("%d users have no test items and are not counted", skipped)
    rows = np.empty((len(users), 3))
    for start in range(0, len(users), batch_users):
        chunk = users[start:start + batch_users]
        scores = scorer(chunk)
        for r, u in enumerate(chunk):
            s = scores[r].copy()
            s[g_train.items_of(u)] = -np.inf
            allowed = g_train.n - len(g_train.items_of(u))
            ranked = top_k(s, min(k, allowed))
            relevant = test.items_of(u)
            rows[start + r] = (u, recall_at_k(ranked, relevant), ndcg_at_k(ranked, relevant, k))
    return EvalReport(k, float(rows[:, 1].mean()), float(rows[:, 2].mean()), len(users), skipped, rows)


@dataclass
class StrengthStats:
    means: dict[str, float]
    bin_edges: np.ndarray
    counts: dict[str, np.ndarray]


def strength_stats(
    pair_scorer: PairScorer,
    train: BipartiteGraph,
    test: BipartiteGraph | None,
    rng: np.random.Generator,
    neg_per_user: int = 10,
    bins: int = 50,
    bin_edges: np.ndarray | None = None,
) -> StrengthStats:
    """Connecting strength of positive pairs and of random negatives.

    Negatives are ``neg_per_user`` items drawn uniformly from the whole
    item set for every user present in the split.
    """
    groups: dict[str, np.ndarray] = {}
    splits = [("train", train)] + ([("test", test)] if test is not None else [])
    for name, graph in splits:
        edges = graph.edges()
        groups[f"{name}_pos"] = pair_scorer(edges[:, 0], edges[:, 1]) if len(edges) else np.empty(0)
        users = np.flatnonzero(graph.user_degrees() > 0)
        neg_users = np.repeat(users, neg_per_user)
        neg_items = rng.integers(graph.n, size=len(neg_users))
        groups[f"{name}_neg"] = pair_scorer(neg_users, neg_items) if len(neg_users) else np.empty(0)

    if bin_edges is None:
        values = np.concatenate([v for v in groups.values() if len(v)])
        bin_edges = np.histogram_bin_edges(values, bins=bins)
    means = {key: float(v.mean()) if len(v) else float("nan") for key, v in groups.items()}
    counts = {key: np.histogram(v, bins=bin_edges)[0] for key, v in groups.items()}
    return StrengthStats(means, bin_edges, counts)
