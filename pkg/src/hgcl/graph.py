"""User-item interaction data, bipartite CSR graphs and BPR triple sampling."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

log = logging.getLogger(__name__)

MAX_NEG_TRIES = 1000


class InteractionFormatError(ValueError):
    """Raised for unreadable interaction files."""


class SamplingError(RuntimeError):
    """Raised when a negative cannot be drawn for a user."""


@dataclass
class InteractionDataset:
    records: list[tuple[str, str]]
    user_index: dict[str, int]
    item_index: dict[str, int]
    dropped: int = 0

    @property
    def m(self) -> int:
        return len(self.user_index)

    @property
    def n(self) -> int:
        return len(self.item_index)

    def pairs(self) -> np.ndarray:
        """(len(records), 2) array of dense (user, item) ids."""
        out = np.empty((len(self.records), 2), dtype=np.int64)
        for k, (u, i) in enumerate(self.records):
            out[k, 0] = self.user_index[u]
            out[k, 1] = self.item_index[i]
        return out


def _read_pairs(path: Path) -> list[tuple[str, str]]:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            tokens = line.split()
            if len(tokens) < 2:
                raise InteractionFormatError(f"{path}:{lineno}: expected 'user item [weight]', got {line!r}")
            pairs.append((tokens[0], tokens[1]))
    if not pairs:
        raise InteractionFormatError(f"{path}: no interactions")
    return pairs


def load_interactions(
    path: str | Path,
    split: str = "train",
    train: InteractionDataset | None = None,
) -> InteractionDataset:
    """Read a whitespace-separated interaction file.

    Train ids are assigned densely in order of first appearance. For
    ``split="test"`` the id maps of ``train`` are reused and records with a
    user or item unseen in training are dropped.
    """
    if split not in ("train", "test"):
        raise ValueError(f"unknown split {split!r}")
    raw = _read_pairs(Path(path))
    seen: set[tuple[str, str]] = set()
    records = []
    for pair in raw:
        if pair not in seen:
            seen.add(pair)
            records.append(pair)

    if split == "train":
        user_index: dict[str, int] = {}
        item_index: dict[str, int] = {}
        for u, i in records:
            user_index.setdefault(u, len(user_index))
            item_index.setdefault(i, len(item_index))
        return InteractionDataset(records, user_index, item_index)

    if train is None:
        raise ValueError("test split needs the train dataset for its id maps")
    kept = [(u, i) for u, i in records if u in train.user_index and i in train.item_index]
    dropped = len(records) - len(kept)
    if dropped:
        log.info("dropped %d test interactions with users/items unseen in training", dropped)
    return InteractionDataset(kept, train.user_index, train.item_index, dropped=dropped)


@dataclass(frozen=True)
class BipartiteGraph:
    """Users x items adjacency held as a CSR matrix and its CSR transpose."""

    m: int
    n: int
    user_to_items: sp.csr_matrix
    item_to_users: sp.csr_matrix

    @property
    def edge_count(self) -> int:
        return int(self.user_to_items.nnz)

    def items_of(self, user: int) -> np.ndarray:
        a = self.user_to_items
        return a.indices[a.indptr[user]:a.indptr[user + 1]]

    def users_of(self, item: int) -> np.ndarray:
        a = self.item_to_users
        return a.indices[a.indptr[item]:a.indptr[item + 1]]

    def user_degrees(self) -> np.ndarray:
        return np.diff(self.user_to_items.indptr)

    def item_degrees(self) -> np.ndarray:
        return np.diff(self.item_to_users.indptr)

    def edges(self) -> np.ndarray:
        """(|E|, 2) array of (user, item), sorted by user then item."""
        a = self.user_to_items
        users = np.repeat(np.arange(self.m, dtype=np.int64), np.diff(a.indptr))
        return np.stack([users, a.indices.astype(np.int64)], axis=1)

    def has_edge(self, user: int, item: int) -> bool:
        row = self.items_of(user)
        k = np.searchsorted(row, item)
        return bool(k < len(row) and row[k] == item)

    def has_edges(self, users: np.ndarray, items: np.ndarray) -> np.ndarray:
        a = self.user_to_items
        out = np.zeros(len(users), dtype=bool)
        for k, (u, i) in enumerate(zip(users, items)):
            row = a.indices[a.indptr[u]:a.indptr[u + 1]]
            j = np.searchsorted(row, i)
            out[k] = j < len(row) and row[j] == i
        return out


def graph_from_edges(users: np.ndarray, items: np.ndarray, m: int, n: int) -> BipartiteGraph:
    users = np.asarray(users, dtype=np.int64)
    items = np.asarray(items, dtype=np.int64)
    if len(users) and (users.min() < 0 or users.max() >= m or items.min() < 0 or items.max() >= n):
        raise ValueError("edge endpoint out of range")
    data = np.ones(len(users), dtype=np.float64)
    a = sp.coo_matrix((data, (users, items)), shape=(m, n)).tocsr()
    # duplicates were summed; collapse back to binary
    a.data[:] = 1.0
    a.sort_indices()
    at = a.T.tocsr()
    at.sort_indices()
    return BipartiteGraph(m, n, a, at)


def build_graph(ds: InteractionDataset) -> BipartiteGraph:
    if not ds.records:
        raise ValueError("empty dataset")
    pairs = ds.pairs()
    return graph_from_edges(pairs[:, 0], pairs[:, 1], ds.m, ds.n)


@dataclass(frozen=True)
class NormalizedAdjacency:
    """Symmetric-normalized bipartite adjacency D^-1/2 A D^-1/2.

    Stored as the user->item block ``r`` (m x n, weight 1/sqrt(deg u deg i))
    and its transpose; nodes are ordered users first, then items. Zero-degree
    nodes have empty rows; ``matmul`` carries their input row forward
    unchanged (an identity entry on the diagonal), so isolated nodes keep
    their embedding through propagation.
    """

    m: int
    n: int
    r: sp.csr_matrix
    rt: sp.csr_matrix
    isolated: np.ndarray  # node ids (users first, items offset by m) with degree 0

    @property
    def size(self) -> int:
        return self.m + self.n

    def matmul(self, x: np.ndarray) -> np.ndarray:
        """Apply the (m+n) x (m+n) operator to a stacked node matrix."""
        if x.shape[0] != self.size:
            raise ValueError(f"expected {self.size} rows, got {x.shape[0]}")
        out = np.empty_like(x)
        out[: self.m] = self.r @ x[self.m:]
        out[self.m:] = self.rt @ x[: self.m]
        if len(self.isolated):
            out[self.isolated] = x[self.isolated]
        return out

    def weight(self, user: int, item: int) -> float:
        return float(self.r[user, item])

    def dense(self, carry_isolated: bool = False) -> np.ndarray:
        out = np.zeros((self.size, self.size))
        out[: self.m, self.m:] = self.r.toarray()
        out[self.m:, : self.m] = self.rt.toarray()
        if carry_isolated:
            out[self.isolated, self.isolated] = 1.0
        return out


def normalize_adjacency(g: BipartiteGraph) -> NormalizedAdjacency:
    du = g.user_degrees().astype(np.float64)
    di = g.item_degrees().astype(np.float64)
    # zero-degree nodes have no stored entries, so the 0 placeholder is never used
    inv_u = np.divide(1.0, np.sqrt(du), out=np.zeros_like(du), where=du > 0)
    inv_i = np.divide(1.0, np.sqrt(di), out=np.zeros_like(di), where=di > 0)
    a = g.user_to_items
    rows = np.repeat(np.arange(g.m), np.diff(a.indptr))
    w = inv_u[rows] * inv_i[a.indices]
    r = sp.csr_matrix((w, a.indices.copy(), a.indptr.copy()), shape=(g.m, g.n))
    rt = r.T.tocsr()
    rt.sort_indices()
    isolated = np.concatenate([np.flatnonzero(du == 0), g.m + np.flatnonzero(di == 0)])
    return NormalizedAdjacency(g.m, g.n, r, rt, isolated.astype(np.int64))


def sample_negatives(g: BipartiteGraph, users: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Uniform negatives over all items, rejecting the user's positives."""
    deg = g.user_degrees()
    negs = np.empty(len(users), dtype=np.int64)
    for k, u in enumerate(users):
        if deg[u] >= g.n:
            raise SamplingError(f"user {u} interacts with every one of the {g.n} items; no negative exists")
        row = g.items_of(u)
        for _ in range(MAX_NEG_TRIES):
            j = int(rng.integers(g.n))
            p = np.searchsorted(row, j)
            if p >= len(row) or row[p] != j:
                negs[k] = j
                break
        else:
            raise SamplingError(f"no negative found for user {u} after {MAX_NEG_TRIES} draws")
    return negs


def sample_bpr_triples(
    g: BipartiteGraph,
    batch_size: int,
    rng: np.random.Generator,
    skip_saturated: bool = False,
) -> np.ndarray:
    """Draw ``batch_size`` (user, pos, neg) triples.

    (user, pos) is uniform over training edges, neg is uniform over items
    with rejection of the user's positives. With ``skip_saturated`` the
    edges of users connected to every item are left out of the draw, since
    they admit no negative; if no other edge remains, SamplingError.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if g.edge_count == 0:
        raise SamplingError("graph has no edges")
    edges = g.edges()
    if skip_saturated:
        open_users = g.user_degrees() < g.n
        edges = edges[open_users[edges[:, 0]]]
        if len(edges) == 0:
            raise SamplingError(f"every user is connected to all {g.n} items; no negative exists")
    pick = rng.integers(len(edges), size=batch_size)
    users = edges[pick, 0]
    pos = edges[pick, 1]
    neg = sample_negatives(g, users, rng)
    return np.stack([users, pos, neg], axis=1)


def split_edges(g: BipartiteGraph, fraction: float, rng: np.random.Generator) -> tuple[BipartiteGraph, BipartiteGraph]:
    """Hold out ``fraction`` of the edges; returns (kept, held_out) over the same id space."""
    edges = g.edges()
    k = int(round(fraction * len(edges)))
    perm = rng.permutation(len(edges))
    held = np.sort(perm[:k])
    kept = np.sort(perm[k:])
    return (
        graph_from_edges(edges[kept, 0], edges[kept, 1], g.m, g.n),
        graph_from_edges(edges[held, 0], edges[held, 1], g.m, g.n),
    )
