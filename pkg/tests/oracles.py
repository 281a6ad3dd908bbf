"""Independent reference implementations used as test oracles.

Nothing here calls into the package's numerical code; each helper is a
direct (slow, dense, loop-based) restatement of the definition.
"""

from __future__ import annotations

import math

import numpy as np

from hgcl.graph import graph_from_edges


def random_graph(rng, m, n, p=0.3, no_isolated=True):
    """Random bipartite graph; with ``no_isolated`` every node gets at least one edge."""
    mask = rng.random((m, n)) < p
    if no_isolated:
        for u in range(m):
            if not mask[u].any():
                mask[u, rng.integers(n)] = True
        for i in range(n):
            if not mask[:, i].any():
                mask[rng.integers(m), i] = True
    u, i = np.nonzero(mask)
    return graph_from_edges(u, i, m, n), mask


def dense_norm_adjacency(mask):
    """(m+n) x (m+n) D^-1/2 A D^-1/2 built entry by entry from a boolean m x n mask."""
    m, n = mask.shape
    a = np.zeros((m + n, m + n))
    for u in range(m):
        for i in range(n):
            if mask[u, i]:
                a[u, m + i] = a[m + i, u] = 1.0
    deg = a.sum(axis=1)
    out = np.zeros_like(a)
    for r in range(m + n):
        for c in range(m + n):
            if a[r, c]:
                out[r, c] = 1.0 / math.sqrt(deg[r] * deg[c])
    return out


def dense_power_layers(mask, e0, K):
    a = dense_norm_adjacency(mask)
    return [np.linalg.matrix_power(a, k) @ e0 for k in range(K + 1)]


def central_diff(f, x, h=1e-5):
    """Central finite-difference gradient of scalar f at array x."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        fp = f(x)
        x[idx] = old - h
        fm = f(x)
        x[idx] = old
        grad[idx] = (fp - fm) / (2 * h)
    return grad


def rel_error(analytic, numeric):
    num = np.linalg.norm(analytic - numeric)
    den = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
    return num / den


def brute_user_clusters(mask, assign):
    """{(u, c) : exists j with mask[u, j] and assign[j] == c}."""
    m, n = mask.shape
    return {(u, int(assign[j])) for u in range(m) for j in range(n) if mask[u, j]}


def infonce_loop(a, b, batch, tau):
    """Cross-view InfoNCE summed over the batch, written with explicit loops."""
    total = 0.0
    for i in batch:
        ai = a[i] / np.linalg.norm(a[i])
        sims = [ai @ (b[j] / np.linalg.norm(b[j])) / tau for j in batch]
        own = ai @ (b[i] / np.linalg.norm(b[i])) / tau
        total += -own + math.log(sum(math.exp(s) for s in sims))
    return total


def ndcg_hand(ranked, relevant, k):
    dcg = sum(1 / math.log2(r + 2) for r, i in enumerate(ranked[:k]) if i in relevant)
    idcg = sum(1 / math.log2(r + 2) for r in range(min(k, len(relevant))))
    return dcg / idcg
