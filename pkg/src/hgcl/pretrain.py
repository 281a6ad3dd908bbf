"""Stage 1: noise-perturbed propagation with cross-layer contrast (hybrid BPR + InfoNCE)."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from hgcl.config import TrainConfig
from hgcl.embedding import EmbeddingState, NoiseSpec, backprop, pool_layers, pooled_layer_grads, propagate, xavier_init
from hgcl.graph import BipartiteGraph, NormalizedAdjacency, normalize_adjacency, sample_negatives
from hgcl.losses import AdamState, adam_step, bpr_grad, cross_layer_infonce, l2_reg
from hgcl.seeding import derive_rng

log = logging.getLogger(__name__)


class TrainingDiverged(FloatingPointError):
    pass


@dataclass
class StepLog:
    epoch: int
    step: int
    rec: float
    cl: float
    l2: float
    total: float


@dataclass
class TrainResult:
    e0: np.ndarray
    history: list[dict] = field(default_factory=list)
    steps: list[StepLog] = field(default_factory=list)
    best_epoch: int = 0


EvalHook = Callable[[int, np.ndarray], "dict | None"]


def epoch_schedule(n_edges: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Shuffled edge indices cut into batches; the last partial batch is kept."""
    order = rng.permutation(n_edges)
    return [order[s:s + batch_size] for s in range(0, n_edges, batch_size)]


def contrastive_terms(
    state: EmbeddingState,
    users: np.ndarray,
    items: np.ndarray,
    K_star: int,
    tau: float,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Cross-layer InfoNCE of layer K vs layer K*, users and items contrasted separately.

    ``items`` are node ids (already offset by m). Returns (value, dL/dE^K, dL/dE^K*).
    """
    view_k = state.layers[-1]
    view_star = state.layers[K_star]
    cl_u, ga_u, gb_u = cross_layer_infonce(view_k, view_star, np.unique(users), tau)
    cl_i, ga_i, gb_i = cross_layer_infonce(view_k, view_star, np.unique(items), tau)
    return cl_u + cl_i, ga_u + ga_i, gb_u + gb_i


def hybrid_loss(
    adj: NormalizedAdjacency,
    e0: np.ndarray,
    triples: np.ndarray,
    cfg: TrainConfig,
    rng: np.random.Generator | None = None,
    fixed_noise: list[np.ndarray] | None = None,
) -> tuple[dict[str, float], np.ndarray, EmbeddingState]:
    """L = L_rec + lambda * L_cl + L2 for one batch, and dL/dE^(0).

    One (noise-perturbed) forward serves both the BPR and the contrastive term.
    """
    m = adj.m
    state = propagate(adj, e0, cfg.K, NoiseSpec(cfg.epsilon), rng, fixed_noise)
    pooled = pool_layers(state)
    rec, g_users, g_items, _ = bpr_grad(triples, pooled[:m], pooled[m:])
    layer_grads = pooled_layer_grads(np.concatenate([g_users, g_items]), cfg.K)

    cl = 0.0
    if cfg.lam > 0:
        cl, g_k, g_star = contrastive_terms(state, triples[:, 0], triples[:, 1] + m, cfg.K_star, cfg.tau)
        layer_grads[cfg.K] = layer_grads[cfg.K] + cfg.lam * g_k
        layer_grads[cfg.K_star] = layer_grads[cfg.K_star] + cfg.lam * g_star
    grad = backprop(adj, layer_grads)

    touched = np.concatenate([triples[:, 0], triples[:, 1] + m, triples[:, 2] + m])
    l2, g_l2 = l2_reg(e0, touched, cfg.l2_coeff)
    grad += g_l2
    parts = {"rec": rec, "cl": cl, "l2": l2, "total": rec + cfg.lam * cl + l2}
    return parts, grad, state


def inference_embeddings(adj: NormalizedAdjacency, e0: np.ndarray, K: int) -> np.ndarray:
    """Noise-free pooled embeddings used for scoring."""
    return pool_layers(propagate(adj, e0, K))


def _check_finite(parts: dict[str, float], epoch: int, step: int) -> None:
    if not all(math.isfinite(v) for v in parts.values()):
        detail = ", ".join(f"{k}={v!r}" for k, v in parts.items())
        raise TrainingDiverged(f"non-finite loss at epoch {epoch} step {step}: {detail}")


def pretrain(
    g: BipartiteGraph,
    cfg: TrainConfig,
    eval_hook: EvalHook | None = None,
    e0: np.ndarray | None = None,
) -> TrainResult:
    """Train E^(0) on the user-item graph; returns the selected layer-0 matrix.

    ``eval_hook(epoch, e0)`` runs after every epoch; if it returns a dict
    with ``val_recall`` and ``cfg.select_best`` is set, the best epoch's
    parameters are returned.
    """
    cfg.validate()
    if g.edge_count == 0:
        raise ValueError("graph has no edges")
    adj = normalize_adjacency(g)
    if e0 is None:
        e0 = xavier_init(g.m + g.n, cfg.d, derive_rng(cfg.seed, "pretrain/init"))
    else:
        e0 = e0.copy()
    rng_sample = derive_rng(cfg.seed, "pretrain/sample")
    rng_noise = derive_rng(cfg.seed, "pretrain/noise")
    adam = AdamState.like(e0, lr=cfg.lr)
    edges = g.edges()

    result = TrainResult(e0)
    best = (-np.inf, None)
    stale = 0
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        sums = {"rec": 0.0, "cl": 0.0, "l2": 0.0, "total": 0.0}
        for batch in epoch_schedule(len(edges), cfg.batch_size, rng_sample):
            users = edges[batch, 0]
            neg = sample_negatives(g, users, rng_sample)
            triples = np.stack([users, edges[batch, 1], neg], axis=1)
            parts, grad, _ = hybrid_loss(adj, e0, triples, cfg, rng_noise)
            step += 1
            _check_finite(parts, epoch, step)
            adam_step(e0, grad, adam)
            result.steps.append(StepLog(epoch, step, parts["rec"], parts["cl"], parts["l2"], parts["total"]))
            for k in sums:
                sums[k] += parts[k]

        row = {"epoch": epoch, **sums}
        if eval_hook is not None:
            row.update(eval_hook(epoch, e0) or {})
        result.history.append(row)
        log.info("pretrain epoch %d: %s", epoch, row)

        if "val_recall" in row:
            if row["val_recall"] > best[0]:
                best = (row["val_recall"], epoch, e0.copy())
                stale = 0
            else:
                stale += 1
            if cfg.patience and stale >= cfg.patience:
                log.info("early stop after epoch %d", epoch)
                break

    if cfg.select_best and best[1] is not None:
        result.e0, result.best_epoch = best[2], best[1]
    else:
        result.e0, result.best_epoch = e0, len(result.history)
    return result
