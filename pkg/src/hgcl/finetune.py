"""Stage 3: joint training on the user-item and user-cluster graphs, two-level scoring."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from hgcl.config import TrainConfig
from hgcl.embedding import NoiseSpec, backprop, pool_layers, pooled_layer_grads, propagate, xavier_init
from hgcl.graph import BipartiteGraph, NormalizedAdjacency, normalize_adjacency, sample_bpr_triples, sample_negatives
from hgcl.hierarchy import HierarchyGraph
from hgcl.losses import AdamState, adam_step, bpr_grad, l2_reg
from hgcl.polar import ClusterAssignment
from hgcl.pretrain import StepLog, TrainResult, _check_finite, contrastive_terms, epoch_schedule
from hgcl.seeding import derive_rng

log = logging.getLogger(__name__)


@dataclass
class HgclModel:
    """Layer-0 user, item and cluster tables plus their pooled (inference) versions."""

    e_user: np.ndarray
    e_item: np.ndarray
    e_cluster: np.ndarray
    assignment: ClusterAssignment
    K: int
    pooled_user: np.ndarray | None = field(default=None, repr=False)
    pooled_item: np.ndarray | None = field(default=None, repr=False)
    pooled_cluster: np.ndarray | None = field(default=None, repr=False)

    @property
    def m(self) -> int:
        return self.e_user.shape[0]

    @property
    def n(self) -> int:
        return self.e_item.shape[0]

    def refresh(self, adj_ui: NormalizedAdjacency, adj_uc: NormalizedAdjacency) -> "HgclModel":
        """Recompute noise-free pooled embeddings on both graphs."""
        m = self.m
        ui = pool_layers(propagate(adj_ui, np.concatenate([self.e_user, self.e_item]), self.K))
        uc = pool_layers(propagate(adj_uc, np.concatenate([self.e_user, self.e_cluster]), self.K))
        self.pooled_user = ui[:m]
        self.pooled_item = ui[m:]
        self.pooled_cluster = uc[m:]
        return self

    def item_vectors(self) -> np.ndarray:
        """e_item + sum_k w_jk e_cluster,k; the sum has one term since w is one-hot."""
        self._require_pooled()
        return self.pooled_item + self.pooled_cluster[self.assignment.assign]

    def scores(self, users: np.ndarray) -> np.ndarray:
        return self.pooled_user[users] @ self.item_vectors().T

    def _require_pooled(self) -> None:
        if self.pooled_user is None:
            raise RuntimeError("pooled embeddings missing; call refresh() first")


def predict_score(model: HgclModel, user: int, item: int) -> float:
    model._require_pooled()
    if not 0 <= user < model.m:
        raise IndexError(f"user {user} out of range [0, {model.m})")
    if not 0 <= item < model.n:
        raise IndexError(f"item {item} out of range [0, {model.n})")
    k = model.assignment.assign[item]
    return float(model.pooled_user[user] @ (model.pooled_item[item] + model.pooled_cluster[k]))


def init_finetune(
    e0_pt: np.ndarray,
    pooled_pt: np.ndarray,
    m: int,
    assignment: ClusterAssignment,
    K: int,
    rng: np.random.Generator,
) -> HgclModel:
    """Warm start from pre-trained layer-0 rows; clusters start at their members' pooled mean."""
    if e0_pt.shape != pooled_pt.shape:
        raise ValueError("layer-0 and pooled matrices differ in shape")
    n = e0_pt.shape[0] - m
    if n != len(assignment.assign):
        raise ValueError(f"assignment covers {len(assignment.assign)} items, checkpoint has {n}")
    d = e0_pt.shape[1]
    c = assignment.n_clusters
    sums = np.zeros((c, d))
    np.add.at(sums, assignment.assign, pooled_pt[m:])
    sizes = assignment.sizes
    e_cluster = xavier_init(c, d, rng)
    filled = sizes > 0
    e_cluster[filled] = sums[filled] / sizes[filled, None]
    return HgclModel(e0_pt[:m].copy(), e0_pt[m:].copy(), e_cluster, assignment, K)


def joint_loss(
    adj_ui: NormalizedAdjacency,
    adj_uc: NormalizedAdjacency,
    e_user: np.ndarray,
    e_item: np.ndarray,
    e_cluster: np.ndarray,
    triples_ui: np.ndarray,
    triples_uc: np.ndarray,
    cfg: TrainConfig,
    rng: np.random.Generator | None = None,
    fixed_noise: list[np.ndarray] | None = None,
) -> tuple[dict[str, float], tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """L = L_rec^ui + L_rec^uc + lambda * L_cl^ui + L2 and its gradients.

    The user-item path is noise-perturbed with cross-layer contrast; the
    user-cluster path is plain propagation. The user table is shared, so it
    collects gradients from both paths.
    """
    m = e_user.shape[0]
    x_ui = np.concatenate([e_user, e_item])
    state = propagate(adj_ui, x_ui, cfg.K, NoiseSpec(cfg.epsilon), rng, fixed_noise)
    pooled_ui = pool_layers(state)
    rec_ui, gu, gi, _ = bpr_grad(triples_ui, pooled_ui[:m], pooled_ui[m:])
    grads_ui = pooled_layer_grads(np.concatenate([gu, gi]), cfg.K)
    cl = 0.0
    if cfg.lam > 0:
        cl, g_k, g_star = contrastive_terms(state, triples_ui[:, 0], triples_ui[:, 1] + m, cfg.K_star, cfg.tau)
        grads_ui[cfg.K] = grads_ui[cfg.K] + cfg.lam * g_k
        grads_ui[cfg.K_star] = grads_ui[cfg.K_star] + cfg.lam * g_star
    g_ui = backprop(adj_ui, grads_ui)

    x_uc = np.concatenate([e_user, e_cluster])
    pooled_uc = pool_layers(propagate(adj_uc, x_uc, cfg.K))
    rec_uc, gu2, gc, _ = bpr_grad(triples_uc, pooled_uc[:m], pooled_uc[m:])
    g_uc = backprop(adj_uc, pooled_layer_grads(np.concatenate([gu2, gc]), cfg.K))

    l2_u, gl_u = l2_reg(e_user, np.concatenate([triples_ui[:, 0], triples_uc[:, 0]]), cfg.l2_coeff)
    l2_i, gl_i = l2_reg(e_item, triples_ui[:, 1:].ravel(), cfg.l2_coeff)
    l2_c, gl_c = l2_reg(e_cluster, triples_uc[:, 1:].ravel(), cfg.l2_coeff)

    grad_user = g_ui[:m] + g_uc[:m] + gl_u
    grad_item = g_ui[m:] + gl_i
    grad_cluster = g_uc[m:] + gl_c
    l2 = l2_u + l2_i + l2_c
    parts = {
        "rec_ui": rec_ui,
        "rec_uc": rec_uc,
        "cl": cl,
        "l2": l2,
        "total": rec_ui + rec_uc + cfg.lam * cl + l2,
    }
    return parts, (grad_user, grad_item, grad_cluster)


FinetuneHook = Callable[[int, HgclModel], "dict | None"]


@dataclass
class FinetuneResult(TrainResult):
    model: HgclModel | None = None


def finetune(
    g: BipartiteGraph,
    h: HierarchyGraph,
    model: HgclModel,
    cfg: TrainConfig,
    eval_hook: FinetuneHook | None = None,
) -> FinetuneResult:
    """Joint Adam training of the user, item and cluster tables.

    Each step draws a BPR batch on the user-item graph (shuffled edge order)
    and an independent, equally sized batch on the user-cluster graph.
    """
    cfg.validate()
    adj_ui = normalize_adjacency(g)
    adj_uc = h.adj
    rng_sample = derive_rng(cfg.seed, "finetune/sample")
    rng_hier = derive_rng(cfg.seed, "finetune/hierarchy")
    rng_noise = derive_rng(cfg.seed, "finetune/noise")
    params = [model.e_user.copy(), model.e_item.copy(), model.e_cluster.copy()]
    adams = [AdamState.like(p, lr=cfg.lr) for p in params]
    edges = g.edges()

    def snapshot() -> HgclModel:
        return HgclModel(params[0].copy(), params[1].copy(), params[2].copy(), model.assignment, model.K)

    result = FinetuneResult(params[0])
    best = (-np.inf, None, None)
    stale = 0
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        sums = {"rec_ui": 0.0, "rec_uc": 0.0, "cl": 0.0, "l2": 0.0, "total": 0.0}
        for batch in epoch_schedule(len(edges), cfg.batch_size, rng_sample):
            users = edges[batch, 0]
            neg = sample_negatives(g, users, rng_sample)
            t_ui = np.stack([users, edges[batch, 1], neg], axis=1)
            t_uc = sample_bpr_triples(h.graph, len(batch), rng_hier, skip_saturated=True)
            parts, grads = joint_loss(adj_ui, adj_uc, *params, t_ui, t_uc, cfg, rng_noise)
            step += 1
            _check_finite(parts, epoch, step)
            for p, gr, st in zip(params, grads, adams):
                adam_step(p, gr, st)
            result.steps.append(StepLog(epoch, step, parts["rec_ui"] + parts["rec_uc"], parts["cl"],
                                        parts["l2"], parts["total"]))
            for k in sums:
                sums[k] += parts[k]

        row = {"epoch": epoch, **sums}
        if eval_hook is not None:
            row.update(eval_hook(epoch, snapshot().refresh(adj_ui, adj_uc)) or {})
        result.history.append(row)
        log.info("finetune epoch %d: %s", epoch, row)

        if "val_recall" in row:
            if row["val_recall"] > best[0]:
                best = (row["val_recall"], epoch, snapshot())
                stale = 0
            else:
                stale += 1
            if cfg.patience and stale >= cfg.patience:
                log.info("early stop after epoch %d", epoch)
                break

    if cfg.select_best and best[1] is not None:
        final, result.best_epoch = best[2], best[1]
    else:
        final, result.best_epoch = snapshot(), len(result.history)
    result.model = final.refresh(adj_ui, adj_uc)
    result.e0 = np.concatenate([final.e_user, final.e_item])
    return result
