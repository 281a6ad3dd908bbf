"""BPR, cross-layer InfoNCE and L2 losses with analytic gradients; row-sparse Adam."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def softplus(x: np.ndarray) -> np.ndarray:
    """log(1 + e^x) without overflow."""
    x = np.asarray(x, dtype=np.float64)
    return np.logaddexp(0.0, x)


def sigmoid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def bpr_loss(score_pos, score_neg) -> float:
    """sum of -log sigmoid(pos - neg), computed as softplus(neg - pos)."""
    pos = np.asarray(score_pos, dtype=np.float64)
    neg = np.asarray(score_neg, dtype=np.float64)
    if pos.shape != neg.shape:
        raise ValueError("score lists differ in length")
    return float(np.sum(softplus(neg - pos)))


def bpr_grad(
    triples: np.ndarray,
    users: np.ndarray,
    items: np.ndarray,
    item_extra: np.ndarray | None = None,
) -> tuple[float, np.ndarray, np.ndarray, np.ndarray | None]:
    """BPR loss over (user, pos, neg) triples with score u . (i [+ extra_i]).

    Returns (value, dL/dusers, dL/ditems, dL/ditem_extra). ``item_extra``
    is an optional per-item additive row (the cluster term of the two-level
    score); pass None for the plain dot product.
    """
    u, p, q = triples[:, 0], triples[:, 1], triples[:, 2]
    eu = users[u]
    ep = items[p]
    eq = items[q]
    if item_extra is not None:
        ep = ep + item_extra[p]
        eq = eq + item_extra[q]
    diff = np.einsum("ij,ij->i", eu, ep - eq)
    value = float(np.sum(softplus(-diff)))
    coef = -sigmoid(-diff)[:, None]  # dL/ddiff

    g_users = np.zeros_like(users)
    g_items = np.zeros_like(items)
    np.add.at(g_users, u, coef * (ep - eq))
    np.add.at(g_items, p, coef * eu)
    np.add.at(g_items, q, -coef * eu)
    g_extra = None
    if item_extra is not None:
        g_extra = np.zeros_like(item_extra)
        np.add.at(g_extra, p, coef * eu)
        np.add.at(g_extra, q, -coef * eu)
    return value, g_users, g_items, g_extra


def cross_layer_infonce(
    view_a: np.ndarray,
    view_b: np.ndarray,
    batch: np.ndarray,
    tau: float,
) -> tuple[float, np.ndarray, np.ndarray]:
    """InfoNCE between rows of two layer matrices over an in-batch candidate set.

    value = sum_i -log softmax_j(cos(a_i, b_j) / tau)[i] for i, j in ``batch``.
    The i == j term stays in the denominator. Returns (value, dL/da, dL/db),
    both full-size and zero outside ``batch``.
    """
    if view_a.shape != view_b.shape:
        raise ValueError("views differ in shape")
    if tau <= 0:
        raise ValueError("tau must be > 0")
    batch = np.asarray(batch, dtype=np.int64)
    if batch.size == 0:
        raise ValueError("empty batch")
    a = view_a[batch]
    b = view_b[batch]
    na = np.linalg.norm(a, axis=1, keepdims=True)
    nb = np.linalg.norm(b, axis=1, keepdims=True)
    if np.any(na == 0) or np.any(nb == 0):
        raise ValueError("zero-norm row in contrastive batch; cosine similarity undefined")
    za = a / na
    zb = b / nb
    s = (za @ zb.T) / tau
    s_max = s.max(axis=1, keepdims=True)
    ex = np.exp(s - s_max)
    denom = ex.sum(axis=1, keepdims=True)
    value = float(np.sum(s_max[:, 0] + np.log(denom[:, 0]) - np.diag(s)))

    g = ex / denom
    g[np.diag_indices_from(g)] -= 1.0
    g /= tau
    dza = g @ zb
    dzb = g.T @ za
    da = (dza - za * np.sum(za * dza, axis=1, keepdims=True)) / na
    db = (dzb - zb * np.sum(zb * dzb, axis=1, keepdims=True)) / nb

    grad_a = np.zeros_like(view_a)
    grad_b = np.zeros_like(view_b)
    np.add.at(grad_a, batch, da)
    np.add.at(grad_b, batch, db)
    return value, grad_a, grad_b


def l2_reg(params: np.ndarray, rows: np.ndarray, coeff: float) -> tuple[float, np.ndarray]:
    """coeff * sum ||row||^2 / 2 over the distinct ``rows``; gradient coeff * row."""
    if coeff < 0:
        raise ValueError("coeff must be >= 0")
    grad = np.zeros_like(params)
    if coeff == 0:
        return 0.0, grad
    rows = np.unique(np.asarray(rows, dtype=np.int64))
    sub = params[rows]
    grad[rows] = coeff * sub
    return float(coeff * np.sum(sub * sub) / 2.0), grad


@dataclass
class AdamState:
    m1: np.ndarray
    m2: np.ndarray
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8
    t: int = 0

    @classmethod
    def like(cls, params: np.ndarray, **hyper) -> "AdamState":
        return cls(np.zeros_like(params), np.zeros_like(params), **hyper)


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState) -> np.ndarray:
    """Bias-corrected Adam on the rows of ``grads`` that are not all zero.

    Updates ``params`` and ``state`` in place and returns ``params``.
    """
    if params.shape != grads.shape or params.shape != state.m1.shape:
        raise ValueError("shape mismatch between params, grads and optimizer state")
    state.t += 1
    rows = np.flatnonzero(np.any(grads != 0, axis=1))
    if rows.size == 0:
        return params
    g = grads[rows]
    m1 = state.beta1 * state.m1[rows] + (1.0 - state.beta1) * g
    m2 = state.beta2 * state.m2[rows] + (1.0 - state.beta2) * g * g
    state.m1[rows] = m1
    state.m2[rows] = m2
    m_hat = m1 / (1.0 - state.beta1 ** state.t)
    v_hat = m2 / (1.0 - state.beta2 ** state.t)
    params[rows] -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps_hat)
    return params
