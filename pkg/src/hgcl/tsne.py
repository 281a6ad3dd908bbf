"""Exact O(n^2) t-SNE: perplexity calibration, KL objective and its gradient."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from hgcl.config import TsneConfig
from hgcl.seeding import derive_rng

PERPLEXITY_TOL = 1e-3
MAX_SEARCH_ITERS = 64
MIN_GAIN = 0.01


class TsneError(ValueError):
    pass


@dataclass
class Projection2D:
    coords: np.ndarray
    final_kl: float
    initial_kl: float


def squared_distances(x: np.ndarray) -> np.ndarray:
    x = x - x.mean(axis=0)
    sq = np.sum(x * x, axis=1)
    d = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.maximum(d, 0.0, out=d)
    np.fill_diagonal(d, 0.0)
    return d


def _row_distribution(dists: np.ndarray, beta: float) -> tuple[np.ndarray, float]:
    """Gaussian weights exp(-beta * d) normalized, and their perplexity exp(H)."""
    shifted = dists - dists.min()
    w = np.exp(-beta * shifted)
    z = w.sum()
    p = w / z
    entropy = np.log(z) + beta * np.sum(p * shifted)
    return p, float(np.exp(entropy))


def calibrate_sigmas(dists: np.ndarray, perplexity: float, tol: float = PERPLEXITY_TOL) -> tuple[float, np.ndarray]:
    """Bisection on the Gaussian precision beta = 1/(2 sigma^2) of one point.

    ``dists`` holds squared distances to the point's neighbors (self
    excluded). Returns (sigma, conditional probabilities).
    """
    dists = np.asarray(dists, dtype=np.float64)
    if dists.size < 2 or not np.all(np.isfinite(dists)):
        raise TsneError("need at least two finite neighbor distances")
    if not 1 < perplexity <= dists.size + tol:
        raise TsneError(f"perplexity {perplexity} unreachable with {dists.size} neighbors")
    spread = dists.max() - dists.min()
    if spread == 0:
        p = np.full(dists.size, 1.0 / dists.size)
        if abs(dists.size - perplexity) < tol:
            return np.inf, p
        raise TsneError("all neighbors equidistant; only perplexity == neighbor count is reachable")

    beta = 1.0 / spread
    lo, hi = 0.0, np.inf
    for _ in range(MAX_SEARCH_ITERS):
        p, perp = _row_distribution(dists, beta)
        if abs(perp - perplexity) < tol:
            return float(np.sqrt(0.5 / beta)), p
        if perp > perplexity:
            lo = beta
            beta = beta * 2.0 if hi == np.inf else np.sqrt(lo * hi)
        else:
            hi = beta
            beta = beta / 2.0 if lo == 0.0 else np.sqrt(lo * hi)
    raise TsneError(f"perplexity search did not reach {perplexity} within {MAX_SEARCH_ITERS} steps (got {perp})")


def conditional_probabilities(x: np.ndarray, perplexity: float) -> np.ndarray:
    """Row-stochastic P_{j|i} with every row calibrated to ``perplexity``."""
    d = squared_distances(x)
    n = d.shape[0]
    p = np.zeros((n, n))
    mask = ~np.eye(n, dtype=bool)
    for i in range(n):
        _, row = calibrate_sigmas(d[i, mask[i]], perplexity)
        p[i, mask[i]] = row
    return p


def joint_probabilities(x: np.ndarray, cfg: TsneConfig) -> np.ndarray:
    n = x.shape[0]
    if cfg.input_kernel == "student":
        w = 1.0 / (1.0 + squared_distances(x))
        np.fill_diagonal(w, 0.0)
        return w / w.sum()
    cond = conditional_probabilities(x, cfg.perplexity)
    return (cond + cond.T) / (2.0 * n)


def student_affinities(y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(Q, num) with num_ij = 1 / (1 + ||y_i - y_j||^2) and zero diagonal."""
    sq = np.sum(y * y, axis=1)
    d = sq[:, None] + sq[None, :] - 2.0 * (y @ y.T)
    num = 1.0 / (1.0 + np.maximum(d, 0.0))
    np.fill_diagonal(num, 0.0)
    return num / num.sum(), num


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """sum p log(p / q) over entries with p > 0."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError("P and Q differ in shape")
    mask = p > 0
    if np.any(q[mask] <= 0):
        raise ValueError("Q is zero where P is positive")
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def kl_gradient(p: np.ndarray, y: np.ndarray) -> np.ndarray:
    """d KL(P || Q(y)) / dy = 4 sum_j (p_ij - q_ij) num_ij (y_i - y_j)."""
    q, num = student_affinities(y)
    w = (p - q) * num
    return 4.0 * (np.sum(w, axis=1)[:, None] * y - w @ y)


def tsne_embed(x: np.ndarray, cfg: TsneConfig, label: str = "tsne") -> Projection2D:
    """Project rows of ``x`` to 2-D by gradient descent on KL(P || Q).

    Early exaggeration for the first ``cfg.exaggeration_iters`` steps,
    momentum switched at ``cfg.momentum_switch``, per-coordinate gains.
    """
    cfg.validate()
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if n < 4:
        raise TsneError("t-SNE needs at least 4 points")
    if np.all(np.ptp(x, axis=0) == 0):
        raise TsneError("all input rows are identical")
    if cfg.input_kernel == "gaussian" and not cfg.perplexity < n:
        raise TsneError(f"perplexity {cfg.perplexity} must be < n = {n}")

    p = joint_probabilities(x, cfg)
    p = np.maximum(p, 1e-300)
    np.fill_diagonal(p, 0.0)
    rng = derive_rng(cfg.seed, label)
    y = 1e-4 * rng.standard_normal((n, 2))
    initial_kl = kl_divergence(p, student_affinities(y)[0])

    update = np.zeros_like(y)
    gains = np.ones_like(y)
    for it in range(cfg.iters):
        exag = cfg.early_exaggeration if it < cfg.exaggeration_iters else 1.0
        momentum = cfg.momentum_start if it < cfg.momentum_switch else cfg.momentum_end
        grad = kl_gradient(exag * p, y)
        same_sign = np.sign(grad) == np.sign(update)
        gains = np.where(same_sign, gains * 0.8, gains + 0.2)
        np.maximum(gains, MIN_GAIN, out=gains)
        update = momentum * update - cfg.lr * gains * grad
        y = y + update
        y = y - y.mean(axis=0)

    final_kl = kl_divergence(p, student_affinities(y)[0])
    return Projection2D(y, final_kl, initial_kl)
