"""Layer-0 embedding table, LightGCN-style propagation with optional noise, pooling."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from hgcl.graph import NormalizedAdjacency

CHECKPOINT_MAGIC = "HGCL-EMB v1"
_HEADER_RE = re.compile(r"^HGCL-EMB v1 rows=(\d+) d=(\d+)$")


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseSpec:
    epsilon: float = 0.0
    enabled: bool = True

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")

    @property
    def active(self) -> bool:
        return self.enabled and self.epsilon > 0


NO_NOISE = NoiseSpec(0.0, enabled=False)


@dataclass
class EmbeddingState:
    """Per-layer node matrices E^(0..K) and the noise that produced them.

    ``layers[k+1] = adj @ (layers[k] + noise[k])``; ``noise`` is empty for a
    noise-free forward.
    """

    layers: list[np.ndarray]
    noise: list[np.ndarray] = field(default_factory=list)

    @property
    def e0(self) -> np.ndarray:
        return self.layers[0]

    @property
    def K(self) -> int:
        return len(self.layers) - 1

    @property
    def d(self) -> int:
        return self.layers[0].shape[1]

    @property
    def pooled(self) -> np.ndarray:
        return pool_layers(self)


def xavier_init(rows: int, d: int, rng: np.random.Generator) -> np.ndarray:
    """Glorot-uniform matrix with bound sqrt(6 / (rows + d))."""
    if rows < 1 or d < 1:
        raise ValueError("rows and d must be >= 1")
    bound = np.sqrt(6.0 / (rows + d))
    return rng.uniform(-bound, bound, size=(rows, d))


def sample_noise(x: np.ndarray, epsilon: float, rng: np.random.Generator) -> np.ndarray:
    """Per-row noise of norm exactly ``epsilon`` lying in the orthant of ``x``.

    delta = eps * (sign(x) * u) / ||sign(x) * u||, u ~ U(0, 1]^d. Zero
    entries of ``x`` count as positive so every row gets a full-norm vector.
    """
    u = 1.0 - rng.random(x.shape)  # (0, 1], never an all-zero row
    s = np.where(x < 0, -1.0, 1.0)
    v = s * u
    norms = np.linalg.norm(v, axis=1, keepdims=True)
    return epsilon * v / norms


def propagate(
    adj: NormalizedAdjacency,
    e0: np.ndarray,
    K: int,
    noise: NoiseSpec = NO_NOISE,
    rng: np.random.Generator | None = None,
    fixed_noise: list[np.ndarray] | None = None,
) -> EmbeddingState:
    """Run K propagation layers, perturbing each input layer when noise is active.

    ``fixed_noise`` replays a previously drawn perturbation (used by gradient
    checks so the forward is a deterministic function of ``e0``).
    """
    if e0.ndim != 2 or e0.shape[0] != adj.size:
        raise ValueError(f"e0 has shape {e0.shape}, graph has {adj.size} nodes")
    if K < 1:
        raise ValueError("K must be >= 1")
    if fixed_noise is not None and len(fixed_noise) != K:
        raise ValueError("fixed_noise needs one matrix per layer")
    if noise.active and fixed_noise is None and rng is None:
        raise ValueError("noisy propagation needs an rng")

    layers = [e0]
    deltas: list[np.ndarray] = []
    x = e0
    for k in range(K):
        if fixed_noise is not None:
            delta = fixed_noise[k]
        elif noise.active:
            delta = sample_noise(x, noise.epsilon, rng)
        else:
            delta = None
        if delta is not None:
            deltas.append(delta)
            x = adj.matmul(x + delta)
        else:
            x = adj.matmul(x)
        layers.append(x)
    return EmbeddingState(layers, deltas)


def pool_layers(state: EmbeddingState) -> np.ndarray:
    """Mean over layers 0..K."""
    total = state.layers[0].copy()
    for layer in state.layers[1:]:
        total += layer
    return total / len(state.layers)


def backprop(adj: NormalizedAdjacency, layer_grads: list[np.ndarray | None]) -> np.ndarray:
    """Gradient w.r.t. E^(0) given dL/dE^(k) for every layer.

    Noise enters additively and is held constant, and the operator is
    symmetric, so g_k = G_k + adj @ g_{k+1}.
    """
    g = None
    for grad in reversed(layer_grads):
        if g is not None:
            g = adj.matmul(g)
            if grad is not None:
                g = g + grad
        elif grad is not None:
            g = grad.copy()
    if g is None:
        raise ValueError("no layer gradients given")
    return g


def pooled_layer_grads(grad_pooled: np.ndarray, K: int) -> list[np.ndarray]:
    share = grad_pooled / (K + 1)
    return [share] * (K + 1)


def base_score(pooled: np.ndarray, m: int, user: int, item: int) -> float:
    """Dot product of a user row and an item row (item rows offset by m)."""
    n = pooled.shape[0] - m
    if not 0 <= user < m:
        raise IndexError(f"user {user} out of range [0, {m})")
    if not 0 <= item < n:
        raise IndexError(f"item {item} out of range [0, {n})")
    return float(pooled[user] @ pooled[m + item])


def write_block(fh, x: np.ndarray) -> None:
    x = np.ascontiguousarray(x, dtype="<f8")
    fh.write(f"{CHECKPOINT_MAGIC} rows={x.shape[0]} d={x.shape[1]}\n".encode("utf-8"))
    fh.write(x.tobytes(order="C"))


def read_block(fh) -> np.ndarray:
    header = fh.readline()
    if not header:
        raise CheckpointError("missing block header")
    match = _HEADER_RE.match(header.decode("utf-8", errors="replace").rstrip("\n"))
    if match is None:
        raise CheckpointError(f"bad header {header[:60]!r}")
    rows, d = int(match.group(1)), int(match.group(2))
    nbytes = rows * d * 8
    buf = fh.read(nbytes)
    if len(buf) != nbytes:
        raise CheckpointError(f"expected {nbytes} payload bytes, got {len(buf)}")
    return np.frombuffer(buf, dtype="<f8").reshape(rows, d).astype(np.float64)


def save_checkpoint(path: str | Path, *blocks: np.ndarray) -> None:
    with open(path, "wb") as fh:
        for block in blocks:
            write_block(fh, block)


def load_checkpoint(path: str | Path, n_blocks: int = 1) -> list[np.ndarray]:
    with open(path, "rb") as fh:
        blocks = [read_block(fh) for _ in range(n_blocks)]
        if fh.read(1):
            raise CheckpointError(f"{path}: trailing bytes after {n_blocks} block(s)")
    return blocks
