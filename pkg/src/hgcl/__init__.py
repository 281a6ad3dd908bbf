"""Hierarchical graph contrastive learning for top-K recommendation.

Pipeline: noise-perturbed cross-layer contrastive pre-training on the
user-item graph, t-SNE projection of item embeddings, polar-sector item
clustering, and joint fine-tuning on the user-item and user-cluster graphs.
"""

from hgcl.graph import (
    BipartiteGraph,
    InteractionDataset,
    NormalizedAdjacency,
    build_graph,
    load_interactions,
    normalize_adjacency,
    sample_bpr_triples,
)
from hgcl.embedding import EmbeddingState, NoiseSpec, propagate, pool_layers, xavier_init
from hgcl.config import TrainConfig, TsneConfig, ClusterConfig, PipelineConfig, parse_config

__version__ = "0.1.0"

__all__ = [
    "BipartiteGraph",
    "InteractionDataset",
    "NormalizedAdjacency",
    "build_graph",
    "load_interactions",
    "normalize_adjacency",
    "sample_bpr_triples",
    "EmbeddingState",
    "NoiseSpec",
    "propagate",
    "pool_layers",
    "xavier_init",
    "TrainConfig",
    "TsneConfig",
    "ClusterConfig",
    "PipelineConfig",
    "parse_config",
]
