"""User-cluster graph: user u links cluster c iff u interacted with some item of c."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from hgcl.graph import BipartiteGraph, NormalizedAdjacency, graph_from_edges, normalize_adjacency
from hgcl.polar import ClusterAssignment


@dataclass(frozen=True)
class HierarchyGraph:
    graph: BipartiteGraph  # users x clusters
    adj: NormalizedAdjacency

    @property
    def m(self) -> int:
        return self.graph.m

    @property
    def c(self) -> int:
        return self.graph.n

    @property
    def user_to_clusters(self):
        return self.graph.user_to_items

    @property
    def cluster_to_users(self):
        return self.graph.item_to_users


def build_user_cluster_graph(g: BipartiteGraph, a: ClusterAssignment) -> HierarchyGraph:
    if len(a.assign) != g.n:
        raise ValueError(f"assignment covers {len(a.assign)} items, graph has {g.n}")
    edges = g.edges()
    clusters = a.assign[edges[:, 1]]
    # graph_from_edges collapses repeated (user, cluster) pairs to one edge
    hg = graph_from_edges(edges[:, 0], clusters, g.m, a.n_clusters)
    return HierarchyGraph(hg, normalize_adjacency(hg))
