import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hgcl.graph import graph_from_edges
from hgcl.hierarchy import build_user_cluster_graph
from hgcl.polar import ClusterAssignment, polar_partition
from oracles import brute_user_clusters, random_graph


def assignment(assign, c):
    return ClusterAssignment(1, c, np.zeros(2), np.empty(0), np.asarray(assign, dtype=np.int64))


@given(st.integers(1, 30), st.integers(1, 30), st.integers(1, 8), st.integers(0, 2**31))
def test_edges_are_the_existential_image(m, n, c, seed):
    rng = np.random.default_rng(seed)
    g, mask = random_graph(rng, m, n, 0.3, no_isolated=False)
    a = assignment(rng.integers(c, size=n), c)
    h = build_user_cluster_graph(g, a)
    assert {tuple(e) for e in h.graph.edges()} == brute_user_clusters(mask, a.assign)
    assert h.c == c and h.m == m


def test_interaction_with_clustered_item_links_user_to_cluster():
    # u2 interacted with i2, and i2 sits in cluster c1
    g = graph_from_edges([0, 1, 2], [0, 1, 2], 3, 3)
    h = build_user_cluster_graph(g, assignment([0, 0, 1], 2))
    assert h.graph.has_edge(2, 1)
    assert not h.graph.has_edge(2, 0)


def test_identity_clustering_reproduces_graph():
    g, _ = random_graph(np.random.default_rng(0), 5, 6)
    h = build_user_cluster_graph(g, assignment(np.arange(6), 6))
    assert (h.user_to_clusters != g.user_to_items).nnz == 0


def test_user_cluster_degree_bounded_by_item_degree():
    rng = np.random.default_rng(1)
    g, _ = random_graph(rng, 10, 20)
    h = build_user_cluster_graph(g, polar_partition(rng.normal(size=(20, 2)), 2, 3))
    assert np.all(h.graph.user_degrees() <= g.user_degrees())
    assert np.all(h.graph.user_degrees() <= 6)
    assert np.all(h.graph.user_degrees() >= 1)


def test_rebuilding_is_idempotent():
    rng = np.random.default_rng(2)
    g, _ = random_graph(rng, 7, 9)
    a = assignment(rng.integers(3, size=9), 3)
    h1, h2 = build_user_cluster_graph(g, a), build_user_cluster_graph(g, a)
    assert (h1.graph.user_to_items != h2.graph.user_to_items).nnz == 0
    # clustering the cluster graph with the identity changes nothing
    h3 = build_user_cluster_graph(h1.graph, assignment(np.arange(3), 3))
    assert (h3.graph.user_to_items != h1.graph.user_to_items).nnz == 0


def test_normalized_weights_on_cluster_graph():
    g = graph_from_edges([0, 0, 1], [0, 1, 2], 2, 3)
    h = build_user_cluster_graph(g, assignment([0, 0, 1], 2))
    assert h.adj.weight(0, 0) == 1.0 and h.adj.weight(1, 1) == 1.0


def test_assignment_length_checked():
    g = graph_from_edges([0], [0], 1, 2)
    with pytest.raises(ValueError):
        build_user_cluster_graph(g, assignment([0], 1))
