import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hgcl.graph import (
    InteractionFormatError,
    SamplingError,
    build_graph,
    graph_from_edges,
    load_interactions,
    normalize_adjacency,
    sample_bpr_triples,
    sample_negatives,
    split_edges,
)
from oracles import dense_norm_adjacency, random_graph


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


# --- loading ---------------------------------------------------------------

def test_load_dedups_and_assigns_ids_by_first_appearance(tmp_path):
    ds = load_interactions(write(tmp_path, "t.txt", "# header\nu1 a\nu2 b\nu1 a\n\nu1 c 3.0\n"))
    assert ds.user_index == {"u1": 0, "u2": 1}
    assert ds.item_index == {"a": 0, "b": 1, "c": 2}
    assert ds.pairs().tolist() == [[0, 0], [1, 1], [0, 2]]


def test_load_three_records(tmp_path):
    ds = load_interactions(write(tmp_path, "t.txt", "u1 i1\nu1 i2\nu2 i2\n"))
    assert (ds.m, ds.n, len(ds.records)) == (2, 2, 3)
    g = build_graph(ds)
    assert g.items_of(0).tolist() == [0, 1] and g.items_of(1).tolist() == [1]
    assert g.users_of(1).tolist() == [0, 1]
    assert len(load_interactions(write(tmp_path, "d.txt", "u1 i1\nu1 i1\n")).records) == 1


def test_load_reports_line_number_of_bad_line(tmp_path):
    with pytest.raises(InteractionFormatError, match=":3:"):
        load_interactions(write(tmp_path, "t.txt", "u1 a\nu2 b\nlonely\n"))


def test_load_rejects_empty_file(tmp_path):
    with pytest.raises(InteractionFormatError, match="no interactions"):
        load_interactions(write(tmp_path, "t.txt", "# only a comment\n"))


def test_test_split_reuses_train_ids_and_drops_unseen(tmp_path):
    train = load_interactions(write(tmp_path, "a.txt", "u1 a\nu2 b\n"))
    test = load_interactions(write(tmp_path, "b.txt", "u2 a\nu3 a\nu1 z\n"), "test", train)
    assert test.pairs().tolist() == [[1, 0]]
    assert test.dropped == 2
    assert test.m == 2 and test.n == 2


def test_test_split_needs_train(tmp_path):
    with pytest.raises(ValueError):
        load_interactions(write(tmp_path, "a.txt", "u1 a\n"), "test")


# --- graph -----------------------------------------------------------------

def test_build_graph_rows(tmp_path):
    g = build_graph(load_interactions(write(tmp_path, "t.txt", "u0 i0\nu0 i2\nu1 i1\nu1 i2\n")))
    assert g.items_of(0).tolist() == [0, 1]  # i0 -> 0, i2 -> 1
    assert g.items_of(1).tolist() == [1, 2]
    assert g.users_of(1).tolist() == [0, 1]
    assert g.edge_count == 4


def test_duplicate_edges_collapse_to_binary():
    g = graph_from_edges([0, 0, 1], [1, 1, 0], 2, 2)
    assert g.edge_count == 2
    assert set(g.user_to_items.data) == {1.0}


@given(st.integers(1, 9), st.integers(1, 9), st.integers(0, 2**31))
def test_transpose_holds_the_same_edges(m, n, seed):
    g, mask = random_graph(np.random.default_rng(seed), m, n, 0.4, no_isolated=False)
    assert np.array_equal(g.user_to_items.toarray() > 0, mask)
    assert np.array_equal(g.item_to_users.toarray() > 0, mask.T)
    for u, i in g.edges():
        assert g.has_edge(u, i)
        assert u in g.users_of(i)


def test_double_transpose_is_identity():
    g, mask = random_graph(np.random.default_rng(50), 50, 50, 0.1, no_isolated=False)
    back = g.item_to_users.T.tocsr()
    assert np.array_equal(back.toarray() > 0, mask)


def test_out_of_range_edge_rejected():
    with pytest.raises(ValueError):
        graph_from_edges([0, 2], [0, 0], 2, 1)


# --- normalization -----------------------------------------------------------

def test_normalization_weights_by_hand():
    # u0-i0 only: weight 1. u1 has degree 2, i1 has degree 1: weight 1/sqrt(2).
    g = graph_from_edges([0, 1, 1], [0, 1, 2], 2, 3)
    adj = normalize_adjacency(g)
    assert adj.weight(0, 0) == 1.0
    assert math.isclose(adj.weight(1, 1), 1 / math.sqrt(2), rel_tol=0, abs_tol=1e-15)
    assert adj.weight(0, 1) == 0.0


@given(st.integers(1, 12), st.integers(1, 12), st.floats(0.1, 0.9), st.integers(0, 2**31))
def test_normalized_operator_matches_dense_definition(m, n, p, seed):
    g, mask = random_graph(np.random.default_rng(seed), m, n, p)
    adj = normalize_adjacency(g)
    dense = adj.dense()
    assert np.max(np.abs(dense - dense_norm_adjacency(mask))) < 1e-12
    assert np.array_equal(dense, dense.T)
    x = np.random.default_rng(seed).normal(size=(m + n, 3))
    assert np.max(np.abs(adj.matmul(x) - dense @ x)) < 1e-12


def test_isolated_nodes_are_carried_forward():
    g = graph_from_edges([0], [0], 2, 2)  # user 1 and item 1 isolated
    adj = normalize_adjacency(g)
    assert adj.isolated.tolist() == [1, 3]
    x = np.arange(8.0).reshape(4, 2)
    out = adj.matmul(x)
    assert np.array_equal(out[[1, 3]], x[[1, 3]])
    assert np.array_equal(out, adj.dense(carry_isolated=True) @ x)


# --- sampling --------------------------------------------------------------

def test_single_edge_graph_samples_fixed_triple():
    g = graph_from_edges([0], [0], 1, 2)
    t = sample_bpr_triples(g, 5, np.random.default_rng(0))
    assert t.tolist() == [[0, 0, 1]] * 5


def test_sampler_postconditions_and_edge_frequencies():
    rng = np.random.default_rng(3)
    g, mask = random_graph(rng, 5, 5, 0.4)
    draws = 10000
    t = sample_bpr_triples(g, draws, rng)
    assert all(mask[u, p] and not mask[u, q] for u, p, q in t)
    # each edge is hit with probability 1/|E|; check counts within 3 sigma
    counts = {}
    for u, p, _ in t:
        counts[(u, p)] = counts.get((u, p), 0) + 1
    e = g.edge_count
    mean, sd = draws / e, math.sqrt(draws * (1 / e) * (1 - 1 / e))
    assert len(counts) == e
    assert all(abs(c - mean) < 3 * sd for c in counts.values())


def test_negatives_uniform_over_non_positives():
    g = graph_from_edges([0, 0], [0, 1], 1, 5)
    negs = sample_negatives(g, np.zeros(30000, dtype=np.int64), np.random.default_rng(1))
    freq = np.bincount(negs, minlength=5) / len(negs)
    assert freq[0] == freq[1] == 0
    assert np.all(np.abs(freq[2:] - 1 / 3) < 0.02)


def test_sampler_is_deterministic_under_seed():
    g, _ = random_graph(np.random.default_rng(0), 6, 6)
    a = sample_bpr_triples(g, 50, np.random.default_rng(9))
    b = sample_bpr_triples(g, 50, np.random.default_rng(9))
    assert np.array_equal(a, b)


def test_saturated_user_raises():
    g = graph_from_edges([0, 0], [0, 1], 1, 2)
    with pytest.raises(SamplingError, match="every one of the 2 items"):
        sample_bpr_triples(g, 1, np.random.default_rng(0))


def test_skip_saturated_draws_only_open_users():
    g = graph_from_edges([0, 0, 1], [0, 1, 0], 2, 2)
    t = sample_bpr_triples(g, 100, np.random.default_rng(0), skip_saturated=True)
    assert set(t[:, 0]) == {1}
    full = graph_from_edges([0, 0], [0, 1], 1, 2)
    with pytest.raises(SamplingError):
        sample_bpr_triples(full, 1, np.random.default_rng(0), skip_saturated=True)


def test_split_edges_partitions_edge_set():
    g, _ = random_graph(np.random.default_rng(2), 10, 10, 0.4)
    kept, held = split_edges(g, 0.2, np.random.default_rng(0))
    a = {tuple(e) for e in kept.edges()}
    b = {tuple(e) for e in held.edges()}
    assert not a & b
    assert a | b == {tuple(e) for e in g.edges()}
    assert len(b) == round(0.2 * g.edge_count)
