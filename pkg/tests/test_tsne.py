import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.metrics import silhouette_score

from hgcl.config import TsneConfig
from hgcl.tsne import (
    TsneError,
    calibrate_sigmas,
    conditional_probabilities,
    joint_probabilities,
    kl_divergence,
    kl_gradient,
    squared_distances,
    student_affinities,
    tsne_embed,
)
from oracles import central_diff, rel_error


def perplexity_of(p):
    p = p[p > 0]
    return math.exp(-np.sum(p * np.log(p)))


def test_equidistant_neighbors_give_uniform_row():
    sigma, p = calibrate_sigmas(np.ones(5), 5.0)
    assert np.allclose(p, 0.2)
    with pytest.raises(TsneError):
        calibrate_sigmas(np.ones(5), 3.0)


@given(st.integers(0, 2**31), st.floats(2.0, 15.0))
def test_calibrated_rows_hit_target_perplexity(seed, perp):
    d = np.random.default_rng(seed).exponential(size=20)
    _, p = calibrate_sigmas(d, perp)
    assert abs(perplexity_of(p) - perp) < 1e-3
    assert math.isclose(p.sum(), 1.0, rel_tol=1e-12)


def test_sigma_grows_with_perplexity():
    d = np.random.default_rng(0).exponential(size=30)
    sigmas = [calibrate_sigmas(d, k)[0] for k in (3, 6, 12, 24)]
    assert sigmas == sorted(sigmas)


def test_nearer_points_on_a_line_get_more_mass():
    x = np.array([[0.0], [1.0], [2.5], [4.5], [7.0]])
    cond = conditional_probabilities(x, 2.0)
    for i in range(5):
        others = [j for j in range(5) if j != i]
        by_distance = sorted(others, key=lambda j: abs(x[j, 0] - x[i, 0]))
        probs = [cond[i, j] for j in by_distance]
        assert all(a > b for a, b in zip(probs, probs[1:]))


def test_unreachable_perplexity_rejected():
    with pytest.raises(TsneError):
        calibrate_sigmas(np.arange(1.0, 5.0), 10.0)


def test_joint_probabilities_symmetric_and_normalized():
    x = np.random.default_rng(1).normal(size=(25, 5))
    p = joint_probabilities(x, TsneConfig(perplexity=5))
    assert np.allclose(p, p.T, atol=0)
    assert math.isclose(p.sum(), 1.0, rel_tol=1e-12)
    assert np.all(np.diag(p) == 0)
    cond = conditional_probabilities(x, 5)
    assert all(abs(perplexity_of(row) - 5) < 1e-3 for row in cond)


def test_student_input_kernel():
    x = np.array([[0.0], [1.0], [3.0]])
    p = joint_probabilities(x, TsneConfig(input_kernel="student"))
    w = np.array([[0, 1 / 2, 1 / 10], [1 / 2, 0, 1 / 5], [1 / 10, 1 / 5, 0]])
    assert np.allclose(p, w / w.sum(), atol=1e-15)


def test_distances_translation_invariant():
    x = np.random.default_rng(2).normal(size=(10, 4))
    assert np.allclose(squared_distances(x), squared_distances(x + 1e3), atol=1e-8)


def test_kl_examples():
    p = np.array([[0, 0.5], [0.5, 0]])
    assert kl_divergence(p, p) == 0.0
    q = np.array([[0, 0.25], [0.75, 0]])
    assert math.isclose(kl_divergence(p, q), 0.5 * math.log(2) + 0.5 * math.log(2 / 3), rel_tol=1e-14)
    with pytest.raises(ValueError):
        kl_divergence(p, np.array([[0, 0.0], [1.0, 0]]))


@given(st.integers(0, 2**31))
def test_kl_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    p = joint_probabilities(rng.normal(size=(7, 3)), TsneConfig(perplexity=3))
    y = rng.normal(size=(7, 2))
    num = central_diff(lambda z: kl_divergence(p, student_affinities(z)[0]), y)
    assert rel_error(kl_gradient(p, y), num) < 1e-6


def blobs(seed):
    rng = np.random.default_rng(seed)
    x = np.concatenate([rng.normal(0, 1, (8, 16)), rng.normal(10, 1, (8, 16))])
    return x, np.repeat([0, 1], 8)


def test_separated_blobs_stay_separated():
    x, labels = blobs(0)
    proj = tsne_embed(x, TsneConfig(perplexity=5, iters=500, seed=0))
    assert silhouette_score(proj.coords, labels) > 0.8
    assert proj.final_kl < proj.initial_kl
    assert np.allclose(proj.coords.mean(axis=0), 0, atol=1e-9)


def test_tsne_deterministic():
    x, _ = blobs(1)
    cfg = TsneConfig(perplexity=5, iters=100, seed=3)
    assert np.array_equal(tsne_embed(x, cfg).coords, tsne_embed(x, cfg).coords)


def test_degenerate_inputs_rejected():
    with pytest.raises(TsneError, match="identical"):
        tsne_embed(np.ones((6, 3)), TsneConfig(perplexity=2))
    with pytest.raises(TsneError, match="at least 4"):
        tsne_embed(np.eye(3), TsneConfig(perplexity=2))
    with pytest.raises(TsneError, match="must be < n"):
        tsne_embed(np.eye(5), TsneConfig(perplexity=5))
