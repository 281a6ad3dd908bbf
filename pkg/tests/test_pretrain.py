import numpy as np
import pytest

from hgcl.config import PRESETS, TrainConfig
from hgcl.embedding import NoiseSpec, propagate
from hgcl.graph import graph_from_edges, normalize_adjacency, sample_bpr_triples
from hgcl.pretrain import TrainingDiverged, epoch_schedule, hybrid_loss, inference_embeddings, pretrain
from oracles import central_diff, random_graph, rel_error


def two_group_graph(rng, size=30, p_in=0.4, p_out=0.02):
    """Users and items split in halves; dense within a half, sparse across."""
    half = np.arange(size) < size // 2
    same = half[:, None] == half[None, :]
    mask = rng.random((size, size)) < np.where(same, p_in, p_out)
    np.fill_diagonal(mask, True)
    u, i = np.nonzero(mask)
    return graph_from_edges(u, i, size, size)


def test_epoch_schedule_keeps_partial_batch():
    batches = epoch_schedule(3, 2, np.random.default_rng(0))
    assert [len(b) for b in batches] == [2, 1]
    assert sorted(np.concatenate(batches)) == [0, 1, 2]
    assert len(epoch_schedule(9, 2, np.random.default_rng(0))) == 5


def test_yelp_preset_values_accepted():
    p = PRESETS["yelp2018"]
    cfg = TrainConfig(K=p["K"], K_star=p["K_star"], lam=p["lam"], epsilon=p["epsilon"], tau=p["tau"])
    cfg.validate()
    assert (cfg.K, cfg.K_star, cfg.lam, cfg.epsilon, cfg.tau) == (3, 1, 0.2, 0.2, 0.15)


def test_hybrid_loss_decomposes():
    rng = np.random.default_rng(0)
    g, _ = random_graph(rng, 6, 7)
    adj = normalize_adjacency(g)
    cfg = TrainConfig(d=4, K=2, K_star=1, lam=0.3, epsilon=0.1, tau=0.2, l2_coeff=0.01)
    e0 = rng.normal(size=(13, 4))
    t = sample_bpr_triples(g, 6, rng)
    parts, _, state = hybrid_loss(adj, e0, t, cfg, np.random.default_rng(1))
    assert parts["total"] == parts["rec"] + 0.3 * parts["cl"] + parts["l2"]
    assert len(state.noise) == 2
    parts0, _, state0 = hybrid_loss(adj, e0, t, TrainConfig(d=4, K=2, lam=0.0, epsilon=0.0, l2_coeff=0.0))
    assert parts0["cl"] == 0.0 and parts0["l2"] == 0.0 and state0.noise == []


@pytest.mark.parametrize("seed", range(4))
def test_hybrid_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    g, _ = random_graph(rng, 5, 6)
    adj = normalize_adjacency(g)
    cfg = TrainConfig(d=3, K=2, K_star=1, lam=0.5, epsilon=0.1, tau=0.3, l2_coeff=0.01)
    e0 = rng.normal(size=(11, 3))
    t = sample_bpr_triples(g, 5, rng)
    noise = propagate(adj, e0, 2, NoiseSpec(0.1), rng).noise
    _, grad, _ = hybrid_loss(adj, e0, t, cfg, fixed_noise=noise)
    num = central_diff(lambda x: hybrid_loss(adj, x, t, cfg, fixed_noise=noise)[0]["total"], e0)
    assert rel_error(grad, num) < 1e-6


def test_training_decreases_loss_and_separates_groups():
    g = two_group_graph(np.random.default_rng(0))
    cfg = TrainConfig(d=8, K=2, K_star=1, lam=0.0, epsilon=0.0, lr=0.01, batch_size=64, epochs=200, seed=0)
    res = pretrain(g, cfg)
    first = np.mean([s.rec for s in res.steps[:10]])
    last = np.mean([s.rec for s in res.steps[-10:]])
    assert last < 0.5 * first
    pooled = inference_embeddings(normalize_adjacency(g), res.e0, cfg.K)
    scores = pooled[:30] @ pooled[30:].T
    same = (np.arange(30)[:, None] < 15) == (np.arange(30)[None, :] < 15)
    assert scores[same].mean() > scores[~same].mean()


def test_pretrain_deterministic_and_seed_sensitive():
    g = two_group_graph(np.random.default_rng(1), size=12)
    cfg = TrainConfig(d=4, K=2, K_star=1, lam=0.2, epsilon=0.1, tau=0.2, lr=0.01, batch_size=16, epochs=3, seed=5)
    a, b = pretrain(g, cfg), pretrain(g, cfg)
    assert np.array_equal(a.e0, b.e0)
    cfg.seed = 6
    assert not np.array_equal(a.e0, pretrain(g, cfg).e0)


def test_best_epoch_selection_and_patience():
    g = two_group_graph(np.random.default_rng(1), size=12)
    cfg = TrainConfig(d=4, K=2, lam=0.0, epsilon=0.0, lr=0.01, batch_size=16, epochs=10, patience=2, seed=0)
    scores = iter([0.1, 0.5, 0.4, 0.3, 0.9])
    res = pretrain(g, cfg, eval_hook=lambda ep, e0: {"val_recall": next(scores)})
    assert len(res.history) == 4
    assert res.best_epoch == 2


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_is_reported():
    g = two_group_graph(np.random.default_rng(1), size=12)
    cfg = TrainConfig(d=4, K=2, lam=0.0, epsilon=0.0, lr=0.01, batch_size=16, epochs=1)
    with pytest.raises(TrainingDiverged, match="epoch 1 step 1"):
        pretrain(g, cfg, e0=np.full((24, 4), np.nan))
