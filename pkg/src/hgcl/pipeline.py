"""Stage orchestration: pretrain -> reduce -> cluster -> finetune -> evaluate, plus sweeps.

Every stage reads its inputs from and writes its artifacts to one run
directory and records a fingerprint of (stage config, input digests) in
``manifest.json``; a stage whose fingerprint and outputs are unchanged is
skipped unless forced.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import itertools
import json
import logging
import shutil
import time
from dataclasses import asdict, replace
from functools import cached_property
from pathlib import Path

import numpy as np

from hgcl.config import PipelineConfig, TrainConfig, config_text
from hgcl.embedding import load_checkpoint, save_checkpoint
from hgcl.evaluate import EvalReport, evaluate, strength_stats
from hgcl.finetune import HgclModel, finetune, init_finetune
from hgcl.graph import BipartiteGraph, build_graph, load_interactions, normalize_adjacency, split_edges
from hgcl.hierarchy import build_user_cluster_graph
from hgcl.polar import ClusterAssignment, polar_partition
from hgcl.pretrain import inference_embeddings, pretrain
from hgcl.seeding import derive_rng
from hgcl.tsne import tsne_embed

log = logging.getLogger(__name__)

STAGES = ("pretrain", "reduce", "cluster", "finetune", "evaluate")

PRETRAINED = "pretrained.emb"
COORDS = "item_coords.csv"
CLUSTERS = "clusters.csv"
FINETUNED = "finetuned.emb"
EVAL_REPORT = "eval_report.csv"
STRENGTH_HIST = "strength_hist.csv"
MANIFEST = "manifest.json"

# stage -> (required upstream artifacts, producing stage)
REQUIRES = {
    "pretrain": [],
    "reduce": [(PRETRAINED, "pretrain")],
    "cluster": [(COORDS, "reduce")],
    "finetune": [(PRETRAINED, "pretrain"), (CLUSTERS, "cluster")],
    "evaluate": [(PRETRAINED, "pretrain"), (CLUSTERS, "cluster"), (FINETUNED, "finetune")],
}


class StageDependencyError(RuntimeError):
    pass


def file_digest(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def fmt(x: float) -> str:
    """Shortest round-tripping float text."""
    return repr(float(x))


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def read_csv(path: Path) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def finetune_config(cfg: PipelineConfig) -> TrainConfig:
    return replace(
        cfg.train,
        epochs=cfg.finetune_epochs or cfg.train.epochs,
        lr=cfg.finetune_lr or cfg.train.lr,
    )


class Run:
    """One run directory bound to a config; loads data and artifacts lazily."""

    def __init__(self, cfg: PipelineConfig, out: str | Path | None = None):
        self.cfg = cfg
        self.out = Path(out if out is not None else cfg.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.manifest = self._load_manifest()

    # data -----------------------------------------------------------------

    @cached_property
    def datasets(self):
        if not self.cfg.train_path:
            raise StageDependencyError("train_path is not set in the config")
        train = load_interactions(self.cfg.train_path, "train")
        test = load_interactions(self.cfg.test_path, "test", train) if self.cfg.test_path else None
        return train, test

    @cached_property
    def train_graph(self) -> BipartiteGraph:
        return build_graph(self.datasets[0])

    @cached_property
    def test_graph(self) -> BipartiteGraph | None:
        test = self.datasets[1]
        if test is None or not test.records:
            return None
        return build_graph(test)

    @cached_property
    def fit_val(self) -> tuple[BipartiteGraph, BipartiteGraph | None]:
        """Training graph minus the held-out validation edges, and those edges."""
        g = self.train_graph
        if self.cfg.train.val_fraction <= 0:
            return g, None
        fit, val = split_edges(g, self.cfg.train.val_fraction, derive_rng(self.cfg.seed, "split"))
        return fit, (val if val.edge_count else None)

    @property
    def m(self) -> int:
        return self.train_graph.m

    @cached_property
    def adj(self):
        return normalize_adjacency(self.fit_val[0])

    def path(self, name: str) -> Path:
        return self.out / name

    # manifest -------------------------------------------------------------

    def _load_manifest(self) -> dict:
        p = self.out / MANIFEST
        if p.exists():
            return json.loads(p.read_text(encoding="utf-8"))
        return {"stages": {}}

    def save_manifest(self) -> None:
        self.manifest["config"] = self.cfg.snapshot()
        (self.out / MANIFEST).write_text(json.dumps(self.manifest, indent=2, sort_keys=True), encoding="utf-8")
        (self.out / "config.resolved").write_text(config_text(self.cfg), encoding="utf-8")

    def stage_fingerprint(self, stage: str) -> str:
        cfg = self.cfg
        parts: dict = {"stage": stage, "seed": cfg.seed}
        if stage in ("pretrain", "finetune", "evaluate"):
            parts["data"] = [file_digest(Path(p)) if p else "" for p in (cfg.train_path, cfg.test_path)]
        if stage == "pretrain":
            parts["train"] = asdict(cfg.train)
        elif stage == "reduce":
            parts["tsne"] = asdict(cfg.tsne)
            parts["K"] = cfg.train.K
        elif stage == "cluster":
            parts["cluster"] = asdict(cfg.cluster)
        elif stage == "finetune":
            parts["train"] = asdict(finetune_config(cfg))
            parts["rho_theta"] = [cfg.cluster.rho, cfg.cluster.theta]
        elif stage == "evaluate":
            parts["topk"] = cfg.train.topk
            parts["K"] = cfg.train.K
            parts["neg_per_user"] = cfg.neg_per_user
            parts["rho_theta"] = [cfg.cluster.rho, cfg.cluster.theta]
        for name, _ in REQUIRES[stage]:
            parts[name] = file_digest(self.path(name))
        blob = json.dumps(parts, sort_keys=True, default=str).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()

    def is_current(self, stage: str, fingerprint: str) -> bool:
        entry = self.manifest["stages"].get(stage)
        if not entry or entry.get("fingerprint") != fingerprint:
            return False
        for name, digest in entry.get("outputs", {}).items():
            p = self.path(name)
            if not p.exists() or file_digest(p) != digest:
                return False
        return True

    def record(self, stage: str, fingerprint: str, outputs: list[str], started: float, **extra) -> None:
        self.manifest["stages"][stage] = {
            "fingerprint": fingerprint,
            "outputs": {name: file_digest(self.path(name)) for name in outputs},
            "started": started,
            "finished": time.time(),
            **extra,
        }
        self.save_manifest()

    # artifacts ------------------------------------------------------------

    def pretrained(self) -> tuple[np.ndarray, np.ndarray]:
        """(layer-0, pooled) pre-trained matrices."""
        (e0,) = load_checkpoint(self.path(PRETRAINED))
        if e0.shape[0] != self.adj.size:
            raise StageDependencyError(f"{PRETRAINED} has {e0.shape[0]} rows, data has {self.adj.size} nodes")
        return e0, inference_embeddings(self.adj, e0, self.cfg.train.K)

    def assignment(self) -> ClusterAssignment:
        rows = read_csv(self.path(CLUSTERS))
        assign = np.empty(len(rows), dtype=np.int64)
        for r in rows:
            assign[int(r["item_id"])] = int(r["cluster_id"])
        info = self.manifest["stages"].get("cluster", {})
        c = self.cfg.cluster
        if assign.size and assign.max() >= c.rho * c.theta:
            raise StageDependencyError(f"{CLUSTERS} uses more clusters than rho * theta; rerun `cluster`")
        return ClusterAssignment(
            c.rho, c.theta,
            np.asarray(info.get("center", [0.0, 0.0])),
            np.asarray(info.get("radial_boundaries", [])),
            assign,
        )

    def finetuned(self) -> HgclModel:
        e_user, e_item, e_cluster = load_checkpoint(self.path(FINETUNED), n_blocks=3)
        a = self.assignment()
        h = build_user_cluster_graph(self.fit_val[0], a)
        model = HgclModel(e_user, e_item, e_cluster, a, self.cfg.train.K)
        return model.refresh(self.adj, h.adj)

    def metrics_hook(self, scorer_of):
        """Epoch hook computing test (learning-curve) and validation metrics."""
        k = self.cfg.train.topk
        fit, val = self.fit_val
        test = self.test_graph

        def hook(epoch, state):
            scorer = scorer_of(state)
            row = {}
            if test is not None:
                rep = evaluate(scorer, self.train_graph, test, k)
                row["recall"], row["ndcg"] = rep.recall, rep.ndcg
            if val is not None:
                row["val_recall"] = evaluate(scorer, fit, val, k).recall
            return row

        return hook


# stages -------------------------------------------------------------------


def stage_pretrain(run: Run) -> list[str]:
    cfg = run.cfg
    fit, _ = run.fit_val
    m = run.m

    def scorer_of(e0):
        pooled = inference_embeddings(run.adj, e0, cfg.train.K)
        return lambda users: pooled[users] @ pooled[m:].T

    result = pretrain(fit, replace(cfg.train, seed=cfg.seed), run.metrics_hook(scorer_of))
    save_checkpoint(run.path(PRETRAINED), result.e0)
    k = cfg.train.topk
    write_csv(
        run.path("pretrain_metrics.csv"),
        ["epoch", "L_rec", "L_cl", "L2", f"Recall@{k}", f"NDCG@{k}", f"val_Recall@{k}"],
        ([h["epoch"], h["rec"], h["cl"], h["l2"], h.get("recall", ""), h.get("ndcg", ""), h.get("val_recall", "")]
         for h in result.history),
    )
    run.manifest.setdefault("extra", {})["pretrain_best_epoch"] = result.best_epoch
    return [PRETRAINED, "pretrain_metrics.csv"]


def _nearest_rows(x: np.ndarray, ref: np.ndarray, chunk: int = 4096) -> np.ndarray:
    out = np.empty(len(x), dtype=np.int64)
    ref_sq = np.sum(ref * ref, axis=1)
    for s in range(0, len(x), chunk):
        block = x[s:s + chunk]
        d = ref_sq[None, :] - 2.0 * block @ ref.T
        out[s:s + chunk] = np.argmin(d, axis=1)
    return out


def stage_reduce(run: Run) -> list[str]:
    cfg = run.cfg
    _, pooled = run.pretrained()
    items = pooled[run.m:]
    n = len(items)
    tcfg = replace(cfg.tsne, seed=cfg.seed)
    if tcfg.max_items and n > tcfg.max_items:
        rng = derive_rng(cfg.seed, "reduce/subsample")
        subset = np.sort(rng.choice(n, size=tcfg.max_items, replace=False))
        proj = tsne_embed(items[subset], tcfg, label="reduce/tsne")
        coords = proj.coords[_nearest_rows(items, items[subset])]
        coords[subset] = proj.coords
    else:
        proj = tsne_embed(items, tcfg, label="reduce/tsne")
        coords = proj.coords
    write_csv(run.path(COORDS), ["item_id", "x", "y"], ((j, coords[j, 0], coords[j, 1]) for j in range(n)))
    run.manifest.setdefault("extra", {})["tsne_final_kl"] = proj.final_kl
    return [COORDS]


def read_coords(path: Path) -> np.ndarray:
    rows = read_csv(path)
    coords = np.empty((len(rows), 2))
    for r in rows:
        coords[int(r["item_id"])] = (float(r["x"]), float(r["y"]))
    return coords


def stage_cluster(run: Run) -> tuple[list[str], dict]:
    c = run.cfg.cluster
    a = polar_partition(read_coords(run.path(COORDS)), c.rho, c.theta, c.radial_mode)
    write_csv(run.path(CLUSTERS), ["item_id", "cluster_id"], enumerate(a.assign.tolist()))
    extra = {
        "center": a.center.tolist(),
        "radial_boundaries": a.radial_boundaries.tolist(),
        "sizes": a.sizes.tolist(),
    }
    return [CLUSTERS], extra


def stage_finetune(run: Run) -> list[str]:
    cfg = run.cfg
    fit, _ = run.fit_val
    e0, pooled = run.pretrained()
    a = run.assignment()
    h = build_user_cluster_graph(fit, a)
    model = init_finetune(e0, pooled, run.m, a, cfg.train.K, derive_rng(cfg.seed, "finetune/init"))
    fcfg = replace(finetune_config(cfg), seed=cfg.seed)
    result = finetune(fit, h, model, fcfg, run.metrics_hook(lambda mdl: mdl.scores))
    final = result.model
    save_checkpoint(run.path(FINETUNED), final.e_user, final.e_item, final.e_cluster)
    k = cfg.train.topk
    write_csv(
        run.path("finetune_metrics.csv"),
        ["epoch", "L_rec_ui", "L_rec_uc", "L_cl", "L2", f"Recall@{k}", f"NDCG@{k}", f"val_Recall@{k}"],
        ([h["epoch"], h["rec_ui"], h["rec_uc"], h["cl"], h["l2"], h.get("recall", ""), h.get("ndcg", ""),
          h.get("val_recall", "")] for h in result.history),
    )
    run.manifest.setdefault("extra", {})["finetune_best_epoch"] = result.best_epoch
    return [FINETUNED, "finetune_metrics.csv"]


def stage_evaluate(run: Run) -> list[str]:
    cfg = run.cfg
    k = cfg.train.topk
    test = run.test_graph
    if test is None:
        raise StageDependencyError("evaluate needs test_path with at least one usable interaction")
    m = run.m
    _, pooled = run.pretrained()
    model = run.finetuned()
    items_ft = model.item_vectors()

    models = {
        "pretrained": (
            lambda users: pooled[users] @ pooled[m:].T,
            lambda u, i: np.einsum("ij,ij->i", pooled[u], pooled[m + i]),
        ),
        "finetuned": (
            model.scores,
            lambda u, i: np.einsum("ij,ij->i", model.pooled_user[u], items_ft[i]),
        ),
    }
    reports: dict[str, EvalReport] = {}
    stats = {}
    for name, (scorer, pair_scorer) in models.items():
        reports[name] = evaluate(scorer, run.train_graph, test, k)
        stats[name] = strength_stats(pair_scorer, run.train_graph, test, derive_rng(cfg.seed, "evaluate/negatives"),
                                     cfg.neg_per_user)
    # recompute on one shared set of bin edges so the histograms are comparable
    lo = min(st.bin_edges[0] for st in stats.values())
    hi = max(st.bin_edges[-1] for st in stats.values())
    edges = np.linspace(lo, hi, 51)
    for name, (_, pair_scorer) in models.items():
        stats[name] = strength_stats(pair_scorer, run.train_graph, test, derive_rng(cfg.seed, "evaluate/negatives"),
                                     cfg.neg_per_user, bin_edges=edges)

    groups = ["train_pos", "train_neg", "test_pos", "test_neg"]
    write_csv(
        run.path(EVAL_REPORT),
        ["model", "k", f"Recall@{k}", f"NDCG@{k}", "users"] + [f"{g}_mean" for g in groups],
        ([name, k, rep.recall, rep.ndcg, rep.n_users] + [stats[name].means[g] for g in groups]
         for name, rep in reports.items()),
    )
    write_csv(
        run.path(STRENGTH_HIST),
        ["model", "group", "bin_left", "bin_right", "count"],
        ((name, g, edges[b], edges[b + 1], int(st.counts[g][b]))
         for name, st in stats.items() for g in groups for b in range(len(edges) - 1)),
    )
    return [EVAL_REPORT, STRENGTH_HIST]


_RUNNERS = {
    "pretrain": stage_pretrain,
    "reduce": stage_reduce,
    "cluster": stage_cluster,
    "finetune": stage_finetune,
    "evaluate": stage_evaluate,
}


def run_stage(run: Run, stage: str, force: bool = False) -> bool:
    """Run one stage; returns False when it was skipped as up to date."""
    for name, producer in REQUIRES[stage]:
        if not run.path(name).exists():
            raise StageDependencyError(f"stage {stage!r} needs {name}; run `hgcl {producer}` first")
    fingerprint = run.stage_fingerprint(stage)
    if not force and run.is_current(stage, fingerprint):
        log.info("%s: up to date, skipping", stage)
        return False
    started = time.time()
    log.info("%s: running", stage)
    out = _RUNNERS[stage](run)
    extra = {}
    if isinstance(out, tuple):
        out, extra = out
    run.record(stage, fingerprint, out, started, **extra)
    return True


def run_pipeline(cfg: PipelineConfig, stages=STAGES, force: bool = False, out: str | Path | None = None) -> int:
    """Run ``stages`` in pipeline order; returns 0 on success."""
    unknown = set(stages) - set(STAGES)
    if unknown:
        raise ValueError(f"unknown stages {sorted(unknown)}")
    run = Run(cfg, out)
    for stage in STAGES:
        if stage in stages:
            run_stage(run, stage, force)
    return 0


def sweep(cfg: PipelineConfig, force: bool = False, out: str | Path | None = None) -> list[dict]:
    """Grid over rho x theta x perplexity sharing one pre-trained checkpoint.

    Each cell runs reduce -> evaluate in ``<out>/sweep/<cell>``; the table
    is written to ``<out>/sweep.csv``.
    """
    root = Path(out if out is not None else cfg.out)
    base = Run(cfg, root)
    run_stage(base, "pretrain", force)
    rhos = cfg.sweep_rho or [cfg.cluster.rho]
    thetas = cfg.sweep_theta or [cfg.cluster.theta]
    perps = cfg.sweep_perplexity or [cfg.tsne.perplexity]
    k = cfg.train.topk
    rows = []
    for rho, theta, perp in itertools.product(rhos, thetas, perps):
        cell_cfg = copy.deepcopy(cfg)
        cell_cfg.cluster.rho, cell_cfg.cluster.theta, cell_cfg.tsne.perplexity = rho, theta, perp
        cell_cfg.validate()
        cell_dir = root / "sweep" / f"rho{rho}_theta{theta}_perplexity{perp:g}"
        cell_dir.mkdir(parents=True, exist_ok=True)
        if not (cell_dir / PRETRAINED).exists() or file_digest(cell_dir / PRETRAINED) != file_digest(root / PRETRAINED):
            shutil.copyfile(root / PRETRAINED, cell_dir / PRETRAINED)
        run_pipeline(cell_cfg, STAGES[1:], force, cell_dir)
        rep = read_csv(cell_dir / EVAL_REPORT)
        ft = next(r for r in rep if r["model"] == "finetuned")
        rows.append({"rho": rho, "theta": theta, "perplexity": perp,
                     f"Recall@{k}": float(ft[f"Recall@{k}"]), f"NDCG@{k}": float(ft[f"NDCG@{k}"])})
    write_csv(root / "sweep.csv", ["rho", "theta", "perplexity", f"Recall@{k}", f"NDCG@{k}"],
              ([r["rho"], r["theta"], float(r["perplexity"]), r[f"Recall@{k}"], r[f"NDCG@{k}"]] for r in rows))
    return rows
