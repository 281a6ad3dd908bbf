"""Run configuration: dataclasses plus a line-based ``key = value`` parser."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    d: int = 64
    K: int = 3
    K_star: int = 1
    lam: float = 0.2
    epsilon: float = 0.2
    tau: float = 0.15
    lr: float = 1e-4
    batch_size: int = 2048
    epochs: int = 50
    l2_coeff: float = 1e-4
    seed: int = 0
    val_fraction: float = 0.05
    select_best: bool = True
    patience: int = 0  # 0 disables early stopping
    topk: int = 20

    def validate(self) -> None:
        _check(self.d >= 1, "d", self.d, ">= 1")
        _check(self.K >= 1, "K", self.K, ">= 1")
        _check(0 <= self.K_star <= self.K, "K_star", self.K_star, "in [0, K]")
        _check(self.lam >= 0, "lambda", self.lam, ">= 0")
        _check(self.epsilon >= 0, "epsilon", self.epsilon, ">= 0")
        _check(self.tau > 0, "tau", self.tau, "> 0")
        _check(self.lr > 0, "lr", self.lr, "> 0")
        _check(self.batch_size >= 1, "batch_size", self.batch_size, ">= 1")
        _check(self.epochs >= 1, "epochs", self.epochs, ">= 1")
        _check(self.l2_coeff >= 0, "l2_coeff", self.l2_coeff, ">= 0")
        _check(0 <= self.val_fraction < 1, "val_fraction", self.val_fraction, "in [0, 1)")
        _check(self.patience >= 0, "patience", self.patience, ">= 0")
        _check(self.topk >= 1, "topk", self.topk, ">= 1")


@dataclass
class TsneConfig:
    perplexity: float = 30.0
    iters: int = 1000
    lr: float = 200.0
    early_exaggeration: float = 12.0
    exaggeration_iters: int = 250
    momentum_start: float = 0.5
    momentum_end: float = 0.8
    momentum_switch: int = 250
    input_kernel: str = "gaussian"  # or "student"
    max_items: int = 0  # 0 = project every item
    seed: int = 0

    def validate(self) -> None:
        _check(self.perplexity > 1, "perplexity", self.perplexity, "> 1")
        _check(self.iters >= 1, "tsne_iters", self.iters, ">= 1")
        _check(self.lr > 0, "tsne_lr", self.lr, "> 0")
        _check(self.early_exaggeration >= 1, "early_exaggeration", self.early_exaggeration, ">= 1")
        _check(self.input_kernel in ("gaussian", "student"), "tsne_input_kernel", self.input_kernel,
               "one of gaussian, student")
        _check(self.max_items >= 0, "tsne_max_items", self.max_items, ">= 0")


@dataclass
class ClusterConfig:
    rho: int = 8
    theta: int = 4
    radial_mode: str = "quantile"  # or "equal"

    def validate(self) -> None:
        _check(self.rho >= 1, "rho", self.rho, ">= 1")
        _check(self.theta >= 1, "theta", self.theta, ">= 1")
        _check(self.radial_mode in ("quantile", "equal"), "radial_mode", self.radial_mode,
               "one of quantile, equal")


@dataclass
class PipelineConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    tsne: TsneConfig = field(default_factory=TsneConfig)
    cluster: ClusterConfig = field(default_factory=ClusterConfig)
    train_path: str = ""
    test_path: str = ""
    out: str = "run"
    seed: int = 0
    finetune_epochs: int = 0  # 0 = reuse train.epochs
    finetune_lr: float = 0.0  # 0 = reuse train.lr
    neg_per_user: int = 10
    sweep_rho: list[int] = field(default_factory=list)
    sweep_theta: list[int] = field(default_factory=list)
    sweep_perplexity: list[float] = field(default_factory=list)

    def validate(self) -> None:
        self.train.validate()
        self.tsne.validate()
        self.cluster.validate()
        _check(self.finetune_epochs >= 0, "finetune_epochs", self.finetune_epochs, ">= 0")
        _check(self.finetune_lr >= 0, "finetune_lr", self.finetune_lr, ">= 0")
        _check(self.neg_per_user >= 1, "neg_per_user", self.neg_per_user, ">= 1")

    def snapshot(self) -> dict:
        return dataclasses.asdict(self)


def _check(ok: bool, key: str, value, rule: str) -> None:
    if not ok:
        raise ConfigError(f"{key} = {value!r}: must be {rule}")


# Per-dataset hyperparameters (K, K*, lambda, epsilon, tau, rho, theta) and max epochs.
PRESETS: dict[str, dict[str, object]] = {
    "yelp2018": dict(K=3, K_star=1, lam=0.20, epsilon=0.20, tau=0.15, rho=8, theta=4, epochs=50),
    "amazon-kindle": dict(K=3, K_star=1, lam=0.20, epsilon=0.10, tau=0.20, rho=1, theta=4, epochs=100),
    "alibaba-ifashion": dict(K=4, K_star=4, lam=0.05, epsilon=0.05, tau=0.20, rho=4, theta=8, epochs=50),
}

# config key -> (section, attribute, type)
_KEYS: dict[str, tuple[str | None, str, type]] = {
    "d": ("train", "d", int),
    "K": ("train", "K", int),
    "K_star": ("train", "K_star", int),
    "lambda": ("train", "lam", float),
    "epsilon": ("train", "epsilon", float),
    "tau": ("train", "tau", float),
    "lr": ("train", "lr", float),
    "batch_size": ("train", "batch_size", int),
    "epochs": ("train", "epochs", int),
    "l2_coeff": ("train", "l2_coeff", float),
    "val_fraction": ("train", "val_fraction", float),
    "select_best": ("train", "select_best", bool),
    "patience": ("train", "patience", int),
    "topk": ("train", "topk", int),
    "perplexity": ("tsne", "perplexity", float),
    "tsne_iters": ("tsne", "iters", int),
    "tsne_lr": ("tsne", "lr", float),
    "early_exaggeration": ("tsne", "early_exaggeration", float),
    "exaggeration_iters": ("tsne", "exaggeration_iters", int),
    "momentum_start": ("tsne", "momentum_start", float),
    "momentum_end": ("tsne", "momentum_end", float),
    "momentum_switch": ("tsne", "momentum_switch", int),
    "tsne_input_kernel": ("tsne", "input_kernel", str),
    "tsne_max_items": ("tsne", "max_items", int),
    "rho": ("cluster", "rho", int),
    "theta": ("cluster", "theta", int),
    "radial_mode": ("cluster", "radial_mode", str),
    "train_path": (None, "train_path", str),
    "test_path": (None, "test_path", str),
    "out": (None, "out", str),
    "seed": (None, "seed", int),
    "finetune_epochs": (None, "finetune_epochs", int),
    "finetune_lr": (None, "finetune_lr", float),
    "neg_per_user": (None, "neg_per_user", int),
    "sweep_rho": (None, "sweep_rho", list),
    "sweep_theta": (None, "sweep_theta", list),
    "sweep_perplexity": (None, "sweep_perplexity", list),
}

_LIST_ITEM_TYPE = {"sweep_rho": int, "sweep_theta": int, "sweep_perplexity": float}


def _convert(key: str, raw: str, typ: type):
    try:
        if typ is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        if typ is list:
            item = _LIST_ITEM_TYPE[key]
            return [item(tok) for tok in raw.replace(",", " ").split()]
        return raw
    except ValueError:
        raise ConfigError(f"{key} = {raw!r}: expected {typ.__name__}") from None


def apply_setting(cfg: PipelineConfig, key: str, raw: str) -> None:
    if key == "preset":
        apply_preset(cfg, raw)
        return
    if key not in _KEYS:
        raise ConfigError(f"unknown config key {key!r}")
    section, attr, typ = _KEYS[key]
    target = cfg if section is None else getattr(cfg, section)
    setattr(target, attr, _convert(key, raw, typ))


def apply_preset(cfg: PipelineConfig, name: str) -> None:
    try:
        preset = PRESETS[name.lower()]
    except KeyError:
        raise ConfigError(f"preset = {name!r}: known presets are {sorted(PRESETS)}") from None
    for attr in ("K", "K_star", "lam", "epsilon", "tau", "epochs"):
        setattr(cfg.train, attr, preset[attr])
    cfg.cluster.rho = preset["rho"]
    cfg.cluster.theta = preset["theta"]


def parse_config(path: str | Path | None = None, overrides: dict[str, str] | None = None) -> PipelineConfig:
    """Read ``key = value`` lines (``#`` comments allowed) into a validated config.

    A ``preset = <dataset>`` line applies that dataset's hyperparameters;
    later lines override it. Relative data paths resolve against the config
    file's directory.
    """
    cfg = PipelineConfig()
    base = None
    if path is not None:
        path = Path(path)
        base = path.parent
        for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, raw = (s.strip() for s in line.split("=", 1))
            apply_setting(cfg, key, raw)
    for key, raw in (overrides or {}).items():
        apply_setting(cfg, key, str(raw))
    if base is not None:
        for attr in ("train_path", "test_path"):
            value = getattr(cfg, attr)
            if value and not Path(value).is_absolute():
                setattr(cfg, attr, str(base / value))
    cfg.train.seed = cfg.seed
    cfg.tsne.seed = cfg.seed
    cfg.validate()
    return cfg


def config_text(cfg: PipelineConfig) -> str:
    """Render ``cfg`` back into the ``key = value`` format; parse_config round-trips it."""
    lines = []
    for key, (section, attr, typ) in _KEYS.items():
        target = cfg if section is None else getattr(cfg, section)
        value = getattr(target, attr)
        if typ is list:
            value = ", ".join(repr(v) for v in value)
        elif typ is float:
            value = repr(float(value))
        elif typ is bool:
            value = "true" if value else "false"
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
