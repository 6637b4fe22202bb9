"""Sequential continual-learning protocol and the method matrix.

Experience 0 trains on its own data; every later experience trains on its
train split concatenated with the whole rehearsal buffer, shuffled each
epoch. After an experience is learned its train split is annotated and the
configured policy picks what enters the buffer. EER is measured on the eval
split of every experience seen so far after each stage.
"""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .datagen import ExperienceDataset
from .memory import MemoryBuffer, Segment, StoredSample, ais_select, top_score_select
from .metrics import average_eer, compute_eer
from .model import (
    ModelConfig,
    ModelState,
    annotate,
    addm_forward,
    eval_addm_loss,
    init_state,
    train_epoch,
)
from .numcore import ConfigError, make_rng
from .samplers import ReservoirBuffer, class_balanced_select, herding_select, random_select

log = logging.getLogger(__name__)

METHODS = ("finetune", "er", "rais")
ER_POLICIES = ("random", "reservoir", "class_balanced", "herding")
ABLATIONS = ("disable_aagm", "disable_ais", "disable_diversity_loss")
WORKERS_ENV = "RAIS_MAX_WORKERS"


@dataclass
class RunConfig:
    method: str = "rais"
    policy: str = "ais"
    capacity: int = 512
    ratio: float = 0.8
    epochs: int = 10
    batch_size: int = 64
    lr: float = 1e-3
    patience: int = 3
    seeds: List[int] = field(default_factory=lambda: [0, 1, 2])
    disable_aagm: bool = False
    disable_ais: bool = False
    disable_diversity_loss: bool = False
    # buffer samples also feed the auxiliary loss
    replay_aux: bool = True
    rescore_buffer: bool = False
    name: str = ""
    # model
    input_dim: int = 40
    hidden_dim: int = 64
    latent_dim: int = 64
    head_dims: Tuple[int, ...] = (80, 32)
    aux_labels: int = 90
    dropout: float = 0.1

    def __post_init__(self):
        self.head_dims = tuple(self.head_dims)
        self.seeds = [int(s) for s in self.seeds]
        if not self.name:
            self.name = default_name(self)

    @classmethod
    def from_dict(cls, data: Dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)

    def to_dict(self) -> Dict:
        d = asdict(self)
        d["head_dims"] = list(self.head_dims)
        return d

    def model_config(self) -> ModelConfig:
        return ModelConfig(self.input_dim, self.hidden_dim, self.latent_dim, self.head_dims,
                           2, self.aux_labels, self.dropout)

    @property
    def ablation(self) -> Optional[str]:
        flags = [a for a in ABLATIONS if getattr(self, a)]
        return flags[0] if flags else None

    @property
    def uses_aagm(self) -> bool:
        return self.method == "rais" and not self.disable_aagm

    @property
    def sampling_label(self) -> str:
        if self.method == "finetune":
            return "-"
        if self.method == "rais":
            return {"disable_aagm": "class_top_score", "disable_ais": "top_score"}.get(self.ablation, "ais")
        return self.policy

    def validate(self) -> None:
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if self.epochs < 1 or self.batch_size < 1 or self.patience < 1:
            raise ConfigError("epochs, batch_size and patience must be >= 1")
        if self.lr < 0:
            raise ConfigError("learning rate must be >= 0")
        if not 0.0 <= self.ratio <= 1.0:
            raise ConfigError("ratio must lie in [0, 1]")
        n_flags = sum(bool(getattr(self, a)) for a in ABLATIONS)
        if self.method == "finetune":
            if self.capacity != 0 or self.policy not in ("none", "-"):
                raise ConfigError("finetune uses no buffer: set capacity 0 and policy none")
        else:
            if self.capacity < 1:
                raise ConfigError(f"{self.method} needs a buffer capacity >= 1")
        if self.method == "er" and self.policy not in ER_POLICIES:
            raise ConfigError(f"er policy must be one of {ER_POLICIES}, got {self.policy!r}")
        if self.method == "rais" and self.policy != "ais":
            raise ConfigError("rais always selects with policy ais")
        if n_flags and self.method != "rais":
            raise ConfigError("ablation flags only apply to rais")
        if n_flags > 1:
            raise ConfigError("at most one ablation flag may be set")
        self.model_config()


def default_name(cfg: RunConfig) -> str:
    if cfg.method == "finetune":
        return "finetune"
    if cfg.method == "er":
        return f"er_{cfg.policy}"
    suffix = {"disable_aagm": "_no_aagm", "disable_ais": "_no_ais", "disable_diversity_loss": "_no_dl"}
    flags = [a for a in ABLATIONS if getattr(cfg, a)]
    return "rais" + (suffix[flags[0]] if len(flags) == 1 else "")


def preset(name: str, **overrides) -> RunConfig:
    """Named method configurations used by the benchmark and CLI."""
    table = {
        "finetune": dict(method="finetune", policy="none", capacity=0),
        "er_random": dict(method="er", policy="random"),
        "er_reservoir": dict(method="er", policy="reservoir"),
        "er_class_balanced": dict(method="er", policy="class_balanced"),
        "er_herding": dict(method="er", policy="herding"),
        "rais": dict(method="rais", policy="ais"),
        "rais_no_aagm": dict(method="rais", policy="ais", disable_aagm=True),
        "rais_no_ais": dict(method="rais", policy="ais", disable_ais=True),
        "rais_no_dl": dict(method="rais", policy="ais", disable_diversity_loss=True),
        # learning rate reported for the pretrained front-end setting
        "rais_lr1e5": dict(method="rais", policy="ais", lr=1e-5, aux_labels=90),
    }
    if name not in table:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(table)}")
    kw = {**table[name], **overrides}
    if name == "finetune":
        # a shared config's buffer size must not give fine-tuning a buffer
        kw.update(table[name])
    kw.setdefault("name", name)
    return RunConfig(**kw)


PRESETS = ("finetune", "er_random", "er_reservoir", "er_class_balanced", "er_herding",
           "rais", "rais_no_aagm", "rais_no_ais", "rais_no_dl")


# ---------------------------------------------------------------------------
# training

@dataclass
class TrainData:
    x: np.ndarray
    y: np.ndarray
    aux_rows: Optional[np.ndarray] = None  # rows that feed the auxiliary loss

    def __len__(self) -> int:
        return len(self.y)


def train_with_early_stopping(
    state: ModelState,
    train: TrainData,
    dev_x: np.ndarray,
    dev_y: np.ndarray,
    epochs: int,
    patience: int,
    rng: np.random.Generator,
    *,
    batch_size: int = 64,
    lr: float = 1e-3,
    use_aagm: bool = True,
    kl_weight: float = 1.0,
) -> Tuple[ModelState, Dict]:
    """Train up to ``epochs`` epochs, keep the state with the lowest dev
    detector loss, stop after ``patience`` epochs without improvement."""
    if patience < 1:
        raise ConfigError("patience must be >= 1")
    best_state, best_loss, best_epoch = state, np.inf, 0
    history = []
    stale = 0
    for epoch in range(1, epochs + 1):
        state, losses = train_epoch(
            state, train.x, train.y, batch_size, lr, rng,
            use_aagm=use_aagm, kl_weight=kl_weight, aux_rows=train.aux_rows)
        dev_loss = eval_addm_loss(state, dev_x, dev_y)
        history.append({"epoch": epoch, **losses, "dev_addm": dev_loss})
        if dev_loss < best_loss:
            best_state, best_loss, best_epoch = state, dev_loss, epoch
            stale = 0
        else:
            stale += 1
            if stale >= patience:
                break
    return best_state, {"best_epoch": best_epoch, "epochs_run": len(history), "history": history}


def evaluate(state: ModelState, experiences: Sequence[ExperienceDataset], split: str = "eval") -> List[float]:
    out = []
    for ds in experiences:
        sp = ds.split(split)
        _, p = addm_forward(state, sp.x)
        out.append(compute_eer(p[:, 1], sp.y))
    return out


def _candidates(ds: ExperienceDataset, ann, experience: int, use_aux: bool) -> List[StoredSample]:
    sp = ds.train
    y_aux = ann.y_aux if use_aux else sp.y
    return [
        StoredSample(sp.x[i], int(sp.y[i]), int(y_aux[i]), float(ann.score[i]), experience, i)
        for i in range(len(sp))
    ]


def _select(cfg: RunConfig, cands: List[StoredSample], size: int, z: np.ndarray,
            rng: np.random.Generator, experience: int) -> Segment:
    if cfg.method == "rais":
        if cfg.disable_ais:
            return top_score_select(cands, size, experience)
        if cfg.disable_aagm:
            # auxiliary label collapses to the primary label: one group per class
            return ais_select(cands, size, cfg.ratio, 2, experience)
        return ais_select(cands, size, cfg.ratio, cfg.aux_labels, experience)
    if cfg.policy == "random":
        return random_select(cands, size, rng, experience)
    if cfg.policy == "class_balanced":
        return class_balanced_select(cands, size, rng, experience)
    if cfg.policy == "herding":
        return herding_select(cands, z, size, experience)
    raise ConfigError(f"policy {cfg.policy!r} has no segment selector")


def run_single_seed(cfg: RunConfig, experiences: Sequence[ExperienceDataset], seed: int,
                    keep_state: bool = False) -> Dict:
    """One full pass over the experience sequence for one seed."""
    mcfg = cfg.model_config()
    state = init_state(mcfg, make_rng(seed, "init"))
    state.seed_lineage = [f"seed={seed}", "init"]
    use_aagm = cfg.uses_aagm
    kl_weight = 0.0 if cfg.disable_diversity_loss else 1.0
    buffer = None
    if cfg.method == "er" and cfg.policy == "reservoir":
        buffer = ReservoirBuffer(cfg.capacity)
    elif cfg.method != "finetune":
        buffer = MemoryBuffer(cfg.capacity)

    n = len(experiences)
    matrix: List[List[Optional[float]]] = [[None] * n for _ in range(n)]
    coverage: List[Optional[int]] = [None] * n
    segment_sizes: List[List[int]] = []
    stages = []
    for i, ds in enumerate(experiences):
        replay = buffer.all_samples() if buffer is not None else []
        x = ds.train.x
        y = ds.train.y
        aux_rows = None
        if replay:
            x = np.concatenate([x, np.array([s.features for s in replay])])
            y = np.concatenate([y, np.array([s.y for s in replay], dtype=np.int64)])
            if not cfg.replay_aux:
                aux_rows = np.arange(len(y)) < len(ds.train)
        state, info = train_with_early_stopping(
            state, TrainData(x, y, aux_rows), ds.dev.x, ds.dev.y, cfg.epochs, cfg.patience,
            make_rng(seed, "train", str(i)), batch_size=cfg.batch_size, lr=cfg.lr,
            use_aagm=use_aagm, kl_weight=kl_weight)
        state.seed_lineage.append(f"train/{i}")

        if buffer is not None:
            sel_rng = make_rng(seed, "select", str(i))
            ann = annotate(state, ds.train.x, ds.train.y, use_aagm=use_aagm)
            cands = _candidates(ds, ann, i, use_aagm)
            if isinstance(buffer, ReservoirBuffer):
                buffer.update(cands, sel_rng)
                picked = [s for s in buffer.all_samples() if s.source == i]
            else:
                rescore = None
                if cfg.rescore_buffer:
                    def rescore(samples, _st=state):
                        xs = np.array([s.features for s in samples])
                        ys = np.array([s.y for s in samples])
                        return annotate(_st, xs, ys, use_aagm=use_aagm).score
                seg = buffer.update_after_experience(
                    cands, i, lambda c, size: _select(cfg, c, size, ann.z, sel_rng, i),
                    rescore=rescore)
                picked = seg.samples
            coverage[i] = len({int(ds.train.cluster[s.index]) for s in picked})
            if isinstance(buffer, MemoryBuffer):
                segment_sizes.append([len(s) for s in buffer.segments])
            else:
                segment_sizes.append([len(buffer)])

        eers = evaluate(state, experiences[: i + 1])
        for j, e in enumerate(eers):
            matrix[i][j] = e
        stages.append({"experience": i, "best_epoch": info["best_epoch"], "epochs_run": info["epochs_run"]})

    final = evaluate(state, experiences)
    matrix[n - 1] = final
    forgetting = [final[j] - matrix[j][j] for j in range(n)]
    out = {
        "seed": seed,
        "eer_matrix": matrix,
        "final_eer": final,
        "avg_eer": average_eer(final),
        "forgetting": forgetting,
        "coverage": coverage,
        "segment_sizes": segment_sizes,
        "stages": stages,
    }
    if keep_state:
        out["_state"] = state
        out["_buffer"] = buffer
    return out


def _worker_count(n_seeds: int, workers: Optional[int]) -> int:
    if workers is None:
        workers = os.cpu_count() or 1
        cap = os.environ.get(WORKERS_ENV)
        if cap:
            workers = min(workers, max(1, int(cap)))
    return max(1, min(workers, n_seeds))


def aggregate(per_seed: List[Dict]) -> Dict:
    final = np.array([r["final_eer"] for r in per_seed])
    avg = np.array([r["avg_eer"] for r in per_seed])
    ddof = 1 if len(per_seed) > 1 else 0
    return {
        "eer_mean": final.mean(axis=0).tolist(),
        "eer_std": final.std(axis=0, ddof=ddof).tolist(),
        "avg_eer_mean": float(avg.mean()),
        "avg_eer_std": float(avg.std(ddof=ddof)),
        "forgetting_mean": np.array([r["forgetting"] for r in per_seed]).mean(axis=0).tolist(),
    }


def run_sequential(cfg: RunConfig, experiences: Sequence[ExperienceDataset],
                   workers: Optional[int] = None) -> Dict:
    """Run every seed and return a JSON-serialisable report."""
    cfg.validate()
    if not experiences:
        raise ConfigError("at least one experience is required")
    if experiences[0].spec.input_dim != cfg.input_dim:
        raise ConfigError(f"data has {experiences[0].spec.input_dim} features, config says {cfg.input_dim}")
    t0 = time.perf_counter()
    n_workers = _worker_count(len(cfg.seeds), workers)
    if n_workers > 1:
        with ProcessPoolExecutor(n_workers) as pool:
            per_seed = list(pool.map(run_single_seed, [cfg] * len(cfg.seeds), [experiences] * len(cfg.seeds),
                                     cfg.seeds))
    else:
        per_seed = [run_single_seed(cfg, experiences, s) for s in cfg.seeds]
    for r in per_seed:
        log.info("%s seed %d: avg EER %.4f", cfg.name, r["seed"], r["avg_eer"])
    return {
        "method": cfg.name,
        "sampling": cfg.sampling_label,
        "buffer": cfg.capacity if cfg.method != "finetune" else None,
        "config": cfg.to_dict(),
        "seeds": list(cfg.seeds),
        "n_experiences": len(experiences),
        "per_seed": per_seed,
        "aggregate": aggregate(per_seed),
        "wall_clock_s": time.perf_counter() - t0,
    }


def run_ablation(cfg: RunConfig, experiences: Sequence[ExperienceDataset],
                 workers: Optional[int] = None) -> Dict:
    if cfg.method != "rais":
        raise ConfigError("ablations are defined for rais only")
    if sum(bool(getattr(cfg, a)) for a in ABLATIONS) != 1:
        raise ConfigError("exactly one ablation flag must be set")
    return run_sequential(cfg, experiences, workers)
