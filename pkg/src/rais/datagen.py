"""Synthetic experience stream.

Each experience is a Gaussian mixture: several fake "attack" clusters with
uneven sizes and a few bona fide "speaker" clusters, all shifted by an
experience-specific drift. Hidden cluster ids are kept for diagnostics only;
model-facing code receives features and labels.

Dataset text format (one file per experience)::

    # rais-dataset/1
    # spec: {...json ExperienceSpec...}
    split,y,cluster,f0,f1,...
    train,0,3,0.125,-1.5,...

Floats are written with ``repr`` so files round-trip exactly.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .numcore import ConfigError, make_rng

DATASET_FORMAT = "rais-dataset/1"
SPLITS = ("train", "dev", "eval")


@dataclass
class ExperienceSpec:
    index: int
    fake_means: List[List[float]]
    bona_means: List[List[float]]
    std: float
    sizes: Dict[str, int]
    fake_fraction: float
    seed: int
    fake_weights: Optional[List[float]] = None
    bona_weights: Optional[List[float]] = None
    drift: Optional[List[float]] = None

    def __post_init__(self):
        if not self.fake_means or not self.bona_means:
            raise ConfigError("an experience needs at least one cluster per class")
        width = {len(m) for m in self.fake_means + self.bona_means}
        if len(width) != 1:
            raise ConfigError("cluster means must share one dimension")
        if self.drift is not None and len(self.drift) not in width:
            raise ConfigError("drift must match the feature dimension")
        if not self.std > 0:
            raise ConfigError(f"std must be > 0, got {self.std}")
        if set(self.sizes) != set(SPLITS) or min(self.sizes.values()) < 1:
            raise ConfigError(f"sizes must give a positive count for each of {SPLITS}")
        if not 0.0 <= self.fake_fraction <= 1.0:
            raise ConfigError("fake_fraction must lie in [0, 1]")
        means = np.array(self.fake_means + self.bona_means, dtype=np.float64)
        if not np.all(np.isfinite(means)):
            raise ConfigError("cluster means must be finite")
        for name, w, n in (("fake_weights", self.fake_weights, len(self.fake_means)),
                           ("bona_weights", self.bona_weights, len(self.bona_means))):
            if w is not None and (len(w) != n or min(w) < 0 or sum(w) <= 0):
                raise ConfigError(f"{name} must be {n} non-negative weights")

    @property
    def input_dim(self) -> int:
        return len(self.fake_means[0])

    @property
    def n_fake_clusters(self) -> int:
        return len(self.fake_means)


@dataclass
class Split:
    x: np.ndarray        # (n, F)
    y: np.ndarray        # (n,)
    cluster: np.ndarray  # (n,) hidden id; fake clusters first, then bona fide

    def __len__(self) -> int:
        return len(self.y)


@dataclass
class ExperienceDataset:
    spec: ExperienceSpec
    train: Split
    dev: Split
    eval: Split

    def split(self, name: str) -> Split:
        return getattr(self, name)


def _weights(w: Optional[Sequence[float]], n: int) -> np.ndarray:
    arr = np.ones(n) if w is None else np.asarray(w, dtype=np.float64)
    return arr / arr.sum()


def make_experience(spec: ExperienceSpec) -> ExperienceDataset:
    """Draw all three splits. Labels and cluster ids come from one stream and
    the Gaussian noise from another, so labels never depend on noise draws."""
    means = np.array(spec.fake_means + spec.bona_means, dtype=np.float64)
    if spec.drift is not None:
        means = means + np.asarray(spec.drift, dtype=np.float64)
    nf = spec.n_fake_clusters
    wf = _weights(spec.fake_weights, nf)
    wb = _weights(spec.bona_weights, len(spec.bona_means))
    splits = {}
    for name in SPLITS:
        lab_rng = make_rng(spec.seed, "labels", name)
        noise_rng = make_rng(spec.seed, "noise", name)
        n = spec.sizes[name]
        n_fake = int(np.floor(n * spec.fake_fraction + 0.5))
        y = np.concatenate([np.zeros(n_fake, dtype=np.int64), np.ones(n - n_fake, dtype=np.int64)])
        cl = np.concatenate([lab_rng.choice(nf, size=n_fake, p=wf),
                             nf + lab_rng.choice(len(wb), size=n - n_fake, p=wb)]).astype(np.int64)
        order = lab_rng.permutation(n)
        y, cl = y[order], cl[order]
        x = means[cl] + spec.std * noise_rng.standard_normal((n, spec.input_dim))
        splits[name] = Split(x, y, cl)
    return ExperienceDataset(spec, splits["train"], splits["dev"], splits["eval"])


@dataclass
class BenchmarkConfig:
    """Knobs for :func:`default_benchmark`; defaults are desk-scale."""

    seed: int = 0
    input_dim: int = 40
    n_experiences: int = 5
    fake_clusters: int = 5
    bona_clusters: int = 3
    # uneven attack sizes: the last attacks are rare
    fake_weights: List[float] = field(default_factory=lambda: [0.4, 0.3, 0.15, 0.1, 0.05])
    # fake share per experience; experience 2 is bona fide majority
    fake_fractions: List[float] = field(default_factory=lambda: [0.9, 0.78, 0.37, 0.67, 0.5])
    train_size: int = 2000
    dev_size: int = 500
    eval_size: int = 500
    std: float = 1.0
    cluster_spread: float = 1.2
    drift_scale: float = 2.0

    def __post_init__(self):
        if len(self.fake_fractions) != self.n_experiences:
            raise ConfigError("need one fake fraction per experience")
        if len(self.fake_weights) != self.fake_clusters:
            raise ConfigError("need one weight per fake cluster")


def benchmark_specs(cfg: BenchmarkConfig) -> List[ExperienceSpec]:
    rng = make_rng(cfg.seed, "benchmark-layout")
    specs = []
    for i in range(cfg.n_experiences):
        drift = rng.standard_normal(cfg.input_dim) * cfg.drift_scale
        fm = rng.standard_normal((cfg.fake_clusters, cfg.input_dim)) * cfg.cluster_spread
        bm = rng.standard_normal((cfg.bona_clusters, cfg.input_dim)) * cfg.cluster_spread
        specs.append(ExperienceSpec(
            index=i,
            fake_means=fm.tolist(),
            bona_means=bm.tolist(),
            std=cfg.std,
            sizes={"train": cfg.train_size, "dev": cfg.dev_size, "eval": cfg.eval_size},
            fake_fraction=cfg.fake_fractions[i],
            seed=int(rng.integers(2**63)),
            fake_weights=list(cfg.fake_weights),
            drift=drift.tolist(),
        ))
    return specs


def default_benchmark(seed: int = 0, config: Optional[BenchmarkConfig] = None) -> List[ExperienceDataset]:
    cfg = config or BenchmarkConfig(seed=seed)
    if config is not None and config.seed != seed:
        cfg = BenchmarkConfig(**{**asdict(config), "seed": seed})
    return [make_experience(s) for s in benchmark_specs(cfg)]


# ---------------------------------------------------------------------------
# text format

def write_dataset(ds: ExperienceDataset, path) -> None:
    lines = [f"# {DATASET_FORMAT}", "# spec: " + json.dumps(asdict(ds.spec), sort_keys=True)]
    width = ds.spec.input_dim
    lines.append("split,y,cluster," + ",".join(f"f{j}" for j in range(width)))
    for name in SPLITS:
        sp = ds.split(name)
        for row, y, c in zip(sp.x.tolist(), sp.y.tolist(), sp.cluster.tolist()):
            lines.append(f"{name},{y},{c}," + ",".join(repr(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_dataset(path) -> ExperienceDataset:
    text = Path(path).read_text().splitlines()
    if not text or text[0].strip() != f"# {DATASET_FORMAT}":
        raise ValueError(f"{path}: not a {DATASET_FORMAT} file")
    if len(text) < 3 or not text[1].startswith("# spec: "):
        raise ValueError(f"{path}: missing spec header")
    spec = ExperienceSpec(**json.loads(text[1][len("# spec: "):]))
    rows: Dict[str, list] = {s: [] for s in SPLITS}
    for lineno, line in enumerate(text[3:], start=4):
        if not line:
            continue
        parts = line.split(",")
        if parts[0] not in rows or len(parts) != 3 + spec.input_dim:
            raise ValueError(f"{path}:{lineno}: malformed sample line")
        rows[parts[0]].append(parts)
    splits = {}
    for name, items in rows.items():
        x = np.array([[float(v) for v in p[3:]] for p in items], dtype=np.float64).reshape(len(items), spec.input_dim)
        y = np.array([int(p[1]) for p in items], dtype=np.int64)
        c = np.array([int(p[2]) for p in items], dtype=np.int64)
        if len(y) != spec.sizes[name]:
            raise ValueError(f"{path}: split {name} has {len(y)} samples, header says {spec.sizes[name]}")
        splits[name] = Split(x, y, c)
    return ExperienceDataset(spec, splits["train"], splits["dev"], splits["eval"])
