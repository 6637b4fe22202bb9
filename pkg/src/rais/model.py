"""Detector and auxiliary label generator with hand-written backprop.

Layout::

    x --g--> z --c--> logits --softmax--> p          (detector, cross-entropy)
               \\
                stop-grad --h--> q --+--> masked softmax   -> p_mask
                                     +--> softmax          -> p_unmask

``g`` is F -> H1 -> D with ReLU after both layers and inverted dropout after
the first. ``c`` and ``h`` are D -> 80 -> 32 -> out with ReLU between linear
maps. The auxiliary loss never reaches ``g`` or ``c``; the detector loss never
reaches ``h``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .numcore import (
    LOG_EPS,
    ArrayDict,
    ConfigError,
    DimensionError,
    adam_init,
    adam_step,
    build_mask,
    kl_to_uniform,
    kl_to_uniform_grad,
    masked_softmax,
    softmax,
)

CHECKPOINT_FORMAT = "rais-checkpoint/1"


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int = 40
    hidden_dim: int = 64
    latent_dim: int = 64
    head_dims: Tuple[int, ...] = (80, 32)
    num_classes: int = 2
    aux_labels: int = 90
    dropout: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "head_dims", tuple(int(d) for d in self.head_dims))
        if self.aux_labels < 2 or self.aux_labels % 2:
            raise ConfigError(f"aux_labels must be even and >= 2, got {self.aux_labels}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        dims = (self.input_dim, self.hidden_dim, self.latent_dim, *self.head_dims)
        if min(dims) < 1 or not self.head_dims:
            raise ConfigError("all layer sizes must be >= 1")
        if self.num_classes != 2:
            raise ConfigError("the detector is binary (fake / bona fide)")

    def layer_shapes(self) -> Dict[str, Tuple[int, ...]]:
        shapes: Dict[str, Tuple[int, ...]] = {
            "g_w1": (self.input_dim, self.hidden_dim),
            "g_b1": (self.hidden_dim,),
            "g_w2": (self.hidden_dim, self.latent_dim),
            "g_b2": (self.latent_dim,),
        }
        for head, out in (("c", self.num_classes), ("h", self.aux_labels)):
            sizes = (self.latent_dim, *self.head_dims, out)
            for i in range(len(sizes) - 1):
                shapes[f"{head}_w{i + 1}"] = (sizes[i], sizes[i + 1])
                shapes[f"{head}_b{i + 1}"] = (sizes[i + 1],)
        return shapes


@dataclass
class ModelState:
    config: ModelConfig
    params: ArrayDict
    m: ArrayDict
    v: ArrayDict
    step: int = 0
    seed_lineage: List[str] = field(default_factory=list)

    def copy(self) -> "ModelState":
        return ModelState(
            self.config,
            {k: a.copy() for k, a in self.params.items()},
            {k: a.copy() for k, a in self.m.items()},
            {k: a.copy() for k, a in self.v.items()},
            self.step,
            list(self.seed_lineage),
        )

    def block(self, prefix: str) -> List[str]:
        return [k for k in self.params if k.startswith(prefix + "_")]


@dataclass
class Annotation:
    """Per-sample annotations, stored column-wise (one row per sample)."""

    p: np.ndarray          # (n, 2)
    y_hat: np.ndarray      # (n,)
    p_mask: np.ndarray     # (n, K); zeros when the generator is disabled
    p_unmask: np.ndarray   # (n, K)
    y_aux: np.ndarray      # (n,); -1 when the generator is disabled
    score: np.ndarray      # (n,)
    z: np.ndarray          # (n, D)

    def __len__(self) -> int:
        return len(self.score)


@dataclass
class LossGrads:
    l_addm: float
    l_aagm: float
    grads_addm: ArrayDict
    grads_aagm: ArrayDict

    @property
    def grads(self) -> ArrayDict:
        return {k: self.grads_addm[k] + self.grads_aagm[k] for k in self.grads_addm}


def init_state(config: ModelConfig, rng: np.random.Generator) -> ModelState:
    """Glorot-uniform weights, zero biases."""
    params: ArrayDict = {}
    for name, shape in config.layer_shapes().items():
        if len(shape) == 2:
            a = np.sqrt(6.0 / (shape[0] + shape[1]))
            params[name] = rng.uniform(-a, a, size=shape)
        else:
            params[name] = np.zeros(shape)
    m, v = adam_init(params)
    return ModelState(config, params, m, v)


def zero_state(config: ModelConfig) -> ModelState:
    params = {k: np.zeros(s) for k, s in config.layer_shapes().items()}
    m, v = adam_init(params)
    return ModelState(config, params, m, v)


def _relu(a: np.ndarray) -> np.ndarray:
    return np.maximum(a, 0.0)


def _as_batch(x: np.ndarray, width: int) -> Tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != width:
        raise DimensionError(f"expected feature width {width}, got shape {x.shape}")
    return x, single


def dropout_mask(config: ModelConfig, n: int, rng: Optional[np.random.Generator]) -> Optional[np.ndarray]:
    if rng is None or config.dropout == 0.0:
        return None
    keep = rng.random((n, config.hidden_dim)) >= config.dropout
    return keep / (1.0 - config.dropout)


def _extract(params: ArrayDict, x: np.ndarray, drop: Optional[np.ndarray]):
    a1 = x @ params["g_w1"] + params["g_b1"]
    r1 = _relu(a1)
    d1 = r1 * drop if drop is not None else r1
    a2 = d1 @ params["g_w2"] + params["g_b2"]
    return _relu(a2), (a1, d1, a2)


def _head(params: ArrayDict, prefix: str, z: np.ndarray):
    n_layers = sum(1 for k in params if k.startswith(prefix + "_w"))
    acts = [z]
    pre = []
    h = z
    for i in range(1, n_layers + 1):
        a = h @ params[f"{prefix}_w{i}"] + params[f"{prefix}_b{i}"]
        pre.append(a)
        h = _relu(a) if i < n_layers else a
        acts.append(h)
    return h, (acts, pre)


def _head_backward(params: ArrayDict, prefix: str, cache, d_out: np.ndarray, grads: ArrayDict) -> np.ndarray:
    acts, pre = cache
    n_layers = len(pre)
    d = d_out
    for i in range(n_layers, 0, -1):
        if i < n_layers:
            d = d * (pre[i - 1] > 0)
        grads[f"{prefix}_w{i}"] = acts[i - 1].T @ d
        grads[f"{prefix}_b{i}"] = d.sum(axis=0)
        d = d @ params[f"{prefix}_w{i}"].T
    return d


def addm_forward(state: ModelState, x: np.ndarray, train_mode: bool = False,
                 rng: Optional[np.random.Generator] = None):
    """Return ``(z, p)`` for one feature vector or a batch of them."""
    xb, single = _as_batch(x, state.config.input_dim)
    drop = dropout_mask(state.config, len(xb), rng) if train_mode else None
    z, _ = _extract(state.params, xb, drop)
    logits, _ = _head(state.params, "c", z)
    p = softmax(logits)
    return (z[0], p[0]) if single else (z, p)


def aagm_forward(state: ModelState, z_detached: np.ndarray, y):
    """Return ``(q, p_mask, p_unmask, y_aux)``. ``z_detached`` is a constant."""
    zb, single = _as_batch(np.array(z_detached, copy=True), state.config.latent_dim)
    yb = np.atleast_1d(np.asarray(y))
    q, _ = _head(state.params, "h", zb)
    p_mask = masked_softmax(q, build_mask(yb, state.config.aux_labels))
    p_unmask = softmax(q)
    y_aux = np.argmax(p_mask, axis=-1)
    if single:
        return q[0], p_mask[0], p_unmask[0], int(y_aux[0])
    return q, p_mask, p_unmask, y_aux


def batch_loss_and_grads(
    state: ModelState,
    x: np.ndarray,
    y: np.ndarray,
    rng: Optional[np.random.Generator] = None,
    *,
    drop: Optional[np.ndarray] = None,
    use_aagm: bool = True,
    kl_weight: float = 1.0,
    aux_rows: Optional[np.ndarray] = None,
) -> LossGrads:
    """Mean detector cross-entropy, auxiliary loss, and both gradient sets.

    Dropout is applied when ``rng`` is given (a fresh mask is drawn) or when an
    explicit ``drop`` mask is passed; with neither, the pass is deterministic.
    ``aux_rows`` (boolean, per sample) restricts the auxiliary loss to a subset
    of the batch; its mean and batch average are then taken over that subset.
    """
    cfg = state.config
    params = state.params
    xb, _ = _as_batch(x, cfg.input_dim)
    yb = np.asarray(y, dtype=np.int64).reshape(-1)
    n = len(xb)
    if n == 0:
        raise DimensionError("empty batch")
    if len(yb) != n:
        raise DimensionError(f"{n} samples but {len(yb)} labels")
    if drop is None:
        drop = dropout_mask(cfg, n, rng)

    # detector
    z, (a1, d1, a2) = _extract(params, xb, drop)
    logits, c_cache = _head(params, "c", z)
    p = softmax(logits)
    py = p[np.arange(n), yb]
    l_addm = float(np.mean(-np.log(py + LOG_EPS)))

    onehot = np.zeros_like(p)
    onehot[np.arange(n), yb] = 1.0
    d_logits = -(py / (py + LOG_EPS))[:, None] * (onehot - p) / n
    g_addm: ArrayDict = {}
    dz = _head_backward(params, "c", c_cache, d_logits, g_addm)
    da2 = dz * (a2 > 0)
    g_addm["g_w2"] = d1.T @ da2
    g_addm["g_b2"] = da2.sum(axis=0)
    dd1 = da2 @ params["g_w2"].T
    dr1 = dd1 * drop if drop is not None else dd1
    da1 = dr1 * (a1 > 0)
    g_addm["g_w1"] = xb.T @ da1
    g_addm["g_b1"] = da1.sum(axis=0)
    for k in state.block("h"):
        g_addm[k] = np.zeros_like(params[k])

    g_aagm: ArrayDict = {k: np.zeros_like(a) for k, a in params.items()}
    l_aagm = 0.0
    za, ya = z, yb
    if aux_rows is not None:
        aux_rows = np.asarray(aux_rows, dtype=bool)
        za, ya = z[aux_rows], yb[aux_rows]
    if use_aagm and len(ya):
        n = len(ya)
        # stop-gradient: the generator sees a copy of z, and nothing flows back
        q, h_cache = _head(params, "h", za.copy())
        pm = masked_softmax(q, build_mask(ya, cfg.aux_labels))
        pu = softmax(q)
        diff = pm - pu
        p_bar = pm.mean(axis=0)
        l_aagm = float(np.sum(diff * diff) / n)
        gm = (2.0 / n) * diff
        gu = -gm
        if kl_weight:
            l_aagm += kl_weight * kl_to_uniform(p_bar)
            gm = gm + (kl_weight / n) * kl_to_uniform_grad(p_bar)[None, :]
        dq = pm * (gm - np.sum(pm * gm, axis=1, keepdims=True))
        dq += pu * (gu - np.sum(pu * gu, axis=1, keepdims=True))
        h_grads: ArrayDict = {}
        _head_backward(params, "h", h_cache, dq, h_grads)
        g_aagm.update(h_grads)

    return LossGrads(l_addm, l_aagm, g_addm, g_aagm)


def eval_addm_loss(state: ModelState, x: np.ndarray, y: np.ndarray, batch_size: int = 4096) -> float:
    """Mean detector cross-entropy without dropout."""
    total = 0.0
    y = np.asarray(y, dtype=np.int64)
    for start in range(0, len(x), batch_size):
        _, p = addm_forward(state, x[start:start + batch_size])
        py = p[np.arange(len(p)), y[start:start + batch_size]]
        total += float(np.sum(-np.log(py + LOG_EPS)))
    return total / len(x)


def train_epoch(
    state: ModelState,
    x: np.ndarray,
    y: np.ndarray,
    batch_size: int,
    lr: float,
    rng: np.random.Generator,
    *,
    use_aagm: bool = True,
    kl_weight: float = 1.0,
    aux_rows: Optional[np.ndarray] = None,
) -> Tuple[ModelState, Dict[str, float]]:
    """Shuffle, split into mini-batches, one Adam step per batch.

    Returns the updated state and sample-weighted mean losses for the epoch.
    """
    n = len(x)
    if n == 0:
        raise DimensionError("cannot train on an empty sample set")
    order = rng.permutation(n)
    params, m, v, step = state.params, state.m, state.v, state.step
    sum_addm = sum_aagm = 0.0
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        cur = ModelState(state.config, params, m, v, step)
        lg = batch_loss_and_grads(cur, x[idx], y[idx], rng, use_aagm=use_aagm, kl_weight=kl_weight,
                                  aux_rows=None if aux_rows is None else aux_rows[idx])
        step += 1
        params, (m, v) = adam_step(params, lg.grads, (m, v), step, lr)
        sum_addm += lg.l_addm * len(idx)
        sum_aagm += lg.l_aagm * len(idx)
    new = ModelState(state.config, params, m, v, step, list(state.seed_lineage))
    return new, {"addm": sum_addm / n, "aagm": sum_aagm / n}


def annotate(state: ModelState, x: np.ndarray, y: np.ndarray, *, use_aagm: bool = True) -> Annotation:
    """Evaluation-mode annotations and importance scores.

    With the generator enabled the score is the mean of the detector's
    confidence in its own prediction and the masked auxiliary confidence at
    the chosen auxiliary label; without it, the score is the detector
    confidence alone.
    """
    xb, _ = _as_batch(x, state.config.input_dim)
    yb = np.asarray(y, dtype=np.int64).reshape(-1)
    z, p = addm_forward(state, xb)
    y_hat = np.argmax(p, axis=1)
    conf = p[np.arange(len(p)), y_hat]
    k = state.config.aux_labels
    if use_aagm:
        _, pm, pu, y_aux = aagm_forward(state, z, yb)
        y_aux = np.asarray(y_aux, dtype=np.int64).reshape(-1)
        score = 0.5 * (conf + pm[np.arange(len(pm)), y_aux])
    else:
        pm = np.zeros((len(xb), k))
        pu = np.zeros((len(xb), k))
        y_aux = np.full(len(xb), -1, dtype=np.int64)
        score = conf.copy()
    return Annotation(p, y_hat, pm, pu, y_aux, score, z)


# ---------------------------------------------------------------------------
# checkpoints

def save_checkpoint(state: ModelState, path) -> None:
    """Write an ``.npz`` archive: ``__meta__`` holds a JSON document with the
    format tag, config, Adam step and seed lineage; every parameter ``k`` is
    stored as ``param/k`` with its moments under ``m/k`` and ``v/k``."""
    meta = {
        "format": CHECKPOINT_FORMAT,
        "config": asdict(state.config),
        "step": state.step,
        "seed_lineage": state.seed_lineage,
    }
    arrays = {"__meta__": np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)}
    for k in state.params:
        arrays[f"param/{k}"] = state.params[k]
        arrays[f"m/{k}"] = state.m[k]
        arrays[f"v/{k}"] = state.v[k]
    path = Path(path)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path) -> ModelState:
    with np.load(Path(path)) as data:
        meta = json.loads(bytes(data["__meta__"]).decode())
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"unsupported checkpoint format {meta.get('format')!r}")
        config = ModelConfig(**meta["config"])
        names = list(config.layer_shapes())
        params = {k: data[f"param/{k}"].copy() for k in names}
        m = {k: data[f"m/{k}"].copy() for k in names}
        v = {k: data[f"v/{k}"].copy() for k in names}
    return ModelState(config, params, m, v, meta["step"], list(meta["seed_lineage"]))

