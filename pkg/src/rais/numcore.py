"""Numeric primitives: softmax variants, losses, Adam and seeded RNG streams.

Everything is float64. Functions accept 1-D vectors or 2-D batches (rows are
samples) where that makes sense; reductions over classes run along the last
axis.
"""

from __future__ import annotations

import zlib
from typing import Callable, Dict, Mapping, Optional, Tuple

import numpy as np

LOG_EPS = 1e-12

ArrayDict = Dict[str, np.ndarray]


class DimensionError(ValueError):
    """Array shapes do not satisfy an operation's contract."""


class InvalidMaskError(ValueError):
    """A mask has no active position or non-binary entries."""


class ConfigError(ValueError):
    """Invalid configuration value (odd K, bad ratio, ...)."""


# ---------------------------------------------------------------------------
# randomness

def make_rng(seed: int, *purpose: str) -> np.random.Generator:
    """Return an independent PCG64 stream for ``(seed, purpose...)``.

    Child streams are keyed by the CRC32 of each purpose string through
    ``SeedSequence.spawn_key`` so e.g. ``make_rng(7, "init")`` and
    ``make_rng(7, "shuffle")`` never share state, and each component can be
    reproduced on its own. PCG64 raw output is stable across platforms.
    """
    if seed < 0:
        raise ConfigError(f"seed must be non-negative, got {seed}")
    key = tuple(zlib.crc32(p.encode("utf-8")) for p in purpose)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


# ---------------------------------------------------------------------------
# softmax variants

def softmax(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    if q.size == 0 or q.shape[-1] == 0:
        raise DimensionError("softmax of an empty vector")
    e = np.exp(q - q.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def build_mask(y, k: int) -> np.ndarray:
    """Binary mask over ``k`` auxiliary labels: fake (0) gets the first half,
    bona fide (1) the second half. ``y`` may be a scalar or an array of labels."""
    if k < 2 or k % 2:
        raise ConfigError(f"auxiliary label count must be even and >= 2, got {k}")
    y = np.asarray(y)
    if np.any((y != 0) & (y != 1)):
        raise ConfigError("primary labels must be 0 (fake) or 1 (bona fide)")
    half = k // 2
    upper = np.arange(k) >= half
    return (upper == (y[..., None] == 1)).astype(np.float64)


def masked_softmax(q: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Softmax restricted to positions where ``mask`` is 1; the rest are 0.

    The stabilising max is taken over active positions only, so large logits
    sitting on masked positions cannot underflow the active ones.
    """
    q = np.asarray(q, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    if q.shape != mask.shape:
        raise DimensionError(f"logits {q.shape} and mask {mask.shape} differ")
    if q.shape[-1] % 2:
        raise ConfigError(f"auxiliary label count must be even, got {q.shape[-1]}")
    if np.any((mask != 0) & (mask != 1)):
        raise InvalidMaskError("mask entries must be 0 or 1")
    active = mask == 1
    if np.any(~active.any(axis=-1)):
        raise InvalidMaskError("mask has no active position")
    shifted = np.where(active, q, -np.inf)
    shifted = shifted - shifted.max(axis=-1, keepdims=True)
    e = np.where(active, np.exp(shifted), 0.0)
    return e / e.sum(axis=-1, keepdims=True)


def argmax_lowest(p: np.ndarray) -> np.ndarray:
    # np.argmax already returns the first maximal index; kept as a named helper
    # so the tie rule is explicit at call sites.
    return np.argmax(p, axis=-1)


# ---------------------------------------------------------------------------
# losses

def cross_entropy(p: np.ndarray, y) -> float:
    p = np.asarray(p, dtype=np.float64)
    if not 0 <= int(y) < p.shape[-1]:
        raise IndexError(f"label {y} out of range for {p.shape[-1]} classes")
    return float(-np.log(p[int(y)] + LOG_EPS))


def mse_pair(a: np.ndarray, b: np.ndarray) -> float:
    """Squared Euclidean distance (sum, not mean, over components)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"shapes {a.shape} and {b.shape} differ")
    d = a - b
    return float(np.dot(d.ravel(), d.ravel()))


def kl_to_uniform(p_bar: np.ndarray, tol: float = 1e-9) -> float:
    """KL(p_bar || uniform) with 0 ln 0 := 0."""
    p_bar = np.asarray(p_bar, dtype=np.float64)
    if p_bar.ndim != 1 or p_bar.size == 0:
        raise DimensionError("expected a non-empty probability vector")
    if abs(p_bar.sum() - 1.0) > tol or np.any(p_bar < 0):
        raise ValueError("input is not a normalised probability vector")
    k = p_bar.size
    pos = p_bar > 0
    val = float(np.sum(p_bar[pos] * np.log(p_bar[pos] * k)))
    # round-off on near-uniform input can land a hair below zero
    return max(val, 0.0)


def kl_to_uniform_grad(p_bar: np.ndarray) -> np.ndarray:
    """d KL / d p_bar; zero where p_bar is exactly zero (those entries carry
    no gradient through the masked softmax anyway)."""
    k = p_bar.size
    out = np.zeros_like(p_bar)
    pos = p_bar > 0
    out[pos] = np.log(p_bar[pos] * k) + 1.0
    return out


# ---------------------------------------------------------------------------
# optimiser

def adam_init(params: Mapping[str, np.ndarray]) -> Tuple[ArrayDict, ArrayDict]:
    return ({k: np.zeros_like(v) for k, v in params.items()},
            {k: np.zeros_like(v) for k, v in params.items()})


def adam_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    moments: Tuple[Mapping[str, np.ndarray], Mapping[str, np.ndarray]],
    t: int,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> Tuple[ArrayDict, Tuple[ArrayDict, ArrayDict]]:
    """One bias-corrected Adam update. Returns new params and moments; the
    inputs are not modified."""
    if t < 1:
        raise ValueError(f"Adam step counter starts at 1, got {t}")
    m_old, v_old = moments
    if set(params) != set(grads) or set(params) != set(m_old) or set(params) != set(v_old):
        raise DimensionError("params, grads and moments must share keys")
    new_p: ArrayDict = {}
    new_m: ArrayDict = {}
    new_v: ArrayDict = {}
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape or m_old[name].shape != p.shape:
            raise DimensionError(f"shape mismatch for {name}: {p.shape} vs {g.shape}")
        m = beta1 * m_old[name] + (1.0 - beta1) * g
        v = beta2 * v_old[name] + (1.0 - beta2) * g * g
        if lr == 0.0:
            new_p[name] = p.copy()
        else:
            new_p[name] = p - lr * (m / c1) / (np.sqrt(v / c2) + eps)
        new_m[name] = m
        new_v[name] = v
    return new_p, (new_m, new_v)


# ---------------------------------------------------------------------------
# gradient oracle (tests only)

def finite_diff_grad(
    loss_fn: Callable[[ArrayDict], float],
    params: Mapping[str, np.ndarray],
    h: float = 1e-5,
    keys: Optional[list] = None,
) -> ArrayDict:
    """Central differences of ``loss_fn`` w.r.t. every entry of ``params``."""
    work = {k: np.array(v, dtype=np.float64, copy=True) for k, v in params.items()}
    out: ArrayDict = {}
    for name in keys if keys is not None else list(work):
        arr = work[name]
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = loss_fn(work)
            flat[i] = orig - h
            fm = loss_fn(work)
            flat[i] = orig
            gflat[i] = (fp - fm) / (2.0 * h)
        out[name] = g
    return out
