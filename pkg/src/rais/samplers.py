"""Baseline selection policies: random, reservoir, class-balanced, herding.

Selected segments are stored score-sorted like AIS segments so the buffer's
trimming logic does not depend on the policy.
"""

from __future__ import annotations

from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import kernels
from .memory import Segment, StoredSample, sort_by_score, split_quota

POLICIES = ("none", "random", "reservoir", "class_balanced", "herding", "ais", "top_score")


def _as_segment(candidates: Sequence[StoredSample], picked: Sequence[int], experience: int) -> Segment:
    # index order first so the stable score sort breaks ties by input order
    return Segment(experience, sort_by_score([candidates[i] for i in sorted(picked)]))


def random_select(candidates: Sequence[StoredSample], size: int, rng: np.random.Generator,
                  experience: int = 0) -> Segment:
    n = len(candidates)
    take = min(max(size, 0), n)
    picked = rng.choice(n, size=take, replace=False) if take else []
    return _as_segment(candidates, list(picked), experience)


def class_quotas(size: int, n_fake: int, n_bona: int) -> Tuple[int, int]:
    """Half of ``size`` per class; an odd leftover goes to the class with more
    candidates (fake on a tie); shortfalls are backfilled from the other class."""
    want_fake = size // 2 + (size % 2 if n_fake >= n_bona else 0)
    return split_quota(size, want_fake, n_fake, n_bona)


def _class_indices(candidates: Sequence[StoredSample]):
    fake = [i for i, s in enumerate(candidates) if s.y == 0]
    bona = [i for i, s in enumerate(candidates) if s.y == 1]
    return fake, bona


def class_balanced_select(candidates: Sequence[StoredSample], size: int, rng: np.random.Generator,
                          experience: int = 0) -> Segment:
    fake, bona = _class_indices(candidates)
    q_fake, q_bona = class_quotas(max(size, 0), len(fake), len(bona))
    picked = []
    for pool, quota in ((fake, q_fake), (bona, q_bona)):
        if quota:
            picked.extend(np.asarray(pool)[rng.choice(len(pool), size=quota, replace=False)].tolist())
    return _as_segment(candidates, picked, experience)


def herding_select(candidates: Sequence[StoredSample], z: np.ndarray, size: int,
                   experience: int = 0) -> Segment:
    """Per-class greedy mean matching in latent space (``z`` rows align with
    ``candidates``), with class quotas as in :func:`class_balanced_select`."""
    z = np.asarray(z, dtype=np.float64)
    if len(z) != len(candidates):
        raise ValueError("one latent vector per candidate required")
    fake, bona = _class_indices(candidates)
    q_fake, q_bona = class_quotas(max(size, 0), len(fake), len(bona))
    picked: List[int] = []
    for pool, quota in ((fake, q_fake), (bona, q_bona)):
        if quota:
            pool = np.asarray(pool)
            picked.extend(pool[kernels.herding_order(z[pool], quota)].tolist())
    return _as_segment(candidates, picked, experience)


class ReservoirBuffer:
    """Single reservoir over the whole training stream (Algorithm R).

    After ``n`` items have been offered, each is held with probability
    ``capacity / n``. Unlike the segmented buffer there is no per-experience
    allocation: the reservoir is the buffer.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError(f"reservoir capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self.seen = 0
        self._slots = np.full(capacity, -1, dtype=np.int64)
        self._items: dict = {}

    def __len__(self) -> int:
        return len(self._items)

    def update(self, stream: Sequence, rng: np.random.Generator) -> None:
        start = self.seen
        uniforms = rng.random(len(stream))
        self.seen = kernels.reservoir_fill(self._slots, self.seen, uniforms)
        items = {}
        for sid in self._slots.tolist():
            if sid < 0:
                continue
            items[sid] = self._items[sid] if sid < start else stream[sid - start]
        self._items = items

    def all_samples(self) -> list:
        return [self._items[sid] for sid in self._slots.tolist() if sid >= 0]


def reservoir_update(reservoir: Optional[ReservoirBuffer], stream: Sequence, capacity: int,
                     rng: np.random.Generator) -> ReservoirBuffer:
    if reservoir is None:
        reservoir = ReservoirBuffer(capacity)
    reservoir.update(stream, rng)
    return reservoir


def reservoir_inclusion_trials(n: int, capacity: int, trials: int, rng: np.random.Generator) -> np.ndarray:
    """Run ``trials`` independent streams of ``n`` items; return how often each
    item ended up in the reservoir."""
    uniforms = rng.random((trials, n))
    held = kernels.reservoir_trials(capacity, uniforms)
    return np.bincount(held[held >= 0].ravel(), minlength=n)
