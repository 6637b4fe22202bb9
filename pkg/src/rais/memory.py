"""Segmented rehearsal buffer and auxiliary-informed selection."""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .numcore import ConfigError

SNAPSHOT_FORMAT = "rais-buffer/1"


@dataclass
class StoredSample:
    features: np.ndarray
    y: int
    y_aux: int
    score: float
    source: int
    index: int = -1  # position in the source experience's train split

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"importance score {self.score} outside [0, 1]")


@dataclass
class Segment:
    experience: int
    samples: List[StoredSample] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def truncate(self, size: int) -> None:
        del self.samples[size:]


def sort_by_score(samples: Sequence[StoredSample]) -> List[StoredSample]:
    """Descending score; ties keep input order (``sorted`` is stable)."""
    return sorted(samples, key=lambda s: -s.score)


def allocation_size(capacity: int, experience_index: int) -> int:
    if capacity < 1 or experience_index < 0:
        raise ConfigError("capacity must be >= 1 and experience index >= 0")
    return capacity // (experience_index + 1)


def split_quota(total: int, want_first: int, avail_first: int, avail_second: int):
    """Split ``total`` picks between two pools, moving any shortfall of one pool
    onto the other. Returns ``(take_first, take_second)``."""
    first = min(want_first, avail_first)
    second = min(total - first, avail_second)
    first = min(total - second, avail_first)
    return first, second


def round_robin(samples: Sequence[StoredSample], quota: int) -> List[StoredSample]:
    """Cycle over auxiliary labels in ascending order, taking the best remaining
    sample of each group per visit and skipping exhausted groups.

    Visiting groups cyclically is the same as ordering every sample by
    ``(rank within its group, auxiliary label)`` and taking a prefix.
    """
    groups: Dict[int, List[StoredSample]] = defaultdict(list)
    for s in samples:
        groups[s.y_aux].append(s)
    keyed = []
    for aux, members in groups.items():
        for rank, s in enumerate(sort_by_score(members)):
            keyed.append((rank, aux, s))
    keyed.sort(key=lambda t: (t[0], t[1]))
    return [s for _, _, s in keyed[:quota]]


def fake_quota(size: int, ratio: float) -> int:
    """``round(size * ratio)`` with halves rounded up."""
    return int(math.floor(size * ratio + 0.5))


def ais_select(candidates: Sequence[StoredSample], size: int, ratio: float, k: int,
               experience: int = 0) -> Segment:
    """Auxiliary-informed sampling.

    Candidates are split into the fake category (auxiliary label below K/2)
    and the bona fide category. ``round(size * ratio)`` picks go to the fake
    side and the rest to the bona fide side, each filled by round-robin over
    its auxiliary groups. A category that runs short hands its remaining
    quota to the other. The union is re-sorted by score.
    """
    if size < 0:
        raise ConfigError(f"allocation size must be >= 0, got {size}")
    if not 0.0 <= ratio <= 1.0:
        raise ConfigError(f"fake ratio must lie in [0, 1], got {ratio}")
    if k < 2 or k % 2:
        raise ConfigError(f"auxiliary label count must be even and >= 2, got {k}")
    half = k // 2
    fake, bona = [], []
    for s in candidates:
        if not 0 <= s.y_aux < k:
            raise ValueError(f"auxiliary label {s.y_aux} outside [0, {k})")
        (fake if s.y_aux < half else bona).append(s)
    n_fake, n_bona = split_quota(size, fake_quota(size, ratio), len(fake), len(bona))
    picked = round_robin(fake, n_fake) + round_robin(bona, n_bona)
    # restore candidate order before the stable score sort so ties follow input order
    pos = {id(s): i for i, s in enumerate(candidates)}
    picked.sort(key=lambda s: pos[id(s)])
    return Segment(experience, sort_by_score(picked))


def top_score_select(candidates: Sequence[StoredSample], size: int, experience: int = 0) -> Segment:
    """Global top-``size`` by score, no stratification."""
    return Segment(experience, sort_by_score(candidates)[:size])


Selector = Callable[[Sequence[StoredSample], int], Segment]


class MemoryBuffer:
    """Fixed-capacity buffer holding one score-sorted segment per past experience."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ConfigError(f"buffer capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self.segments: List[Segment] = []

    def __len__(self) -> int:
        return sum(len(s) for s in self.segments)

    def all_samples(self) -> List[StoredSample]:
        return [s for seg in self.segments for s in seg]

    def update_after_experience(
        self,
        candidates: Sequence[StoredSample],
        experience: int,
        selector: Optional[Selector] = None,
        *,
        ratio: float = 0.8,
        k: int = 90,
        rescore: Optional[Callable[[List[StoredSample]], Sequence[float]]] = None,
    ) -> Segment:
        """Trim every existing segment to the new allocation size, then select
        and append a segment for ``experience``.

        ``rescore`` (off by default) replaces stored scores with fresh ones
        before trimming; otherwise the scores recorded at selection time are used.
        """
        size = allocation_size(self.capacity, experience)
        for seg in self.segments:
            if rescore is not None and len(seg):
                for s, new in zip(seg.samples, rescore(seg.samples)):
                    s.score = float(new)
                seg.samples = sort_by_score(seg.samples)
            seg.truncate(size)
        if selector is None:
            new_seg = ais_select(candidates, size, ratio, k, experience)
        else:
            new_seg = selector(candidates, size)
            new_seg.experience = experience
        self.segments.append(new_seg)
        return new_seg

    # snapshot ------------------------------------------------------------
    def save(self, path) -> None:
        """``.npz`` snapshot: JSON ``__meta__`` (format, capacity, segment
        experience indices and lengths) plus column arrays ``features``, ``y``,
        ``y_aux``, ``score``, ``source``, ``index`` in segment order."""
        samples = self.all_samples()
        meta = {
            "format": SNAPSHOT_FORMAT,
            "capacity": self.capacity,
            "segments": [[seg.experience, len(seg)] for seg in self.segments],
        }
        width = samples[0].features.shape[0] if samples else 0
        arrays = {
            "__meta__": np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
            "features": np.array([s.features for s in samples], dtype=np.float64).reshape(len(samples), width),
            "y": np.array([s.y for s in samples], dtype=np.int64),
            "y_aux": np.array([s.y_aux for s in samples], dtype=np.int64),
            "score": np.array([s.score for s in samples], dtype=np.float64),
            "source": np.array([s.source for s in samples], dtype=np.int64),
            "index": np.array([s.index for s in samples], dtype=np.int64),
        }
        with open(Path(path), "wb") as fh:
            np.savez(fh, **arrays)

    @classmethod
    def load(cls, path) -> "MemoryBuffer":
        with np.load(Path(path)) as data:
            meta = json.loads(bytes(data["__meta__"]).decode())
            if meta.get("format") != SNAPSHOT_FORMAT:
                raise ValueError(f"unsupported buffer snapshot {meta.get('format')!r}")
            buf = cls(meta["capacity"])
            pos = 0
            for exp, length in meta["segments"]:
                seg = Segment(exp)
                for i in range(pos, pos + length):
                    seg.samples.append(StoredSample(
                        data["features"][i].copy(), int(data["y"][i]), int(data["y_aux"][i]),
                        float(data["score"][i]), int(data["source"][i]), int(data["index"][i])))
                buf.segments.append(seg)
                pos += length
        return buf
