import numpy as np
import pytest

from conftest import make_candidates
from oracles import herding_reference
from rais.memory import StoredSample
from rais.numcore import make_rng
from rais.samplers import (
    ReservoirBuffer,
    class_balanced_select,
    class_quotas,
    herding_select,
    random_select,
    reservoir_update,
)


def cands_by_class(n_fake, n_bona, seed=0):
    rng = np.random.default_rng(seed)
    y = [0] * n_fake + [1] * n_bona
    return [StoredSample(rng.normal(size=2), y[i], y[i], float(rng.random()), 0, i) for i in range(len(y))]


def ids(seg):
    return [s.index for s in seg]


def check_common(seg, cands, size):
    got = ids(seg)
    assert len(got) <= size and len(set(got)) == len(got)
    assert all(0 <= i < len(cands) for i in got)
    scores = [s.score for s in seg]
    assert scores == sorted(scores, reverse=True)


class TestRandom:
    def test_all_when_large(self):
        c = cands_by_class(5, 5)
        assert sorted(ids(random_select(c, 20, make_rng(0)))) == list(range(10))

    def test_zero(self):
        assert len(random_select(cands_by_class(5, 5), 0, make_rng(0))) == 0

    def test_seeded(self):
        c = cands_by_class(50, 50)
        assert ids(random_select(c, 10, make_rng(4))) == ids(random_select(c, 10, make_rng(4)))
        check_common(random_select(c, 10, make_rng(4)), c, 10)


class TestClassBalanced:
    def test_even(self):
        seg = class_balanced_select(cands_by_class(10, 10), 4, make_rng(0))
        assert sum(s.y == 0 for s in seg) == 2 and sum(s.y == 1 for s in seg) == 2

    def test_backfill(self):
        seg = class_balanced_select(cands_by_class(1, 10), 4, make_rng(0))
        assert sum(s.y == 0 for s in seg) == 1 and sum(s.y == 1 for s in seg) == 3

    def test_odd_deterministic(self):
        assert class_quotas(5, 10, 10) == (3, 2)
        assert class_quotas(5, 4, 10) == (2, 3)
        c = cands_by_class(10, 10)
        assert ids(class_balanced_select(c, 5, make_rng(1))) == ids(class_balanced_select(c, 5, make_rng(1)))


class TestHerding:
    def test_identical_latents_pick_first(self):
        c = cands_by_class(6, 0)
        seg = herding_select(c, np.ones((6, 3)), 3)
        assert sorted(ids(seg)) == [0, 1, 2]

    def test_1d_example(self):
        c = cands_by_class(3, 0)
        seg = herding_select(c, np.array([[0.0], [1.0], [10.0]]), 1)
        assert ids(seg) == [1]

    def test_matches_greedy_reference(self):
        rng = np.random.default_rng(5)
        c = cands_by_class(20, 0)
        z = rng.normal(size=(20, 4))
        seg = herding_select(c, z, 8)
        assert sorted(ids(seg)) == sorted(herding_reference(z, 8))

    def test_class_split(self):
        c = cands_by_class(10, 10)
        z = np.random.default_rng(0).normal(size=(20, 3))
        seg = herding_select(c, z, 6)
        check_common(seg, c, 6)
        assert sum(s.y == 0 for s in seg) == 3

    def test_length_check(self):
        with pytest.raises(ValueError):
            herding_select(cands_by_class(3, 3), np.zeros((5, 2)), 2)


class TestReservoir:
    def test_small_stream_kept(self):
        stream = list(range(7))
        r = reservoir_update(None, stream, 10, make_rng(0))
        assert sorted(r.all_samples()) == stream

    def test_capacity_and_membership(self):
        r = ReservoirBuffer(10)
        r.update(list(range(100)), make_rng(0))
        r.update(list(range(100, 150)), make_rng(1))
        got = r.all_samples()
        assert len(got) == 10 and len(set(got)) == 10 and all(0 <= g < 150 for g in got)
        assert r.seen == 150

    def test_seeded(self):
        a = reservoir_update(None, list(range(500)), 20, make_rng(3)).all_samples()
        b = reservoir_update(None, list(range(500)), 20, make_rng(3)).all_samples()
        assert a == b

    def test_invalid_capacity(self):
        with pytest.raises(ValueError):
            ReservoirBuffer(0)
