"""Acceptance criteria 1-11. Each test prints one PASS/FAIL line; the lines
are also collected into the terminal summary.

    pytest tests/test_acceptance.py -s
"""

import json
import random
import time
from collections import Counter, defaultdict

import numpy as np
import pytest
from scipy.stats import chisquare

from conftest import ACCEPTANCE_LINES, make_candidates
from oracles import ais_reference, eer_grid_oracle
from rais.cli import main as cli_main
from rais.datagen import default_benchmark
from rais.harness import PRESETS, preset, run_sequential
from rais.memory import MemoryBuffer, StoredSample, allocation_size, ais_select
from rais.metrics import average_eer, compute_eer, forgetting_rate
from rais.model import ModelConfig, ModelState, annotate, batch_loss_and_grads, dropout_mask, init_state, zero_state
from rais.numcore import build_mask, finite_diff_grad, make_rng, masked_softmax


def verdict(n, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print("\n" + line)
    assert ok, line


# 1 ---------------------------------------------------------------------------

def test_c01_formula_suite():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(1000):
        k = 2 * int(rng.integers(1, 51))
        y = int(rng.integers(0, 2))
        q = rng.normal(0, 3, k)
        mask = build_mask(y, k)
        e = mask * np.exp(q)
        direct = e / e.sum()
        worst = max(worst, float(np.abs(masked_softmax(q, mask) - direct).max()))
    masks_ok = (build_mask(0, 4).tolist() == [1, 1, 0, 0] and build_mask(1, 4).tolist() == [0, 0, 1, 1]
                and build_mask(1, 2).tolist() == [0, 1]
                and build_mask(np.array([0, 1]), 6).tolist() == [[1, 1, 1, 0, 0, 0], [0, 0, 0, 1, 1, 1]])
    ann2 = annotate(zero_state(ModelConfig(input_dim=3, latent_dim=4, aux_labels=2)), np.ones((2, 3)), np.array([0, 1]))
    ann90 = annotate(zero_state(ModelConfig(input_dim=3, latent_dim=4, aux_labels=90)), np.zeros((1, 3)), np.array([1]))
    scores_ok = ann2.score.tolist() == [0.75, 0.75] and ann90.score[0] == 0.5 * (0.5 + 1 / 45)
    dt = time.perf_counter() - t0
    verdict(1, worst <= 1e-12 and masks_ok and scores_ok and dt < 1.0,
            f"max |masked_softmax - direct| = {worst:.2e} over 1000 triples, masks exact={masks_ok}, "
            f"hand scores exact={scores_ok}, {dt:.2f}s")


# 2 ---------------------------------------------------------------------------

def test_c02_gradient_check():
    t0 = time.perf_counter()
    cfg = ModelConfig(input_dim=6, hidden_dim=8, latent_dim=6, head_dims=(7, 5), aux_labels=6, dropout=0.1)
    worst = 0.0
    for seed in range(10):
        rng = make_rng(seed, "accept-grad")
        st = init_state(cfg, rng)
        for k in st.params:
            if "_b" in k:
                st.params[k] = rng.normal(0, 0.1, st.params[k].shape)
        x = rng.normal(size=(5, 6))
        y = rng.integers(0, 2, 5)
        drop = dropout_mask(cfg, 5, rng)

        def total(params):
            r = batch_loss_and_grads(ModelState(cfg, params, st.m, st.v), x, y, drop=drop)
            return r.l_addm + r.l_aagm

        def addm(params):
            return batch_loss_and_grads(ModelState(cfg, params, st.m, st.v), x, y, drop=drop).l_addm

        grads = batch_loss_and_grads(st, x, y, drop=drop).grads
        # the detector blocks are trained on the detector loss alone
        fd = {**finite_diff_grad(addm, st.params, 1e-5, st.block("g") + st.block("c")),
              **finite_diff_grad(total, st.params, 1e-5, st.block("h"))}
        assert set(fd) == set(st.params)
        for k, ref in fd.items():
            rel = np.abs(grads[k] - ref) / np.maximum(np.abs(grads[k]) + np.abs(ref), 1e-8)
            worst = max(worst, float(rel.max()))
    dt = time.perf_counter() - t0
    verdict(2, worst < 1e-4 and dt < 30, f"max relative error {worst:.2e} on all parameters, 10 pairs, {dt:.1f}s")


# 3 ---------------------------------------------------------------------------

def test_c03_stop_gradient():
    cfg = ModelConfig(input_dim=5, hidden_dim=6, latent_dim=4, head_dims=(7, 5), aux_labels=10)
    bad = 0
    for seed in range(100):
        rng = make_rng(seed, "accept-sg")
        st = init_state(cfg, rng)
        n = int(rng.integers(1, 20))
        lg = batch_loss_and_grads(st, rng.normal(size=(n, 5)), rng.integers(0, 2, n), rng)
        bad += any(np.any(lg.grads_aagm[k]) for k in st.block("g") + st.block("c"))
        bad += any(np.any(lg.grads_addm[k]) for k in st.block("h"))
    verdict(3, bad == 0, f"{bad} non-zero cross blocks in 100 trials")


# 4 ---------------------------------------------------------------------------

def _expected_quotas(size, ratio, nf, nb):
    take = min(size, nf + nb)
    want = int(np.floor(size * ratio + 0.5))
    f = min(want, nf)
    b = min(take - f, nb)
    return take - b, b


def _fair(picked, cands, half):
    groups = defaultdict(list)
    for i, c in enumerate(cands):
        groups[c.y_aux].append(i)
    counts = Counter(cands[i].y_aux for i in picked)
    for side in (range(half), range(half, 2 * half)):
        live = [g for g in side if g in groups]
        if not live:
            continue
        top = max(counts[g] for g in live)
        for g in live:
            if counts[g] < len(groups[g]) and counts[g] < top - 1:
                return False
            # members taken are the group's best by score, ties by input order
            ranked = sorted(groups[g], key=lambda i: (-cands[i].score, i))
            if set(ranked[: counts[g]]) != {i for i in picked if cands[i].y_aux == g}:
                return False
    return True


def test_c04_ais_oracle():
    rng = random.Random(4)
    mismatches = quota_bad = fair_bad = cases = 0
    for _ in range(500):
        k = rng.choice([2, 4, 6, 8, 10])
        n = rng.randint(0, 200)
        aux = [rng.randrange(k) for _ in range(n)]
        scores = [rng.randint(0, 50) / 50 for _ in range(n)]
        size = rng.randint(0, n + 10)
        cands = make_candidates(aux, scores, k=k)
        for ratio in (0.0, 0.5, 0.8, 1.0):
            cases += 1
            picked = [s.index for s in ais_select(cands, size, ratio, k)]
            mismatches += picked != ais_reference(list(zip(aux, scores)), size, ratio, k)
            nf = sum(a < k // 2 for a in aux)
            got = (sum(aux[i] < k // 2 for i in picked), sum(aux[i] >= k // 2 for i in picked))
            quota_bad += got != _expected_quotas(size, ratio, nf, n - nf)
            fair_bad += not _fair(picked, cands, k // 2)
    verdict(4, mismatches == quota_bad == fair_bad == 0,
            f"{cases} cases: {mismatches} reference mismatches, {quota_bad} quota, {fair_bad} fairness violations")


# 5 ---------------------------------------------------------------------------

def test_c05_buffer_law():
    rng = np.random.default_rng(5)
    violations = runs = 0
    for cap in (32, 256, 512):
        for _ in range(40):
            runs += 1
            buf = MemoryBuffer(cap)
            for i in range(int(rng.integers(1, 9))):
                before = [list(seg.samples) for seg in buf.segments]
                n = int(rng.integers(0, 800))
                cands = [StoredSample(np.zeros(1), int(a >= 5), int(a), float(s), i, j)
                         for j, (a, s) in enumerate(zip(rng.integers(0, 10, n), rng.integers(0, 30, n) / 30))]
                buf.update_after_experience(cands, i, ratio=0.8, k=10)
                lim = allocation_size(cap, i)
                violations += len(buf) > cap
                violations += any(len(seg) > lim for seg in buf.segments)
                # trimming keeps a prefix of the score-sorted segment
                for old, seg in zip(before, buf.segments):
                    violations += [id(s) for s in seg.samples] != [id(s) for s in old[: len(seg)]]
                    violations += len(seg) != min(len(old), lim)
    verdict(5, violations == 0, f"{violations} violations over {runs} random sequences, capacities 32/256/512")


# 6 ---------------------------------------------------------------------------

def test_c06_eer_oracle():
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(5, 501))
        nf = int(rng.integers(1, n))
        shift = int(rng.integers(0, 400))
        fake = np.clip(rng.normal(400, 150, nf).astype(int), 0, 1000)
        bona = np.clip(rng.normal(400 + shift, 150, n - nf).astype(int), 0, 1000)
        e = compute_eer(np.r_[fake, bona] / 1000, np.r_[np.zeros(nf), np.ones(n - nf)])
        worst = max(worst, abs(e - eer_grid_oracle(fake, bona)))
    lab = np.r_[np.zeros(3), np.ones(4)]
    separated = compute_eer(np.r_[0.1, 0.2, 0.3, 0.6, 0.7, 0.8, 0.9], lab)
    inverted = compute_eer(np.r_[0.7, 0.8, 0.9, 0.1, 0.2, 0.3, 0.4], lab)
    verdict(6, worst <= 1e-6 and separated == 0.0 and inverted == 1.0,
            f"max |EER - grid| = {worst:.2e} over 200 sets, separated={separated}, inverted={inverted}")


# 7 ---------------------------------------------------------------------------

def test_c07_reservoir_uniformity():
    from rais.samplers import reservoir_inclusion_trials
    trials = 10**5
    counts = reservoir_inclusion_trials(100, 10, trials, make_rng(7, "accept-reservoir"))
    freq = counts / trials
    p = chisquare(counts).pvalue
    ok = bool(np.all(np.abs(freq - 0.1) <= 0.01)) and p > 1e-3
    verdict(7, ok, f"inclusion frequency in [{freq.min():.4f}, {freq.max():.4f}], chi-square p = {p:.3f}")


# 8, 9 ------------------------------------------------------------------------

@pytest.fixture(scope="module")
def desk_reports(benchmark):
    t0 = time.perf_counter()
    reports = {name: run_sequential(preset(name, aux_labels=10, capacity=512, ratio=0.8, seeds=[0, 1, 2]), benchmark)
               for name in PRESETS}
    return reports, time.perf_counter() - t0


@pytest.mark.slow
def test_c08_desk_benchmark(desk_reports):
    reports, dt = desk_reports
    avg = {n: r["aggregate"]["avg_eer_mean"] for n, r in reports.items()}
    rehearsal = [n for n in PRESETS if n != "finetune"]
    a = all(avg[n] < avg["finetune"] for n in rehearsal)
    b = avg["rais"] <= avg["er_random"]
    c = all(avg["rais"] <= avg[n] for n in ("rais_no_aagm", "rais_no_ais", "rais_no_dl"))
    table = ", ".join(f"{n} {100 * v:.2f}%" for n, v in avg.items())
    verdict(8, a and b and c and dt < 600, f"(a)={a} (b)={b} (c)={c} in {dt:.0f}s; mean avg EER: {table}")


@pytest.mark.slow
def test_c09_mode_coverage(desk_reports, benchmark):
    reports, _ = desk_reports
    assert all(ds.spec.n_fake_clusters >= 4 for ds in benchmark)
    ais = [r["coverage"] for r in reports["rais"]["per_seed"]]
    rnd = [r["coverage"] for r in reports["er_random"]["per_seed"]]
    wins = [sum(a[i] >= r[i] for a, r in zip(ais, rnd)) for i in range(len(benchmark))]
    verdict(9, all(w >= 2 for w in wins),
            f"seeds with AIS coverage >= random per experience: {wins}; AIS {ais}, random {rnd}")


# 10 --------------------------------------------------------------------------

@pytest.mark.slow
def test_c10_cli_determinism(tmp_path):
    assert cli_main(["gen-data", "--out", str(tmp_path / "data")]) == 0
    cfg = tmp_path / "run.yaml"
    cfg.write_text("preset: rais\naux_labels: 10\ncapacity: 512\nseeds: [0, 1, 2]\n")
    for out in ("a", "b"):
        assert cli_main(["run", "--config", str(cfg), "--data", str(tmp_path / "data"),
                         "--out", str(tmp_path / out)]) == 0
    a = json.loads((tmp_path / "a" / "rais.json").read_text())
    b = json.loads((tmp_path / "b" / "rais.json").read_text())
    a.pop("wall_clock_s"), b.pop("wall_clock_s")
    same_csv = (tmp_path / "a" / "rais.csv").read_bytes() == (tmp_path / "b" / "rais.csv").read_bytes()
    verdict(10, a == b and same_csv, f"result JSON identical={a == b}, CSV identical={same_csv}")


# 11 --------------------------------------------------------------------------

def test_c11_table_arithmetic():
    avg = round(average_eer([0.666, 0.083, 0.821, 8.197, 0.000]), 3)
    pairs = {0.33: (0.33, 0.00), 0.17: (0.17, 0.00), 6.12: (6.12, 0.00)}
    f_ok = all(round(forgetting_rate(*p), 2) == want for want, p in pairs.items())
    verdict(11, abs(avg - 1.953) <= 1e-3 and f_ok, f"average EER {avg:.3f}%, forgetting pairs reproduced={f_ok}")
