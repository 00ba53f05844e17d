"""Acceptance criteria, one test each, printing a PASS/FAIL line with the measured values.

Criterion 8 needs the real purchase-to-pay log: set LEANPPM_P2P_CSV (and optionally
LEANPPM_P2P_GRID_LIMIT to bound the grid) to run it.
"""
import json
import os
import time

import numpy as np
import pytest

from helpers import (composite_cases, enumerate_targets, f1_bruteforce, grad_check,
                     mae_days_oracle, op_cases, select_bruteforce)
from leanppm.cli import main
from leanppm.eventlog import split_chronological, write_csv
from leanppm.evaluation import composite_scores, evaluate, f1_score, mae_days, select_model
from leanppm.features import (Normalizer, add_boundaries, build_ngram_samples,
                              build_prefix_samples, collate, fit_normalizer, prefix_width, prepare)
from leanppm.models import ModelConfig, build
from leanppm.synthetic import deterministic_log, random_log
from leanppm.training import TrainConfig, encode_for, train


@pytest.fixture
def verdict(capsys):
    """Print one line per criterion, also when the assertion inside fails."""
    def report(number, title, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} ({detail})")
        assert ok, detail
    return report


def test_criterion_1_gradient_suite(verdict):
    t0 = time.perf_counter()
    worst, checked, shapes = 0.0, 0, []
    for cases in (op_cases(seed=0), composite_cases(seed=0)):
        for name, items in cases.items():
            shapes.append(len(items))
            for fn, arrays in items:
                worst = max(worst, grad_check(fn, arrays))
                checked += 1
    secs = time.perf_counter() - t0
    ok = worst < 1e-4 and min(shapes) >= 5 and secs < 60
    verdict(1, "finite-difference gradient checks", ok,
            f"{len(shapes)} ops, {checked} cases, worst rel err {worst:.2e}, {secs:.1f}s")


def test_criterion_2_parameter_reduction(verdict):
    n_act, n_role = 21 + 4, 27 + 4
    light = build(ModelConfig("mtlformer_light", embed_dim=16, heads=1, ff_dim=32,
                              encoder_layers=1), n_act, n_role, 30).count_params()
    full = build(ModelConfig("mtlformer", embed_dim=32, heads=4, ff_dim=128,
                             encoder_layers=4), n_act, n_role, 30).count_params()
    lstm_light = build(ModelConfig("lstm_light", hidden_size=10), n_act, n_role, 30).count_params()
    lstm = build(ModelConfig("lstm", hidden_size=50), n_act, n_role, 30).count_params()
    r_t, r_l = light / full, lstm_light / lstm
    verdict(2, "light/full parameter ratios", r_t <= 0.25 and r_l <= 0.30,
            f"mtlformer {full} -> light {light} = {r_t:.3f} (<= 0.25); "
            f"lstm {lstm} -> light {lstm_light} = {r_l:.3f} (<= 0.30)")


# model type -> (config overrides, lr, batch size); all within the search grids
LEARNABILITY = {
    "mtlformer": (dict(embed_dim=32, heads=2, ff_dim=64, encoder_layers=2), 6e-4, 16),
    "mtlformer_light": (dict(), 6e-4, 8),
    "transformer_simple": (dict(), 6e-4, 8),
    "lstm": (dict(hidden_size=25), 5e-3, 16),
    "lstm_light": (dict(hidden_size=10), 5e-3, 8),
}


def test_criterion_3_learnability(verdict):
    t0 = time.perf_counter()
    prepared = prepare(split_chronological(deterministic_log(200, seed=0)))
    acts, roles = prepared.split.train.activity_vocab, prepared.split.train.role_vocab
    scores = {}
    for mt, (kw, lr, bs) in LEARNABILITY.items():
        cfg = ModelConfig(mt, **kw)
        model = build(cfg, len(acts), len(roles), prepared.max_len, seed=7)
        model, _ = train(model, collate(encode_for(cfg, prepared, "train")),
                         collate(encode_for(cfg, prepared, "validation")),
                         TrainConfig(lr, bs, max_epochs=50, patience=10, seed=7))
        m = evaluate(model, encode_for(cfg, prepared, "test"), prepared.normalizer)
        scores[mt] = (m.nap_f1, m.nrp_f1)
    secs = time.perf_counter() - t0
    floor_ok = all(a >= 0.90 and r >= 0.90 for a, r in scores.values())
    gaps = [scores[f][i] - scores[l][i] for f, l in (("mtlformer", "mtlformer_light"),
                                                      ("lstm", "lstm_light")) for i in (0, 1)]
    ok = floor_ok and max(gaps) <= 0.05 and secs < 600
    detail = ", ".join(f"{k} {a:.3f}/{r:.3f}" for k, (a, r) in scores.items())
    verdict(3, "learnability on the deterministic process", ok,
            f"NAP/NRP F1: {detail}; worst light gap {max(gaps):+.3f}; {secs:.0f}s")


def test_criterion_4_encoding_oracle(verdict):
    rng = np.random.default_rng(2024)
    mismatches, total = 0, 0
    for _ in range(100):
        raw = random_log(rng, int(rng.integers(3, 51)))
        log_ = add_boundaries(raw)
        norm = fit_normalizer(log_)
        oracle = enumerate_targets(raw)
        expected = sum(len(t) - 1 for t in log_.traces)
        pre = build_prefix_samples(log_, norm, prefix_width(log_))
        gram = build_ngram_samples(log_, norm, int(rng.choice([5, 10, 15])))
        total += len(oracle)
        if not len(pre) == len(gram) == len(oracle) == expected:
            mismatches += 1
            continue
        acts, roles = log_.activity_vocab, log_.role_vocab
        for p, g, o in zip(pre, gram, oracle):
            for s in (p, g):
                got = ((s.case_id, s.k), acts.label(s.target_activity), roles.label(s.target_role),
                       tuple(float(v) for v in s.target_raw))
                if got != (o[:2], o[2], o[3], o[4:]):
                    mismatches += 1
    verdict(4, "prefix/n-gram builders vs brute-force enumerator", mismatches == 0,
            f"100 logs, {total} samples, {mismatches} mismatches")


def test_criterion_5_selection_oracle(verdict):
    rng = np.random.default_rng(5)
    wrong = 0
    for _ in range(1000):
        n = int(rng.integers(1, 40))
        # coarse value sets force ties in both params and loss
        pairs = [(int(rng.choice([1, 2, 3, 5, 8, 13])) * 1000,
                  float(rng.choice([0.25, 0.5, 0.75, 1.0, 1.5]) + rng.integers(0, 2) * rng.random()))
                 for _ in range(n)]
        lam = float(rng.choice([0.0, 0.5, 1.0, 2.0, 5.0]))
        best, star = select_bruteforce(pairs, lam)
        rows = [type("R", (), dict(index=i, param_count=p, best_val_loss=v, best_val_raw=v,
                                   status="ok"))() for i, (p, v) in enumerate(pairs)]
        sel = select_model(rows, lam)
        if sel.chosen.index != best or sel.scores[star].score != 1.0:
            wrong += 1
    fixture = composite_scores([(100_000, 1.0), (50_000, 1.1)], lam=2.0)
    fixture_ok = fixture[0].score == 1.0 and abs(fixture[1].score - 0.7) < 1e-12
    verdict(5, "composite score selection vs exhaustive argmin", wrong == 0 and fixture_ok,
            f"1000 sets, {wrong} disagreements; S(M*)={fixture[0].score}, "
            f"S(0.5, 0.1, lambda=2)={fixture[1].score:.12f}")


def test_criterion_6_metric_oracles(verdict):
    rng = np.random.default_rng(6)
    f1_wrong = 0
    for _ in range(100):
        c = int(rng.integers(2, 10))
        n = int(rng.integers(1, 200))
        p, t = rng.integers(0, c, n), rng.integers(0, c, n)
        f1_wrong += f1_score(p, t, c) != f1_bruteforce(p.tolist(), t.tolist(), c)
    norm = Normalizer({"waiting": 3600.0, "duration": 7200.0, "remaining": 5e5},
                      {"waiting": 1800.0, "duration": 900.0, "remaining": 3e5})
    worst = 0.0
    for _ in range(100):
        f = str(rng.choice(["waiting", "duration", "remaining"]))
        a, b = rng.normal(size=64), rng.normal(size=64)
        worst = max(worst, abs(mae_days(a, b, norm, f) - mae_days_oracle(a, b, norm.mean[f],
                                                                        norm.std[f])))
    verdict(6, "F1 and MAE oracles", f1_wrong == 0 and worst <= 1e-12,
            f"F1 exact mismatches {f1_wrong}/100; worst MAE diff {worst:.1e} days")


def test_criterion_7_gridsearch_determinism(verdict, tmp_path):
    data = tmp_path / "log.csv"
    write_csv(deterministic_log(40, seed=11), data)
    identical = []
    for mt in ("mtlformer", "lstm"):
        outs = []
        for run in ("a", "b"):
            out = tmp_path / f"{mt}_{run}"
            assert main(["gridsearch", "--data", str(data), "--model-type", mt,
                         "--grid-limit", "4", "--max-epochs", "8", "--seed", "42",
                         "--out", str(out)]) == 0
            outs.append(out)
        a, b = outs
        files = ["results.csv"] + [f"checkpoints/cand_{i:04d}.ckpt" for i in range(4)]
        identical += [(a / f).read_bytes() == (b / f).read_bytes() for f in files]
    verdict(7, "gridsearch --grid-limit 4 is byte-reproducible", all(identical),
            f"{sum(identical)}/{len(identical)} files identical across two runs")


P2P = os.environ.get("LEANPPM_P2P_CSV")


@pytest.mark.skipif(not P2P, reason="optional: set LEANPPM_P2P_CSV to the purchase-to-pay log")
def test_criterion_8_p2p_extended_run(verdict, tmp_path):
    limit = os.environ.get("LEANPPM_P2P_GRID_LIMIT")
    extra = ["--grid-limit", limit] if limit else []
    params = {}
    for mt in ("mtlformer", "mtlformer_light"):
        out = tmp_path / mt
        assert main(["gridsearch", "--data", P2P, "--model-type", mt, "--out", str(out),
                     "--jobs", str(os.cpu_count() or 1), *extra]) == 0
        assert main(["select", "--grid-dir", str(out)]) == 0
        assert main(["evaluate", "--run-dir", str(out / "best")]) == 0
        params[mt] = json.loads((out / "best" / "metrics.json").read_text())
    m = params["mtlformer"]["metrics"]
    ratio = params["mtlformer_light"]["params"] / params["mtlformer"]["params"]
    ok = abs(m["nap_f1"] - 0.84) <= 0.07 and abs(m["nrp_f1"] - 0.93) <= 0.05 and ratio <= 0.20
    verdict(8, "P2P extended run", ok,
            f"NAP {m['nap_f1']:.3f}, NRP {m['nrp_f1']:.3f}, RTP {m['rtp_mae']:.2f} days, "
            f"light/full params {ratio:.3f}")
