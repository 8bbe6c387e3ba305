"""Exit criteria. Each test records one PASS/FAIL line, printed after the run."""

import json
import subprocess
import sys
import time

import numpy as np
import pytest

from shotmetric import Episode, HeadConfig, decompose, gain_table
from shotmetric.frn import (
    check_invariances,
    frn_logit_cosine,
    frn_logit_full,
    frn_logit_simplified,
    frn_reconstruct,
    rel_error,
    ridge_coefficient,
    ridge_weights,
)
from shotmetric.heads import cosine_proto_logits, softmax
from shotmetric.sensitivity import AccuracyGrid, format_grid_csv, load_published_grid
from shotmetric.synth import consistency_rate, evaluate, reference_spec

RESULTS = []
GOLDEN_TOL = 0.03

# summary table of sensitivity scores, (backbone, dataset) -> model -> score
SUMMARY_SCORES = {
    ("conv4", "cub"): {"proto": 9.33, "cosine_proto": 1.60, "feat": 2.70, "cosine_feat": 0.72,
                       "frn": 6.71, "cosine_frn": 1.29},
    ("conv4", "inat"): {"proto": 14.86, "cosine_proto": 2.13, "feat": 4.16, "cosine_feat": 2.43,
                        "frn": 5.46, "cosine_frn": 2.12},
    ("resnet12", "min"): {"proto": 1.21, "cosine_proto": 1.09, "feat": 2.13, "cosine_feat": 0.19,
                          "frn": 1.35, "cosine_frn": 0.30},
}


def record(name, ok, detail):
    RESULTS.append(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, detail


def test_ac1_golden_sensitivity():
    t0 = time.perf_counter()
    proto = decompose(load_published_grid("inat_conv4__proto").grid)
    checks = [
        abs(proto.score - 14.86) <= GOLDEN_TOL,
        np.all(np.abs(proto.model_bias - [0.47, 1.99, 0.16, -2.61]) <= GOLDEN_TOL),
        np.all(np.abs(proto.row_means - [49.04, 63.95, 74.17, 79.86, 82.76, 84.30]) <= GOLDEN_TOL),
    ]
    cases = [
        ("inat_conv4__cosine_proto", ("conv4", "inat", "cosine_proto"), 2.13),
        ("cub_conv4__frn", ("conv4", "cub", "frn"), 6.71),
        ("cub_conv4__cosine_frn", ("conv4", "cub", "cosine_frn"), 1.29),
        ("min_resnet12__cosine_feat", ("resnet12", "min", "cosine_feat"), 0.19),
        ("inat_conv4__proto", ("conv4", "inat", "proto"), 14.86),
    ]
    scores = {}
    for name, (bb, ds, model), expected in cases:
        s = decompose(load_published_grid(name).grid).score
        scores[name] = s
        checks.append(abs(s - expected) <= GOLDEN_TOL)
        checks.append(abs(s - SUMMARY_SCORES[(bb, ds)][model]) <= GOLDEN_TOL)
    # every bundled grid of the three summarised settings
    for (bb, ds), models in SUMMARY_SCORES.items():
        for model, expected in models.items():
            s = decompose(load_published_grid(f"{ds}_{bb}__{model}").grid).score
            checks.append(abs(s - expected) <= GOLDEN_TOL)
    elapsed = time.perf_counter() - t0
    checks.append(elapsed < 1.0)
    detail = ", ".join(f"{k}={v:.3f}" for k, v in scores.items()) + f" ({elapsed * 1e3:.1f} ms)"
    record("AC1 golden sensitivity", all(checks), detail)


def test_ac2_gain_table():
    t0 = time.perf_counter()
    gains = gain_table(
        load_published_grid("inat_conv4__proto").grid,
        load_published_grid("inat_conv4__cosine_proto").grid,
    )
    published = np.array([13.33, 6.65, 2.48, 0.67, -0.07, -0.39])
    elapsed = time.perf_counter() - t0
    ok = bool(np.all(np.abs(gains - published) <= GOLDEN_TOL)) and elapsed < 1.0
    record("AC2 gain table", ok, "gains=" + " ".join(f"{g:+.3f}" for g in gains))


def _instances(rng, count):
    for _ in range(count):
        n_s = int(rng.integers(1, 41))
        d = int(rng.integers(1, 41))
        m_q = int(rng.integers(1, 6))
        lam = float(10 ** rng.uniform(-3, 1))
        yield rng.standard_normal((n_s, d)), rng.standard_normal((m_q, d)), lam


def test_ac3_woodbury_branches():
    t0 = time.perf_counter()
    worst = 0.0
    for s, q, lam in _instances(np.random.default_rng(303), 1000):
        rho = ridge_coefficient(s, lam)
        worst = max(worst, rel_error(ridge_weights(s, q, rho, "gram"),
                                     ridge_weights(s, q, rho, "covariance")))
    elapsed = time.perf_counter() - t0
    record("AC3 Woodbury branch agreement", worst <= 1e-9 and elapsed < 10,
           f"worst rel err {worst:.2e} over 1000 instances ({elapsed:.2f} s)")


def test_ac4_expansion_identity():
    t0 = time.perf_counter()
    worst = 0.0
    for s, q, lam in _instances(np.random.default_rng(404), 1000):
        cfg = HeadConfig(frn_lambda=lam)
        rec = frn_reconstruct(s, q, cfg)
        direct = -float(np.sum((rec.reconstruction - q) ** 2))
        worst = max(worst, rel_error(frn_logit_full(s, q, cfg), direct))
    elapsed = time.perf_counter() - t0
    record("AC4 expansion identity", worst <= 1e-8 and elapsed < 10,
           f"worst rel err {worst:.2e} over 1000 instances ({elapsed:.2f} s)")


def test_ac5_invariances():
    t0 = time.perf_counter()
    frob = check_invariances(100, 7, "frobenius")
    legacy = check_invariances(100, 7, "legacy", alpha=2.0)
    elapsed = time.perf_counter() - t0
    ok = frob.all_passed and not legacy.scale.passed and elapsed < 5
    detail = ", ".join(f"{p.name}={p.worst:.1e}" for p in frob.properties)
    detail += f"; legacy scale worst={legacy.scale.worst:.2f} ({elapsed:.2f} s)"
    record("AC5 reconstruction invariances", ok, detail)


def test_ac6_head_contracts():
    rng = np.random.default_rng(606)
    n = 1000
    cos_ok = simp_ok = frnc_ok = soft_ok = prop_ok = iff_ok = True
    for _ in range(n):
        way, d = int(rng.integers(2, 8)), int(rng.integers(1, 20))
        sigma = float(10 ** rng.uniform(-2, 2))
        ep = Episode([rng.standard_normal((int(rng.integers(1, 5)), d)) for _ in range(way)],
                     rng.standard_normal((int(rng.integers(1, 6)), d)))
        z = cosine_proto_logits(ep, HeadConfig("proto_cosine", temperature=sigma)).scores
        cos_ok &= bool(np.all(np.abs(z) <= sigma))
        p = softmax(rng.normal(0, 30, size=(4, way)), axis=1)
        soft_ok &= bool(np.all(np.abs(p.sum(axis=1) - 1) <= 1e-9))

        s = rng.standard_normal((int(rng.integers(1, 12)), d))
        q = rng.standard_normal((int(rng.integers(1, 6)), d))
        lam = float(10 ** rng.uniform(-3, 1))
        simp_ok &= frn_logit_simplified(s, q, HeadConfig(frn_lambda=lam)) >= 0
        c = frn_logit_cosine(s, q)
        frnc_ok &= 0.0 <= c <= 1.0 + 1e-15
        # proportional covariances: scaled copy, or rows rotated within the pool
        scale = float(10 ** rng.uniform(-2, 2))
        prop_ok &= abs(frn_logit_cosine(s, scale * s) - 1.0) <= 1e-12
        u, _ = np.linalg.qr(rng.standard_normal((s.shape[0], s.shape[0])))
        prop_ok &= abs(frn_logit_cosine(s, u @ s) - 1.0) <= 1e-12
        # non-proportional: a rank-one query pool against a higher-rank support
        if np.linalg.matrix_rank(s) >= 2:
            iff_ok &= frn_logit_cosine(s, q[:1]) < 1.0 - 1e-9
    ok = cos_ok and simp_ok and frnc_ok and soft_ok and prop_ok and iff_ok
    detail = (f"cosine bound={cos_ok}, simplified>=0={simp_ok}, cosine FRN in [0,1]={frnc_ok}, "
              f"=1 on proportional={prop_ok}, <1 otherwise={iff_ok}, softmax sums={soft_ok}")
    record("AC6 head contracts (1000 instances)", ok, detail)


def test_ac7_decomposition_algebra():
    rng = np.random.default_rng(707)
    t0 = time.perf_counter()
    worst_rec = worst_abs = 0.0
    for _ in range(100):
        t, j = int(rng.integers(2, 9)), int(rng.integers(2, 9))
        v = rng.uniform(35, 65, size=(t, j))
        g = AccuracyGrid(v, tuple(range(1, t + 1)), tuple(range(1, j + 1)))
        r = decompose(g)
        rebuilt = r.row_means[:, None] + r.model_bias[None, :] + r.heatmap
        worst_rec = max(worst_rec, float(np.max(np.abs(rebuilt - v))))
        shifted = v + rng.uniform(-30, 30, t)[:, None] + rng.uniform(-5, 5, j)[None, :]
        r2 = decompose(AccuracyGrid(shifted, g.test_shots, g.train_shots))
        worst_abs = max(worst_abs, float(np.max(np.abs(r2.heatmap - r.heatmap))))
    elapsed = time.perf_counter() - t0
    ok = worst_rec <= 1e-12 and worst_abs <= 1e-9 and elapsed < 1
    record("AC7 decomposition algebra", ok,
           f"reconstruction {worst_rec:.1e}, bias absorption {worst_abs:.1e} ({elapsed * 1e3:.0f} ms)")


def _agreements(seed):
    spec = reference_spec(seed)
    e = consistency_rate(spec, HeadConfig("proto_euclidean"), 1, 15, 1000, seed)
    c = consistency_rate(spec, HeadConfig("proto_cosine"), 1, 15, 1000, seed)
    return e, c


def test_ac8_consistency_direction():
    t0 = time.perf_counter()
    e11, c11 = _agreements(11)
    wins = sum(c > e for e, c in map(_agreements, range(101, 111)))
    elapsed = time.perf_counter() - t0
    ok = c11 > e11 and wins >= 8 and elapsed < 30
    record("AC8 consistency (cosine > Euclidean)", ok,
           f"seed 11: euclid {e11:.3f} cosine {c11:.3f}; cosine wins {wins}/10 seeds ({elapsed:.1f} s)")


def test_ac9_determinism(tmp_path):
    grid = tmp_path / "grid.csv"
    grid.write_text(format_grid_csv(load_published_grid("inat_conv4__proto").grid))
    cos_grid = tmp_path / "cos.csv"
    cos_grid.write_text(format_grid_csv(load_published_grid("inat_conv4__cosine_proto").grid))
    rng = np.random.default_rng(9)
    ep = tmp_path / "ep.json"
    ep.write_text(json.dumps({
        "classes": [{"id": str(c), "support": rng.standard_normal((2, 5)).tolist()} for c in range(3)],
        "query": rng.standard_normal((4, 5)).tolist(),
    }))
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"way": 5, "dim": 16, "mean_norm_range": [0.5, 2.0],
                                "min_angle_deg": 45, "seed": 11}))
    invocations = [
        ["classify", str(ep), "--head", "frn_full"],
        ["sensitivity", str(grid), "--pair", str(grid), str(cos_grid)],
        ["verify", "--trials", "5", "--regularizer", "legacy"],
        ["consistency", str(spec), "--trials", "50", "--json"],
    ]
    same = True
    for args in invocations:
        outs = [subprocess.run([sys.executable, "-m", "shotmetric", *args],
                               capture_output=True).stdout for _ in range(2)]
        same &= outs[0] == outs[1] and len(outs[0]) > 0

    ref = reference_spec()
    serial = evaluate(ref, HeadConfig("proto_cosine"), 1, 15, 200, 11, workers=1)
    parallel = evaluate(ref, HeadConfig("proto_cosine"), 1, 15, 200, 11, workers=4)
    record("AC9 determinism", same and serial == parallel,
           f"CLI byte-identical={same}, serial==parallel={serial == parallel}")
