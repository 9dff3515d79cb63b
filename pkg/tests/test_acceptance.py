"""Acceptance suite: one test per criterion, each printing a pass/fail line.

The trend criteria share one calibration sweep: MLP [100, 64, 32, 16, 4] on
4-class Gaussian blobs, seeds 0-4, every method at d = 0.02 and d = 0.10.
"""

import json
import time

import numpy as np
import pytest

from conftest import record
from n2nskip import checkpoint
from n2nskip import connectivity as conn
from n2nskip.experiment import calibration_config, compare, load_report, run_experiment
from n2nskip.net import NetworkSpec, build_network
from n2nskip.pruning import csp_prune, random_prune
from n2nskip.skipgen import SkipBudget, apply_masks, density, insert_n2nskip
from netutil import fd_check, random_small_net
from oracles import count_components, expm_taylor, random_graph

SEEDS = (0, 1, 2, 3, 4)
PAIRS = (("n2nskip-rp", "rp"), ("n2nskip-csp", "csp"))


@pytest.fixture(scope="module")
def calibration(tmp_path_factory):
    out = tmp_path_factory.mktemp("calibration")
    cfg = calibration_config(
        methods=("baseline", "rp", "n2nskip-rp", "csp", "n2nskip-csp"), densities=(0.02, 0.10)
    )
    start = time.perf_counter()
    run_experiment(cfg, out=out)
    return cfg, load_report(out / cfg.name), out, time.perf_counter() - start


def test_criterion_1_gradients():
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst = 0.0
    for i in range(50):
        net = random_small_net(rng, with_skips=i % 2 == 0, seed=i)
        x = rng.normal(size=(3, net.layer_dims[0]))
        y = rng.integers(0, net.layer_dims[-1], size=3)
        worst = max(worst, fd_check(net, x, y)[0])
    elapsed = time.perf_counter() - start
    ok = worst < 1e-5 and elapsed < 60
    record(1, ok, f"max relative error {worst:.2e} over 50 nets (25 with skips), {elapsed:.1f}s")
    assert ok


def test_criterion_2_spectral_oracle():
    rng = np.random.default_rng(7)
    start = time.perf_counter()
    worst_h, worst_rec = 0.0, 0.0
    for _ in range(100):
        n = int(rng.integers(2, 31))
        W = random_graph(rng, n, float(rng.uniform(0.1, 0.6)))
        L = conn.graph_laplacian(W)
        spec = conn.eig_sym(L)
        U, lam = spec.eigenvectors, spec.eigenvalues
        norm = max(np.linalg.norm(L), 1e-300)
        worst_rec = max(worst_rec, np.linalg.norm(U * lam @ U.T - L) / norm)
        t = float(rng.uniform(0.0, 3.0))
        worst_h = max(worst_h, np.abs(conn.heat_matrix(spec, t) - expm_taylor(-t * L)).max())
    p3 = conn.eig_sym(conn.graph_laplacian(np.array([[0.0, 1, 0], [1, 0, 1], [0, 1, 0]])))
    p3_err = float(np.abs(p3.eigenvalues - [0.0, 1.0, 3.0]).max())
    elapsed = time.perf_counter() - start
    ok = worst_h < 1e-8 and worst_rec < 1e-9 and p3_err < 1e-10 and elapsed < 60
    record(
        2,
        ok,
        f"heat vs series max {worst_h:.1e}, reconstruction {worst_rec:.1e}*|L|, "
        f"P3 eigenvalue error {p3_err:.1e}, {elapsed:.1f}s",
    )
    assert ok


def test_criterion_3_heat_invariants():
    rng = np.random.default_rng(11)
    worst = {"H0": 0.0, "L1": 0.0, "semigroup": 0.0, "trace": 0.0, "conservation": 0.0}
    mismatches = 0
    for _ in range(50):
        n = int(rng.integers(2, 31))
        W = random_graph(rng, n, float(rng.uniform(0.02, 0.3)))  # sparse, often disconnected
        L = conn.graph_laplacian(W)
        spec = conn.eig_sym(L)
        t1, t2 = (float(v) for v in rng.uniform(0.0, 2.0, size=2))
        H1, H2 = conn.heat_matrix(spec, t1), conn.heat_matrix(spec, t2)
        A = (rng.random(n) < 0.4).astype(float)
        worst["H0"] = max(worst["H0"], np.abs(conn.heat_matrix(spec, 0.0) - np.eye(n)).max())
        worst["L1"] = max(worst["L1"], np.linalg.norm(L @ np.ones(n)) / max(np.linalg.norm(L), 1.0))
        worst["semigroup"] = max(
            worst["semigroup"], np.abs(H1 @ H2 - conn.heat_matrix(spec, t1 + t2)).max()
        )
        worst["trace"] = max(worst["trace"], abs(np.trace(H1) - np.exp(-t1 * spec.eigenvalues).sum()))
        S = conn.heat_signature(H1, A, t1)
        worst["conservation"] = max(worst["conservation"], abs(S.values.sum() - A.sum()))
        mismatches += conn.count_near_zero(spec) != count_components(W)
    ok = (
        worst["H0"] < 1e-9
        and worst["L1"] < 1e-10
        and all(worst[k] < 1e-8 for k in ("semigroup", "trace", "conservation"))
        and mismatches == 0
    )
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    record(3, ok, f"{detail}; zero-eigenvalue count != components in {mismatches}/50 graphs")
    assert ok


def test_criterion_4_budget_conservation():
    net = build_network(NetworkSpec([100, 64, 32, 16, 4], seed=0))
    rng = np.random.default_rng(0)
    x, y = rng.normal(size=(128, 100)), rng.integers(0, 4, size=128)
    total = net.reference_params
    failures, worst = [], 0.0
    for d in (0.10, 0.05, 0.02):
        for origin in ("rp", "csp"):
            for seed in SEEDS:
                masks = random_prune(net, d, seed) if origin == "rp" else csp_prune(net, x, y, d)
                before = checkpoint.from_dict(json.loads(checkpoint.dumps(apply_masks(net, masks))))
                after = checkpoint.from_dict(
                    json.loads(checkpoint.dumps(insert_n2nskip(net, masks, SkipBudget(d, 0.5), seed)))
                )
                gap = abs(density(after) - density(before))
                worst = max(worst, gap * total)
                if gap > len(after.skips) / total:
                    failures.append((d, origin, seed))
    ok = not failures
    record(4, ok, f"max |nnz after - nnz before| = {worst:.0f} over 30 checkpoint pairs; failures {failures}")
    assert ok


def _by_seed(report, method, d):
    return {r.seed: r.metrics for r in report.select(method, d)}


def test_criterion_5_accuracy_trend(calibration):
    _, report, _, elapsed = calibration
    results, gaps = [], {}
    for skip, seq in PAIRS:
        a, b = _by_seed(report, skip, 0.02), _by_seed(report, seq, 0.02)
        mean_a = np.mean([a[s]["test_acc"] for s in SEEDS])
        mean_b = np.mean([b[s]["test_acc"] for s in SEEDS])
        wins = sum(a[s]["test_acc"] > b[s]["test_acc"] for s in SEEDS)
        results.append((skip, seq, mean_a, mean_b, wins, mean_a > mean_b and wins >= 4))
        for d in (0.02, 0.10):
            a, b = _by_seed(report, skip, d), _by_seed(report, seq, d)
            gaps[(seq, d)] = np.mean([a[s]["test_acc"] - b[s]["test_acc"] for s in SEEDS])
    gap_ok = any(gaps[(seq, 0.02)] > gaps[(seq, 0.10)] for _, seq in PAIRS)
    ok = all(r[-1] for r in results) and gap_ok and elapsed < 1800
    parts = [f"{a} {ma:.3f} vs {b} {mb:.3f} ({w}/5 wins)" for a, b, ma, mb, w, _ in results]
    parts.append(
        "gap d=0.02 vs 0.10: "
        + ", ".join(f"{seq} {gaps[(seq, 0.02)]:+.3f} vs {gaps[(seq, 0.10)]:+.3f}" for _, seq in PAIRS)
    )
    record(5, ok, "; ".join(parts) + f"; sweep {elapsed:.0f}s")
    assert ok


def test_criterion_6_signature_distance(calibration):
    _, report, _, _ = calibration
    ok, parts = True, []
    for skip, seq in PAIRS:
        s = compare(report, report, (skip, 0.02), (seq, 0.02))
        win_ratios = [r for r, dF in zip(s.F_ratio, s.F_delta) if dF < 0]
        pair_ok = s.F_wins >= 4 and all(r < 0.5 for r in win_ratios)
        ok &= pair_ok
        parts.append(
            f"{skip} lower F in {s.F_wins}/5 seeds, ratios "
            + "/".join(f"{r:.2f}" for r in s.F_ratio)
            + " (need < 0.5)"
        )
    record(6, ok, "; ".join(parts))
    assert ok


def test_criterion_7_saturation(calibration):
    _, report, _, _ = calibration
    inf = float("inf")

    def sat(m):
        return inf if m["saturation_time"] is None else m["saturation_time"]

    ok, parts = True, []
    for d in (0.02, 0.10):
        for skip, seq in PAIRS:
            a, b = _by_seed(report, skip, d), _by_seed(report, seq, d)
            no_worse = sum(sat(a[s]) <= sat(b[s]) for s in SEEDS)
            ok &= no_worse >= 4
            parts.append(f"{skip}<={seq}@{d:g} in {no_worse}/5")
    ref_first = all(
        (inf if r.metrics["reference_saturation_time"] is None else r.metrics["reference_saturation_time"])
        <= sat(r.metrics)
        for r in report.runs
        if r.method != "baseline"
    )
    ok &= ref_first
    parts.append(f"reference saturates no later than every pruned net: {ref_first}")
    record(7, ok, "; ".join(parts))
    assert ok


def test_criterion_8_determinism(calibration, tmp_path):
    cfg, _, out, _ = calibration
    run_experiment(cfg, out=tmp_path)
    first, second = out / cfg.name, tmp_path / cfg.name
    names = sorted(p.relative_to(first) for p in first.rglob("metrics.json"))
    diffs = [n for n in names if (first / n).read_bytes() != (second / n).read_bytes()]
    same_manifest = (first / "manifest.json").read_bytes() == (second / "manifest.json").read_bytes()
    ok = not diffs and same_manifest and len(names) == 45
    record(8, ok, f"{len(names)} metrics.json files re-run, {len(diffs)} differ; manifest identical: {same_manifest}")
    assert ok
