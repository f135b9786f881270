"""End-to-end acceptance checks, one test per criterion.

Each test prints ``CRITERION <n> PASS|FAIL: <detail>``; the lines are also
collected and repeated in the pytest terminal summary.
"""

import json
import math
import time

import numpy as np
import pytest

from orars.cli import main
from orars.core import split_folds
from orars.io import synth_dataset, write_csv
from orars.scoring import AnchorScores, score_with_preference
from orars.simulation import SimConfig, analytic_xi, monte_carlo_xi, simulate, summarize
from orars.sorars import sorars_predict

from oracles import brute_rank_prediction, gradient_check

RESULTS = []


def record(n: int, ok: bool, detail: str) -> None:
    line = f"CRITERION {n} {'PASS' if ok else 'FAIL'}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def snapshot(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.is_file()}


def test_criterion_1_uniform_gain_band():
    start = time.perf_counter()
    s = summarize(simulate(SimConfig(N=100, M=50, C=1000, error_dist="uniform", repeats=20, seed=0)))
    wall = time.perf_counter() - start
    gain = s["mean_mae_gain"]
    record(1, 7.5 <= gain <= 10.0 and wall < 60,
           f"mean MAE gain {gain:.4f} (band [7.5, 10]), runtime {wall:.2f}s (< 60s)")


def test_criterion_2_regressor_mae_closed_form():
    r = simulate(SimConfig(N=100, M=50, C=100_000, repeats=1, seed=0))[0]
    rel = abs(r.mae_reg - 25.0) / 25.0
    record(2, rel <= 0.02, f"MAE_reg {r.mae_reg:.4f} vs 25, relative error {rel:.2e} (<= 2%)")


def test_criterion_3_xi_verification():
    diffs = {}
    for i, M in enumerate((10, 25, 50)):
        diffs[M] = abs(analytic_xi(100, M) - monte_carlo_xi(100, M, "uniform", 1_000_000, seed=i))
    exact = analytic_xi(100, 50) == 0.25
    worst = max(diffs.values())
    record(3, worst <= 0.005 and exact,
           "max |analytic - MC| " + f"{worst:.5f} (<= 0.005) over M=10,25,50; xi(100,50)={analytic_xi(100, 50)}")


def test_criterion_4_discrepancy_report(tmp_path):
    assert main(["simulate", "--N", "100", "--M", "50", "--C", "1000", "--repeats", "20", "--seed", "0",
                 "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    side = summary["analytic"]
    emp = summary["empirical"]
    present = all(k in side for k in ("mae_sorars_xi_substituted", "mae_sorars_printed")) and "mean_mae_sorars" in emp
    substituted_ok = math.isclose(side["mae_sorars_xi_substituted"], 12.5, rel_tol=1e-12)
    rows = [line.split(",") for line in (tmp_path / "simulation.csv").read_text().splitlines()[1:]]
    worst = max(abs(float(g) - (float(a) - float(b))) for _, a, b, g, _ in rows)
    record(4, present and substituted_ok and worst <= 1e-12,
           f"xi*N/2={side['mae_sorars_xi_substituted']}, printed={side['mae_sorars_printed']:.4f}, "
           f"empirical={emp['mean_mae_sorars']:.4f}; max identity residual {worst:.1e}")


def test_criterion_5_normal_error_stability():
    worst = 1.0
    for i, M in enumerate((5, 10, 20)):
        for j, C in enumerate((500, 1000, 2000)):
            frac = summarize(simulate(SimConfig(M=M, C=C, error_dist="normal", repeats=20,
                                                seed=100 + 3 * i + j)))["fraction_gain_positive"]
            worst = min(worst, frac)
    record(5, worst >= 0.95, f"minimum fraction of positive-gain repeats over 9 cells {worst:.2f} (>= 0.95)")


def test_criterion_6_gradient_correctness():
    worst = max(gradient_check(seed, kind, n=5) for seed in range(10) for kind in ("mse", "weighted_ce"))
    record(6, worst < 1e-4, f"max relative gradient error {worst:.2e} over 10 seeds x 2 losses (< 1e-4)")


def test_criterion_7_scoring_oracle():
    rng = np.random.default_rng(7)
    mismatches = 0
    for _ in range(1000):
        n = int(rng.integers(1, 60))
        anchors = rng.normal(0, 10, n)
        s = rng.normal(0, 12)
        p = (s > anchors).astype(float)
        brute = brute_rank_prediction([s], anchors, anchors)[0]
        mismatches += score_with_preference(p, anchors) != brute
    violations = 0
    for _ in range(10_000):
        n = int(rng.integers(1, 40))
        anchors = AnchorScores.from_labels(rng.normal(0, 5, n))
        p = rng.random(n)
        q = np.minimum(p + rng.random(n) * (rng.random(n) < 0.5), 1.0)
        a, b = score_with_preference(p, anchors), score_with_preference(q, anchors)
        lo, hi = anchors.sorted_scores[0], anchors.sorted_scores[-1]
        violations += not (b >= a and lo <= a <= hi and lo <= b <= hi)
    record(7, mismatches == 0 and violations == 0,
           f"{mismatches} oracle mismatches / 1000, {violations} invariant violations / 10000")


def test_criterion_8_sorars_perfect_regressor():
    synth = synth_dataset("linear", n=200, dims=3, noise=0.0, seed=8)
    ds = synth.dataset
    assert np.unique(ds.y).size == 200

    def truth(X):
        return np.asarray(X) @ synth.coef + synth.intercept

    bad = 0
    total = 0
    for fold in split_folds(200, 5, seed=8):
        X_a, y_a = ds.X[fold.train], ds.y[fold.train]
        expected = brute_rank_prediction(truth(ds.X[fold.test]), truth(X_a), y_a)
        got = [sorars_predict(truth, x, X_a, y_a) for x in ds.X[fold.test]]
        bad += int(np.sum(np.asarray(got) != expected))
        total += len(got)
    record(8, bad == 0, f"{bad} mismatches over {total} test samples")


@pytest.fixture(scope="module")
def compare_runs(tmp_path_factory):
    out = tmp_path_factory.mktemp("compare")
    args = ["compare", "--synth", "monotone_noisy", "--n", "300", "--noise", "0.05", "--seed", "0",
            "--out", str(out)]
    runs = []
    for _ in range(2):
        start = time.perf_counter()
        code = main(args)
        runs.append((code, time.perf_counter() - start, snapshot(out)))
    return runs


@pytest.mark.slow
def test_criterion_9_pipeline_learnability(compare_runs):
    (code_a, wall_a, files_a), (code_b, wall_b, files_b) = compare_runs
    report = json.loads(files_a["comparison.json"])
    orars_mae = report["methods"]["orars"]["mean_mae"]
    sigma = 0.05  # features are U(0, 1), so the clean target spans 1
    ok = (code_a == code_b == 0 and orars_mae < 3 * sigma and files_a == files_b
          and max(wall_a, wall_b) < 600)
    record(9, ok, f"ORARS mean MAE {orars_mae:.4f} (< {3 * sigma:.2f}); compare runs {wall_a:.0f}s and "
                  f"{wall_b:.0f}s (< 600s); identical outputs {files_a == files_b}")


@pytest.mark.slow
def test_criterion_10_determinism(tmp_path, compare_runs):
    data = tmp_path / "d.csv"
    conf = tmp_path / "fast.conf"
    conf.write_text("grnn_grid = fixed\ngrnn_epochs = 40\norars_epochs = 2\nk = 3\n")
    write_csv(synth_dataset("linear", n=60, dims=2, seed=1).dataset, data)
    commands = {
        "simulate": ["simulate", "--M", "30", "--C", "800", "--repeats", "5", "--seed", "1"],
        "grid": ["grid", "--C-values", "100", "500", "--M-values", "5", "20", "--repeats", "3", "--seed", "1"],
        "verify-analytic": ["verify-analytic", "--trials", "200000", "--C", "2000", "--repeats", "2",
                            "--seed", "1"],
        "train-grnn": ["train", "--data", str(data), "--method", "grnn", "--seed", "1", "--config", str(conf)],
        "train-sorars": ["train", "--data", str(data), "--method", "sorars", "--seed", "1", "--config", str(conf)],
        "train-orars": ["train", "--data", str(data), "--method", "orars", "--seed", "1", "--config", str(conf)],
    }
    differing = []
    for name, argv in commands.items():
        out = tmp_path / name
        assert main(argv + ["--out", str(out)]) == 0
        first = snapshot(out)
        assert main(argv + ["--out", str(out)]) == 0
        if snapshot(out) != first:
            differing.append(name)
    for method in ("grnn", "sorars", "orars"):
        ck = tmp_path / f"train-{method}" / "model.npz"
        out = tmp_path / f"predict-{method}"
        argv = ["predict", "--data", str(data), "--checkpoint", str(ck), "--out", str(out)]
        assert main(argv) == 0
        first = snapshot(out)
        assert main(argv) == 0
        if snapshot(out) != first:
            differing.append(f"predict-{method}")
    if compare_runs[0][2] != compare_runs[1][2]:
        differing.append("compare")
    n = len(commands) + 4
    record(10, not differing, f"{n - len(differing)}/{n} command reruns bitwise identical"
                              + (f"; differing: {', '.join(differing)}" if differing else ""))
