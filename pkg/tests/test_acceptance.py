"""Acceptance suite: one test per criterion, one PASS/FAIL line per criterion.

Run on its own with ``python3 tests/test_acceptance.py`` or as part of
``pytest``. The summary lines are printed at the end of the session.
"""

import json
import math
import time
import warnings

import numpy as np
import pytest
from scipy import linalg

from skewkrr.cli import main as cli_main
from skewkrr.dac import fit_dac, predict_dac
from skewkrr.estimators import resolve_hyperparameters
from skewkrr.harness import (
    ExperimentConfig,
    _strip_timing,
    evaluation_points,
    run_experiment,
    stratified_split,
)
from skewkrr.kernels import KernelSpec, gram, regularized_solve
from skewkrr.krr import Dataset, fit, median_bandwidth, predict
from skewkrr.partition import classical_plan, copy_count, make_slices, oversample_plan, slice_count
from skewkrr._rng import derive_seed
from skewkrr.synthdata import SynthSpec, generate, peak

ACCEPTANCE_RESULTS = []

MASTER_SEED = 0


def record(number, passed, detail, seconds=None, status=None):
    status = status or ("PASS" if passed else "FAIL")
    timing = "" if seconds is None else f" [{seconds:.1f}s]"
    ACCEPTANCE_RESULTS.append((number, f"{status} criterion {number}: {detail}{timing}"))


def info(number, detail):
    ACCEPTANCE_RESULTS.append((number, f"INFO criterion {number}: {detail}"))


# ----------------------------------------------------------------- shared bench

BENCH_TAUS = (0.2, 0.5, 1.0)


def skew_bench(bandwidth_rule):
    """Uni-peak, d=1, n=2000, noise 0.1, k=20, 20 paired replicates."""
    cfg = ExperimentConfig(
        estimators=["classical_dac", "oversampled_dac"],
        n_values=[2000], d_values=[1], k_values=[20],
        slicing_rules=["scott", "fixed:3"], tau=list(BENCH_TAUS),
        replicates=20, master_seed=MASTER_SEED, noise_sd=0.1, shape="uni_peak",
        bandwidth_rule=bandwidth_rule,
    )
    start = time.perf_counter()
    report = run_experiment(cfg)
    seconds = time.perf_counter() - start
    recs = {(r["estimator"], r["slicing"], r["tau"]): r for r in report.records}
    assert all(r["n_failed"] == 0 for r in report.records), report.failures
    return recs, seconds


@pytest.fixture(scope="module")
def bench():
    return skew_bench("median")


@pytest.fixture(scope="module")
def bench_holdout():
    return skew_bench("holdout")


def rescue_stats(recs):
    classical = np.array(recs[("classical_dac", None, None)]["mses"])
    over = np.array(recs[("oversampled_dac", "scott", 1.0)]["mses"])
    return classical.mean(), over.mean(), int(np.sum(over < classical))


def tau_stats(recs):
    cells = [recs[("oversampled_dac", "scott", t)] for t in BENCH_TAUS]
    means = [c["mean_mse"] for c in cells]
    ses = [c["se_mse"] for c in cells]
    ok = all(means[i + 1] <= means[i] + max(ses[i], ses[i + 1]) for i in range(len(cells) - 1))
    return ok, means, ses


def slicing_stats(recs):
    scott = recs[("oversampled_dac", "scott", 1.0)]
    fixed3 = recs[("oversampled_dac", "fixed:3", 1.0)]
    ok = scott["mean_mse"] <= fixed3["mean_mse"] + fixed3["se_mse"]
    return ok, scott, fixed3


def fmt(values):
    return "(" + ", ".join(f"{v:.3g}" for v in values) + ")"


# ------------------------------------------------------------------- criteria


def test_criterion_01_reduction_identity():
    start = time.perf_counter()
    worst = 0.0
    for n in (50, 500):
        for d in (1, 2):
            data, _ = generate(SynthSpec(n=n, d=d, seed=derive_seed(MASTER_SEED, n, d)))
            spec, lam = resolve_hyperparameters(data, seed=1)
            Xeval = evaluation_points(d, 500, seed=2)
            full = predict(fit(data, spec, lam), Xeval)
            dac = predict_dac(fit_dac(data, classical_plan(n, 1, seed=3), spec, lam), Xeval)
            single = make_slices(data.y, "fixed:1")
            odac = predict_dac(fit_dac(data, oversample_plan(data.y, single, 1.0, 1, seed=3), spec, lam), Xeval)
            worst = max(worst, np.max(np.abs(dac - full)), np.max(np.abs(odac - full)))
    seconds = time.perf_counter() - start
    passed = worst <= 1e-8 and seconds < 10
    record(1, passed, f"k=1 dac and l=1,k=1 odac vs full, max |diff| = {worst:.2e} (tol 1e-8)", seconds)
    assert passed


def test_criterion_02_solver_oracle():
    start = time.perf_counter()
    rng = np.random.default_rng(MASTER_SEED)
    worst = 0.0
    for i in range(100):
        n = int(rng.integers(1, 201))
        if i % 2:
            A = rng.normal(size=(n, n))
            K = A @ A.T / n
        else:
            X = rng.uniform(size=(n, int(rng.integers(1, 4))))
            K = gram(KernelSpec("gaussian", rng.uniform(0.05, 1.0)), X)
        y = rng.normal(size=n)
        ridge = 10 ** rng.uniform(-2, 1)
        oracle = linalg.solve(K + ridge * np.eye(n), y, assume_a="gen")
        worst = max(worst, float(np.max(np.abs(regularized_solve(K, y, ridge) - oracle))))
    seconds = time.perf_counter() - start
    passed = worst <= 1e-9 and seconds < 30
    record(2, passed, f"100 SPD systems n<=200 vs dense LU, max entry diff = {worst:.2e} (tol 1e-9)", seconds)
    assert passed


def test_criterion_03_skew_rescue(bench, bench_holdout):
    recs, seconds = bench
    c, o, wins = rescue_stats(recs)
    passed = o < c and wins >= 15 and seconds < 300
    record(3, passed, f"mean MSE oversampled {o:.5f} vs classical {c:.5f} "
                      f"({'<' if o < c else '>='}), paired wins {wins}/20 (need >=15)", seconds)
    hc, ho, hwins = rescue_stats(bench_holdout[0])
    info(3, f"joint holdout bandwidth: oversampled {ho:.5f} vs classical {hc:.5f}, wins {hwins}/20")
    assert o < c, "oversampled mean MSE is not below classical"
    assert wins >= 15, f"oversampled wins only {wins} of 20 paired replicates"


def test_criterion_04_tau_ordering(bench, bench_holdout):
    recs, seconds = bench
    ok, means, ses = tau_stats(recs)
    record(4, ok, f"tau {fmt(BENCH_TAUS)} mean MSE {fmt(means)} se {fmt(ses)}, nonincreasing within 1 se",
           seconds)
    hok, hmeans, hses = tau_stats(bench_holdout[0])
    info(4, f"joint holdout bandwidth: mean MSE {fmt(hmeans)} se {fmt(hses)} -> "
            f"{'nonincreasing' if hok else 'increasing'}")
    assert ok


def test_criterion_05_slicing_rule(bench, bench_holdout):
    recs, seconds = bench
    ok, scott, fixed3 = slicing_stats(recs)
    record(5, ok, f"scott {scott['mean_mse']:.5f} vs fixed:3 {fixed3['mean_mse']:.5f} + se "
                  f"{fixed3['se_mse']:.5f}", seconds)
    hok, hs, hf = slicing_stats(bench_holdout[0])
    info(5, f"joint holdout bandwidth: scott {hs['mean_mse']:.5f} vs fixed:3 {hf['mean_mse']:.5f} "
            f"+ se {hf['se_mse']:.5f} -> {'ok' if hok else 'violated'}")
    assert ok


VARIANCE_SPEC = KernelSpec("gaussian", 0.03)
VARIANCE_LAMBDA = 1e-4
VARIANCE_POINT = np.array([[0.4]])  # the peak center, where the minority responses live


def predictor_variance(n, replicates=50, k=20, rule="fixed:5", tau=1.0):
    values, totals = [], []
    for rep in range(replicates):
        seed = derive_seed(MASTER_SEED, 6, n, rep)
        data, _ = generate(SynthSpec(n=n, d=1, noise_sd=0.1, seed=seed))
        plan = oversample_plan(data.y, make_slices(data.y, rule), tau, k, seed)
        totals.append(plan.post_dedup_total)
        values.append(predict_dac(fit_dac(data, plan, VARIANCE_SPEC, VARIANCE_LAMBDA), VARIANCE_POINT)[0])
    return float(np.var(values, ddof=1)), float(np.mean(totals))


def test_criterion_06_variance_scaling():
    start = time.perf_counter()
    var_small, nt_small = predictor_variance(1000)
    var_large, nt_large = predictor_variance(2000)
    seconds = time.perf_counter() - start
    ratio = var_large / var_small
    nt_ratio = nt_large / nt_small
    passed = 0.35 <= ratio <= 0.75 and seconds < 600
    record(6, passed, f"N_tilde {nt_small:.0f} -> {nt_large:.0f} (x{nt_ratio:.2f}), "
                      f"variance ratio {ratio:.3f} (need 0.35..0.75)", seconds)
    assert 1.8 <= nt_ratio <= 2.2
    assert 0.35 <= ratio <= 0.75


def test_criterion_07_ntilde_bound():
    start = time.perf_counter()
    rng = np.random.default_rng(MASTER_SEED)
    rules = ["scott", "sturges", "fd", "fixed:2", "fixed:5", "fixed:10", "fixed:25"]
    checked = 0
    for _ in range(200):
        n = int(rng.integers(20, 2000))
        y = np.concatenate([rng.normal(0, 0.05, n - n // 8), rng.exponential(1.0, n // 8)])
        rng.shuffle(y)
        rule = rules[int(rng.integers(len(rules)))]
        tau = float(rng.choice([1 / 5, 1 / 4, 1 / 3, 1 / 2, 1.0]))
        k = int(rng.integers(1, min(n, 120) + 1))
        slices = make_slices(y, rule)
        plan = oversample_plan(y, slices, tau, k, int(rng.integers(2**31)))
        assert plan.post_dedup_total == sum(plan.node_sizes)
        assert plan.post_dedup_total <= plan.pre_dedup_total <= slices.l * n
        assert np.array_equal(np.unique(np.concatenate(plan.node_assignments)), np.arange(n))
        assert all(np.unique(a).size == a.size for a in plan.node_assignments)
        checked += 1
    seconds = time.perf_counter() - start
    passed = checked == 200 and seconds < 30
    record(7, passed, f"{checked}/200 random plans satisfy N_tilde <= N* <= l*n and full coverage", seconds)
    assert passed


def test_criterion_08_cost():
    data, _ = generate(SynthSpec(n=5000, d=1, seed=derive_seed(MASTER_SEED, 8)))
    spec = KernelSpec("gaussian", median_bandwidth(data.X))
    lam = 1e-4
    slices = make_slices(data.y, "fixed:5")

    def best_of(fn, repeats=3):
        times = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            fn()
            times.append(time.perf_counter() - t0)
        return min(times)

    t_classical = best_of(lambda: fit_dac(data, classical_plan(data.n, 20, 1), spec, lam))
    t_over = best_of(lambda: fit_dac(data, oversample_plan(data.y, slices, 1.0, 20, 1), spec, lam))
    ratio = t_over / t_classical
    ok = ratio <= 5.0
    record(8, ok, f"fit time oversampled {t_over:.3f}s vs classical {t_classical:.3f}s, ratio {ratio:.2f} "
                  f"(soft limit 5)", status=None if ok else "WARN")
    if not ok:
        warnings.warn(f"oversampled fit is {ratio:.1f}x slower than classical (soft limit 5x)")


def test_criterion_09_determinism(tmp_path):
    start = time.perf_counter()
    args = ["bench", "--estimators", "full,dac,odac", "--n", "600", "--nodes", "5,10", "--tau", "1/2,1",
            "--slicing", "scott,sturges", "--replicates", "3", "--test-grid-size", "300", "--seed", "42"]
    bodies, csvs = [], []
    for workers in (1, 4):
        out = tmp_path / f"r{workers}.json"
        assert cli_main(args + ["--workers", str(workers), "--out", str(out)]) == 0
        doc = json.loads(out.read_text())
        bodies.append(json.dumps(_strip_timing(doc), sort_keys=True))
        csv_lines = (tmp_path / f"r{workers}.csv").read_text().splitlines()
        header = next(ln for ln in csv_lines if not ln.startswith("#")).split(",")
        drop = header.index("mean_fit_seconds")
        csvs.append([",".join(c for i, c in enumerate(ln.split(",")) if i != drop) if not ln.startswith("#") else ln
                     for ln in csv_lines])
    seconds = time.perf_counter() - start
    passed = bodies[0] == bodies[1] and csvs[0] == csvs[1] and seconds < 120
    record(9, passed, f"bench at 1 and 4 workers: report bodies {'identical' if bodies[0] == bodies[1] else 'differ'} "
                      f"({len(bodies[0])} bytes)", seconds)
    assert passed


def test_criterion_10_hand_values():
    checks = {
        "peak(c,c) = 2 sin(0.2 pi)": abs(peak([0.4], [0.4]) - 2 * math.sin(0.2 * math.pi)) <= 1e-9,
        "Sturges(1024) = 11": slice_count(np.arange(1024.0), "sturges") == 11,
        "copy_count(100,30,1) = 3": copy_count(100, 30, 1.0) == 3,
    }
    y = np.concatenate([np.linspace(0, 0.4, 100), np.linspace(0.6, 1.0, 30)])
    strata = make_slices(y, "fixed:2")
    _, test = stratified_split(Dataset(np.arange(130.0), y), 0.1, strata, seed=0)
    checks["split (100,30) at 0.1 = (10,3)"] = np.bincount(strata.assign(test.y), minlength=2).tolist() == [10, 3]
    passed = all(checks.values())
    record(10, passed, "; ".join(f"{k} {'ok' if v else 'WRONG'}" for k, v in checks.items()))
    assert passed


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-v"]))
