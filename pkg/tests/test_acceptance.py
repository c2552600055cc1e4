"""Acceptance suite: one printed PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v``; the two finite-regime
experiments take several minutes each on one core.
"""

import json
import os
import time

import numpy as np
import pytest

from aicp.checks import lemma_suite
from aicp.cli import main
from aicp.graph import Dag, stable_sets
from aicp.harness import ExperimentConfig, compute_metrics, false_positive, run_experiment
from aicp.scm import EnvironmentSet, LinearScm, gaussian_condition, population_distribution, sample
from aicp.stats import (InvarianceTester, f_test_variance, lasso_cd, lasso_markov_blanket,
                        soft_threshold, welch_t_test)

WORKERS = os.cpu_count() or 1


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
        return ok
    return emit


def finite_config(n_e, policies):
    return ExperimentConfig(mode="finite", num_scms=50, seeds_per_scm=4, p=12, avg_degree=3.0,
                            T=50, alpha=0.01, n_obs=n_e, n_e=n_e,
                            intervention={"kind": "shift", "mean": 10.0, "variance": 1.0},
                            policies=policies, master_seed=2024)


@pytest.fixture(scope="module")
def finite_runs():
    """Finite-regime traces for both sample sizes, computed once."""
    out = {}
    for n_e in (100, 1000):
        start = time.perf_counter()
        traces = run_experiment(finite_config(n_e, ["random", "e"]), workers=WORKERS)
        out[n_e] = (traces, time.perf_counter() - start)
    return out


def test_criterion_1_golden_stable_sets(report):
    start = time.perf_counter()
    collider = stable_sets(Dag(5, {(0, 2), (1, 2), (2, 3), (4, 3)}, 2), {0, 4})
    chain = stable_sets(Dag(5, {(0, 2), (0, 4), (1, 2), (1, 4), (2, 3), (3, 4)}, 4), {2})
    elapsed = time.perf_counter() - start
    want1 = {frozenset(s) for s in ({0}, {0, 1}, {0, 4}, {0, 1, 4}, {0, 3, 4}, {0, 1, 3, 4})}
    want3 = {frozenset(s) for s in ({0, 1, 2}, {0, 1, 3}, {0, 1, 2, 3})}
    ok = (set(collider.sets) == want1 and len(collider) == 6 and set(chain.sets) == want3
          and chain.intersection() == {0, 1} and elapsed < 1.0)
    assert report(1, ok, f"collider {len(collider)} sets, chain {len(chain)} sets with intersection "
                         f"{sorted(chain.intersection())}, {elapsed:.3f}s")


def test_criterion_2_lemma_suite(report):
    start = time.perf_counter()
    violations = lemma_suite(500, seed=0, max_nodes=10)
    elapsed = time.perf_counter() - start
    ok = not any(violations.values()) and elapsed < 60
    assert report(2, ok, f"500 random DAGs, violations {violations}, {elapsed:.1f}s")


def test_criterion_3_gaussian_algebra(report):
    dag = Dag(3, {(0, 1), (0, 2), (1, 2)}, 1)
    scm = LinearScm(dag, dag.adjacency().astype(float), np.zeros(3), np.zeros(3), np.ones(3))
    g = population_distribution(scm)
    errors = []
    for x2 in (-2.0, 0.5, 3.0):
        c = gaussian_condition(g, [2], [x2])
        errors += [abs(c.mean[1] - 0.5 * x2), abs(c.covariance[1, 1] - 0.5)]
    errors.append(abs(gaussian_condition(g, [0], [1.3]).covariance[1, 1] - 1.0))
    worst = max(errors)
    assert report(3, worst <= 1e-12, f"max deviation {worst:.2e}")


def test_criterion_4_population(report):
    start = time.perf_counter()
    policies = ["random", "markov", "r", "markov+r"]
    cfg = ExperimentConfig(mode="population", num_scms=100, seeds_per_scm=1, p=15,
                           avg_degree=3.0, weight_range=(0.5, 1.0), policies=policies,
                           master_seed=7)
    traces = run_experiment(cfg, workers=WORKERS)
    elapsed = time.perf_counter() - start
    recovered = all(t.final_estimate == t.true_parents and len(t.rounds) <= 15 for t in traces)
    mean = {p: np.mean([len(t.rounds) for t in traces if t.policy == p]) for p in policies}
    ordered = mean["markov+r"] <= mean["markov"] <= mean["random"]
    ok = recovered and ordered and mean["random"] > mean["markov+r"] and elapsed < 300
    means = ", ".join(f"{p} {mean[p]:.2f}" for p in policies)
    assert report(4, ok, f"all recovered within 15: {recovered}; mean interventions {means}; "
                         f"{elapsed:.1f}s")


@pytest.mark.slow
@pytest.mark.parametrize("n_e", [100, 1000])
def test_criterion_5_fwer(report, finite_runs, n_e):
    traces, elapsed = finite_runs[n_e]
    fwer = {p: np.mean([false_positive(t) for t in traces if t.policy == p])
            for p in ("random", "e")}
    runs = sum(t.policy == "random" for t in traces)
    ok = runs == 200 and all(v < 0.05 for v in fwer.values()) and elapsed < 1800
    detail = ", ".join(f"{p} {v:.3f}" for p, v in fwer.items())
    assert report(5, ok, f"n_e={n_e}: FWER {detail} over {runs} runs per policy "
                         f"({elapsed / 60:.1f} min for both policies)")


@pytest.mark.slow
def test_criterion_6_policy_ordering(report, finite_runs):
    traces, _ = finite_runs[1000]
    m = compute_metrics(traces)
    at = {t: (m.jaccard[("e", t)], m.jaccard[("random", t)]) for t in (10, 20)}
    ok = all(e > r for e, r in at.values())
    detail = "; ".join(f"t={t}: e {e:.3f} vs random {r:.3f}" for t, (e, r) in at.items())
    assert report(6, ok, f"n_e=1000 mean Jaccard {detail}")


def test_criterion_7_calibration(report):
    rng = np.random.default_rng(0)
    reps = 2000
    t_rate = np.mean([welch_t_test(rng.standard_normal(100), rng.standard_normal(100)) < 0.05
                      for _ in range(reps)])
    f_rate = np.mean([f_test_variance(rng.standard_normal(100), rng.standard_normal(100)) < 0.05
                      for _ in range(reps)])
    scm = LinearScm(Dag(4, {(0, 3), (1, 3), (3, 2)}, 3), [[0, 0, 0, 0.8], [0, 0, 0, 0.6],
                    [0, 0, 0, 0], [0, 0, 0.9, 0]], [0.2, 0.1, 0.4, 0.3], np.zeros(4), np.ones(4))
    inv = []
    for _ in range(1000):
        data = sample(scm, 200, rng)
        envs = EnvironmentSet(3, [data[:100], data[100:]])
        inv.append(InvarianceTester(envs).test({0, 1}).p_value < 0.05)
    inv_rate = np.mean(inv)
    ok = 0.035 <= t_rate <= 0.065 and 0.035 <= f_rate <= 0.065 and inv_rate <= 0.08
    assert report(7, ok, f"size at 0.05: welch {t_rate:.4f}, F {f_rate:.4f} ({reps} reps), "
                         f"invariance {inv_rate:.3f} (1000 reps)")


def test_criterion_8_lasso(report):
    rng = np.random.default_rng(1)
    n, p = 300, 8
    Q, _ = np.linalg.qr(rng.standard_normal((n, p)))
    c = Q.T @ (Q @ rng.uniform(-2, 2, p) + 0.3 * rng.standard_normal(n))
    oracle_err = max(np.abs(lasso_cd(np.eye(p), c, lam) - soft_threshold(c, lam)).max()
                     for lam in np.geomspace(1e-3, 3.0, 12))
    scm = LinearScm(Dag(5, {(0, 2), (0, 4), (1, 2), (1, 4), (2, 3), (3, 4)}, 4),
                    [[0, 0, 0.9, 0, 0.7], [0, 0, 0.6, 0, 0.8], [0, 0, 0, 0.75, 0],
                     [0, 0, 0, 0, 0.65], [0, 0, 0, 0, 0]], np.zeros(5), np.zeros(5), np.ones(5))
    hits = 0
    for seed in range(50):
        data = sample(scm, 1000, seed)
        hits += {0, 1, 3} <= lasso_markov_blanket(data[:, :4], data[:, 4], seed=seed)
    ok = oracle_err <= 1e-6 and hits >= 45
    assert report(8, ok, f"soft-threshold max error {oracle_err:.1e}; chain-graph parents included in "
                         f"{hits}/50 seeds")


def test_criterion_9_determinism(report, tmp_path):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"num_scms": 3, "seeds_per_scm": 2, "p": 8, "T": 5,
                                  "n_obs": 200, "n_e": 200, "alpha": 0.01,
                                  "policies": ["random", "markov+e+r"], "master_seed": 31}))
    outputs = []
    for name in ("first", "second"):
        out = tmp_path / name
        assert main(["run", "--config", str(config), "--out", str(out)]) == 0
        outputs.append((out / "traces.jsonl").read_bytes())
    lines = outputs[0].count(b"\n")
    assert report(9, outputs[0] == outputs[1] and lines == 12,
                  f"two runs, {lines} JSONL records each, byte-identical: "
                  f"{outputs[0] == outputs[1]}")

