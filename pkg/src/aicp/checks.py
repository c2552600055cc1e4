"""Randomised property suites for the stable-set lemmas and test calibration.

Used by ``aicp check``; each suite returns the number of violations.
"""

from __future__ import annotations

import numpy as np

from .graph import Dag, stable_sets, stability_ratio
from .scm import EnvironmentSet, random_scm, sample
from .stats import InvarianceTester, f_test_variance, welch_t_test


def random_dag_and_targets(rng, max_nodes=10):
    p = int(rng.integers(2, max_nodes + 1))
    scm_seed = int(rng.integers(2 ** 32))
    degree = float(rng.uniform(0, min(3.0, p - 1)))
    dag = random_scm(p, degree, response_rule="uniform", seed=scm_seed).dag
    predictors = dag.predictors
    k = int(rng.integers(0, len(predictors) + 1))
    targets = frozenset(int(x) for x in rng.choice(predictors, size=k, replace=False))
    return dag, targets


def lemma_violations(dag: Dag, targets) -> dict:
    """Count violations of each stable-set property for one DAG and target set."""
    y = dag.response
    coll = stable_sets(dag, targets)
    sets = coll.sets
    anc_y = dag.ancestors(y)
    out = dict.fromkeys(("parents", "children", "empty", "ratio", "closure"), 0)
    for j in targets & dag.parents(y):
        out["parents"] += sum(1 for s in sets if j not in s)
    for i in targets & dag.children(y):
        de = dag.descendants(i)
        out["children"] += sum(1 for s in sets if s & de)
    out["empty"] += int((frozenset() in coll) != (not targets & anc_y))
    for j in anc_y:
        if stability_ratio(coll, j) < 0.5:
            out["ratio"] += 1
    for s in sets:
        for j in anc_y - s:
            if (s | {j}) not in coll:
                out["closure"] += 1
    return out


def lemma_suite(n: int = 500, seed: int = 0, max_nodes: int = 10) -> dict:
    rng = np.random.default_rng(seed)
    totals = dict.fromkeys(("parents", "children", "empty", "ratio", "closure"), 0)
    for _ in range(n):
        dag, targets = random_dag_and_targets(rng, max_nodes)
        for k, v in lemma_violations(dag, targets).items():
            totals[k] += v
    return totals


def calibration_suite(reps: int = 1000, n: int = 100, level: float = 0.05, seed: int = 0) -> dict:
    """Empirical rejection rates of the two-sample tests and the invariance
    test when all samples come from one distribution."""
    rng = np.random.default_rng(seed)
    t_rej = f_rej = inv_rej = 0
    scm = random_scm(6, 2.0, seed=int(rng.integers(2 ** 32)))
    parents = sorted(scm.dag.parents(scm.response))
    for _ in range(reps):
        a, b = rng.standard_normal(n), rng.standard_normal(n)
        t_rej += welch_t_test(a, b) < level
        f_rej += f_test_variance(a, b) < level
        data = sample(scm, 2 * n, rng)
        envs = EnvironmentSet(scm.response, [data[:n], data[n:]])
        inv_rej += InvarianceTester(envs).test(parents).p_value < level
    return {"welch": t_rej / reps, "f": f_rej / reps, "invariance": inv_rej / reps}
