import json

import numpy as np
import pytest

from aicp.graph import CapacityError, canonical_order, stable_sets
from aicp.icp import all_subsets, intersection, run_icp
from aicp.scm import EnvironmentSet, Intervention, apply_intervention, sample


def envs_for(scm, target, n, seed):
    rng = np.random.default_rng(seed)
    iv = Intervention(target, "shift", 10.0, 1.0)
    return EnvironmentSet(scm.response, [sample(scm, n, rng),
                                         sample(apply_intervention(scm, iv), n, rng)])


def test_all_subsets():
    subs = all_subsets([3, 1])
    assert subs == [frozenset(), frozenset({1}), frozenset({3}), frozenset({1, 3})]
    with pytest.raises(CapacityError):
        all_subsets(range(21))


def test_intersection():
    assert intersection([]) == frozenset()
    assert intersection([{0, 1}, {0, 2}]) == {0}


def test_chain_recovers_unintervened_parents(scm_chain):
    hits = 0
    for seed in range(20):
        state = run_icp(envs_for(scm_chain, 2, 5000, seed), alpha=0.01)
        hits += state.estimate == {0, 1}
    assert hits >= 18


def test_chain_accepted_sets_are_stable(scm_chain):
    state = run_icp(envs_for(scm_chain, 2, 5000, 0), alpha=0.01)
    assert set(state.accepted_sets) == set(stable_sets(scm_chain.dag, {2}).sets)


def test_duplicated_environment_accepts_everything(scm_collider):
    data = sample(scm_collider, 100, 0)
    envs = EnvironmentSet(2, [data, data.copy()])
    state = run_icp(envs, alpha=0.05)
    assert len(state.accepted_sets) == 16
    assert state.estimate == frozenset() and not state.all_rejected


def test_candidates_are_pruned(scm_collider):
    rng = np.random.default_rng(1)
    envs = EnvironmentSet(2, [sample(scm_collider, 300, rng)])
    for target in (0, 4):
        iv = Intervention(target, "shift", 10.0, 1.0)
        envs.append(sample(apply_intervention(scm_collider, iv), 300, rng), iv)
    first = run_icp(envs.subset([0, 1]), alpha=0.01)
    second = run_icp(envs, first.accepted_sets, alpha=0.01)
    assert set(second.accepted_sets) <= set(first.accepted_sets)
    full = run_icp(envs, alpha=0.01)
    # identical p-values on the common candidates
    for s in first.accepted_sets:
        assert second.p_values[s] == pytest.approx(full.p_values[s])
    assert set(second.accepted_sets) == set(full.accepted_sets) & set(first.accepted_sets)


def test_accepting_empty_set_gives_empty_estimate(scm_collider):
    envs = envs_for(scm_collider, 3, 200, 2)  # intervening on a child leaves the empty set stable
    state = run_icp(envs, alpha=0.01)
    assert frozenset() in state.accepted_sets
    assert state.estimate == frozenset()


def test_all_rejected_flag(scm_collider):
    envs = envs_for(scm_collider, 0, 500, 3)
    state = run_icp(envs, [frozenset(), frozenset({1})], alpha=0.01)
    assert state.all_rejected and state.accepted_sets == [] and state.estimate == frozenset()


def test_canonical_order_and_json(scm_collider):
    state = run_icp(envs_for(scm_collider, 0, 300, 4), alpha=0.01)
    assert state.accepted_sets == canonical_order(state.accepted_sets)
    d = json.loads(json.dumps(state.to_dict()))
    assert set(d) == {"accepted", "estimate", "all_rejected", "p_values"}
    assert d["estimate"] == sorted(state.estimate)
    assert len(d["p_values"]) == 16 and "" in d["p_values"] and "0,1" in d["p_values"]


def test_alpha_validation(scm_collider):
    with pytest.raises(ValueError):
        run_icp(envs_for(scm_collider, 0, 50, 0), alpha=1.0)
