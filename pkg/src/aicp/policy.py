"""Intervention-selection policies and the active ICP loop."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable, Optional

import numpy as np

from .graph import StableSetCollection, stable_sets, stability_ratios
from .icp import run_icp
from .scm import (EnvironmentSet, GaussianDist, Intervention, LinearScm, apply_intervention,
                  population_distribution, population_markov_blanket, sample)
from .stats import test_invariance, lasso_markov_blanket

POLICY_NAMES = ("random", "markov", "e", "r", "markov+e", "markov+r", "e+r", "markov+e+r")

HALF = Fraction(1, 2)


@dataclass(frozen=True)
class PolicyConfig:
    use_markov: bool = False
    use_empty_set: bool = False
    use_ratio: bool = False

    @property
    def name(self) -> str:
        parts = [tag for tag, on in (("markov", self.use_markov), ("e", self.use_empty_set),
                                     ("r", self.use_ratio)) if on]
        return "+".join(parts) or "random"

    @classmethod
    def from_name(cls, name: str) -> "PolicyConfig":
        if name not in POLICY_NAMES:
            raise ValueError(f"unknown policy {name!r}; expected one of {POLICY_NAMES}")
        parts = set(name.split("+"))
        return cls("markov" in parts, "e" in parts, "r" in parts)


@dataclass(frozen=True)
class PolicyState:
    markov_blanket: Optional[frozenset] = None
    blacklist: frozenset = frozenset()
    identified_parents: frozenset = frozenset()
    last_target: Optional[int] = None


def _draw(pool, rng) -> int:
    pool = sorted(pool)
    return int(pool[rng.integers(len(pool))])


def first_intervention(cfg: PolicyConfig, obs, response: int, rng=None, folds: int = 10):
    """Pick the first target from an observational sample.

    ``obs`` is a data matrix (finite regime: the Markov blanket comes from
    the CV-tuned Lasso) or a :class:`GaussianDist` (population regime:
    support of the population regression). An empty blanket estimate
    falls back to all predictors.
    """
    rng = np.random.default_rng(rng)
    if isinstance(obs, GaussianDist):
        num = len(obs.mean)
    else:
        obs = np.asarray(obs, dtype=float)
        if obs.size == 0:
            raise ValueError("observational sample is empty")
        num = obs.shape[1]
    predictors = [i for i in range(num) if i != response]
    mb = None
    if cfg.use_markov:
        if isinstance(obs, GaussianDist):
            mb = population_markov_blanket(obs, response)
        else:
            cols = lasso_markov_blanket(obs[:, predictors], obs[:, response], folds=folds,
                                        seed=int(rng.integers(2 ** 32)))
            mb = frozenset(predictors[c] for c in cols)
    target = _draw(mb or predictors, rng)
    return target, PolicyState(markov_blanket=mb, last_target=target)


def next_intervention(cfg: PolicyConfig, state: PolicyState, accepted, predictors: Iterable[int],
                      rng=None, exclude: Iterable[int] = ()):
    """Choose the next target given the currently accepted sets.

    Returns ``(target, state)``; ``target`` is ``None`` when no candidate
    is left. Variables with stability ratio 1 are never chosen. If the
    filtered pool is empty, the ratio, Markov and blacklist filters are
    dropped in that order.
    """
    rng = np.random.default_rng(rng)
    predictors = sorted(predictors)
    has_sets = len(accepted) > 0
    ratios = stability_ratios(accepted, predictors) if has_sets else {}
    identified = frozenset(i for i, r in ratios.items() if r == 1)
    base = set(predictors) - set(exclude) - identified

    mb = state.markov_blanket if cfg.use_markov and state.markov_blanket else None
    blacklist = state.blacklist if cfg.use_empty_set else frozenset()
    low = {i for i, r in ratios.items() if r < HALF} if cfg.use_ratio else set()

    for use_low, use_mb, use_bl in ((True, True, True), (False, True, True),
                                    (False, False, True), (False, False, False)):
        pool = set(base)
        if use_mb and mb is not None:
            pool &= mb
        if use_bl:
            pool -= blacklist
        if use_low:
            pool -= low
        if pool:
            target = _draw(pool, rng)
            break
    else:
        target = None
    return target, replace(state, identified_parents=identified, last_target=target)


def blacklist_target(state: PolicyState, target: int) -> PolicyState:
    return replace(state, blacklist=state.blacklist | {target})


# ---------------------------------------------------------------------
# traces


@dataclass
class RoundRecord:
    t: int
    target: int
    accepted_count: int
    estimate: frozenset
    empty_set_p: Optional[float] = None

    def to_dict(self) -> dict:
        return {"t": self.t, "target": self.target, "accepted": self.accepted_count,
                "estimate": sorted(self.estimate), "empty_set_p": self.empty_set_p}

    @classmethod
    def from_dict(cls, d: dict) -> "RoundRecord":
        return cls(d["t"], d["target"], d["accepted"], frozenset(d["estimate"]), d["empty_set_p"])


@dataclass
class AicpTrace:
    policy: str
    seed: int
    T: int
    true_parents: frozenset
    rounds: list = field(default_factory=list)
    alpha: Optional[float] = None
    n_obs: Optional[int] = None
    n_e: Optional[int] = None
    scm_id: Optional[int] = None
    mode: str = "finite"
    metadata: dict = field(default_factory=dict)

    @property
    def final_estimate(self) -> frozenset:
        return self.rounds[-1].estimate if self.rounds else frozenset()

    def estimate_at(self, t: int) -> frozenset:
        """Estimate after ``t`` rounds; a run that stopped early keeps its last estimate."""
        est = frozenset()
        for r in self.rounds:
            if r.t > t:
                break
            est = r.estimate
        return est

    def to_dict(self) -> dict:
        return {
            "scm_id": self.scm_id,
            "policy": self.policy,
            "seed": self.seed,
            "mode": self.mode,
            "T": self.T,
            "alpha": self.alpha,
            "n_obs": self.n_obs,
            "n_e": self.n_e,
            "rounds": [r.to_dict() for r in self.rounds],
            "final_estimate": sorted(self.final_estimate),
            "true_parents": sorted(self.true_parents),
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AicpTrace":
        return cls(policy=d["policy"], seed=d["seed"], T=d["T"],
                   true_parents=frozenset(d["true_parents"]),
                   rounds=[RoundRecord.from_dict(r) for r in d["rounds"]],
                   alpha=d.get("alpha"), n_obs=d.get("n_obs"), n_e=d.get("n_e"),
                   scm_id=d.get("scm_id"), mode=d.get("mode", "finite"),
                   metadata=d.get("metadata", {}))


FINITE_METADATA = {
    "icp_level": "alpha / T in every round",
    "empty_set_test_level": "alpha / T per round, in addition to the ICP tests",
    "identified_parents_excluded": "all policies, including random",
    "lasso": "50-point log grid down to 1e-3 * lambda_max, 10-fold CV, |coef| > 1e-8",
}


def run_aicp(scm: LinearScm, cfg: PolicyConfig, T: int, alpha: float, n_obs: int, n_e: int,
             intervention: Intervention, seed: int, scm_id=None, folds: int = 10) -> AicpTrace:
    """Active ICP on finite samples drawn from ``scm``.

    ``intervention`` is a template whose ``target`` is replaced by the
    chosen variable each round. Targets are drawn with replacement.
    """
    if T < 1:
        raise ValueError("T must be at least 1")
    if not 0 < alpha < 1:
        raise ValueError("alpha must be in (0, 1)")
    policy_ss, data_ss = np.random.SeedSequence(seed).spawn(2)
    policy_rng = np.random.default_rng(policy_ss)
    data_rng = np.random.default_rng(data_ss)
    response = scm.response
    predictors = scm.dag.predictors
    level = alpha / T

    obs = sample(scm, n_obs, data_rng)
    envs = EnvironmentSet(response, [obs])
    target, state = first_intervention(cfg, obs, response, policy_rng, folds=folds)
    trace = AicpTrace(cfg.name, seed, T, scm.dag.parents(response), alpha=alpha, n_obs=n_obs,
                      n_e=n_e, scm_id=scm_id, metadata=dict(FINITE_METADATA))
    accepted = None
    for t in range(1, T + 1):
        if target is None:
            break
        iv = intervention.at(target)
        data = sample(apply_intervention(scm, iv), n_e, data_rng)
        envs.append(data, iv)
        result = run_icp(envs, accepted, level)
        accepted = result.accepted_sets
        empty_p = None
        if cfg.use_empty_set:
            empty_p = test_invariance(envs.subset([0, len(envs) - 1]), ()).p_value
            if empty_p > level:
                state = blacklist_target(state, target)
        trace.rounds.append(RoundRecord(t, target, len(accepted), result.estimate, empty_p))
        target, state = next_intervention(cfg, state, accepted, predictors, policy_rng)
    return trace


class PopulationOracle:
    """Exact stable sets of an SCM, with single-target collections cached."""

    def __init__(self, scm: LinearScm):
        self.scm = scm
        self._single = {}

    def under(self, targets: Iterable[int]) -> StableSetCollection:
        targets = sorted(set(targets))
        coll = stable_sets(self.scm.dag, ())
        for j in targets:
            if j not in self._single:
                self._single[j] = stable_sets(self.scm.dag, {j})
            coll = coll.restrict(self._single[j])
        return coll


def run_aicp_population(scm: LinearScm, cfg: PolicyConfig, seed: int, scm_id=None,
                        oracle: Optional[PopulationOracle] = None) -> AicpTrace:
    """Active ICP with perfect invariance information.

    Accepted sets are the exact stable sets under all targets used so
    far; targets are drawn without replacement and the run stops once
    the estimate equals the parents of the response or no target is left.
    """
    if cfg.use_empty_set:
        raise ValueError("the empty-set strategy does not apply in the population setting")
    rng = np.random.default_rng(seed)
    oracle = oracle or PopulationOracle(scm)
    response = scm.response
    predictors = scm.dag.predictors
    truth = scm.dag.parents(response)
    trace = AicpTrace(cfg.name, seed, len(predictors), truth, scm_id=scm_id, mode="population",
                      metadata={"identified_parents_excluded": "all policies, including random"})
    target, state = first_intervention(cfg, population_distribution(scm), response, rng)
    used = []
    t = 0
    while target is not None:
        t += 1
        used.append(target)
        accepted = oracle.under(used)
        estimate = accepted.intersection()
        trace.rounds.append(RoundRecord(t, target, len(accepted), estimate))
        if estimate == truth:
            break
        target, state = next_intervention(cfg, state, accepted, predictors, rng, exclude=used)
    return trace
