"""Invariant Causal Prediction with optional candidate-set pruning."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .graph import MAX_PREDICTORS, CapacityError, canonical_key, canonical_order
from .scm import EnvironmentSet
from .stats import InvarianceTester


@dataclass
class IcpState:
    accepted_sets: list
    estimate: frozenset
    alpha: float
    all_rejected: bool = False
    p_values: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "accepted": [sorted(s) for s in self.accepted_sets],
            "estimate": sorted(self.estimate),
            "all_rejected": self.all_rejected,
            "p_values": {",".join(map(str, sorted(s))): p
                         for s, p in sorted(self.p_values.items(), key=lambda kv: canonical_key(kv[0]))},
        }


def all_subsets(predictors: Iterable[int]) -> list[frozenset]:
    predictors = sorted(predictors)
    if len(predictors) > MAX_PREDICTORS:
        raise CapacityError(f"{len(predictors)} predictors exceeds the cap of {MAX_PREDICTORS}")
    return [frozenset(c) for k in range(len(predictors) + 1)
            for c in itertools.combinations(predictors, k)]


def intersection(sets) -> frozenset:
    sets = list(sets)
    if not sets:
        return frozenset()
    return frozenset.intersection(*map(frozenset, sets))


def run_icp(envs: EnvironmentSet, candidates: Optional[Iterable] = None,
            alpha: float = 0.05) -> IcpState:
    """Test H0,S for every candidate set and intersect the accepted ones.

    ``candidates=None`` tests all subsets of the predictors. A set is
    accepted when its p-value exceeds ``alpha``. If every candidate is
    rejected the estimate is empty and ``all_rejected`` is set.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must be in (0, 1)")
    if candidates is None:
        candidates = all_subsets(envs.predictors)
    candidates = canonical_order(candidates)
    tester = InvarianceTester(envs)
    p_values = dict(zip(candidates, tester.p_values(candidates).tolist()))
    accepted = [s for s in candidates if p_values[s] > alpha]
    return IcpState(
        accepted_sets=accepted,
        estimate=intersection(accepted),
        alpha=alpha,
        all_rejected=not accepted,
        p_values=p_values,
    )
