"""DAGs, d-separation and intervention-stable sets.

Node indices are 0-based and the response is an ordinary node of the
graph; the predictors are all other nodes. Predictor sets are
``frozenset`` objects of node indices.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

MAX_PREDICTORS = 20

RELATIONS = ("parents", "children", "ancestors", "descendants")


class CapacityError(ValueError):
    """Raised when subset enumeration would exceed ``MAX_PREDICTORS``."""


class CycleError(ValueError):
    pass


def canonical_key(s):
    return (len(s), tuple(sorted(s)))


def canonical_order(sets: Iterable[Iterable[int]]) -> list[frozenset]:
    """Sort sets by size, then lexicographically by their sorted elements."""
    return sorted((frozenset(s) for s in sets), key=canonical_key)


@dataclass(frozen=True)
class Dag:
    """A DAG over ``num_nodes`` nodes with a distinguished response node."""

    num_nodes: int
    edges: frozenset
    response: int
    _parents: tuple = field(init=False, repr=False, compare=False)
    _children: tuple = field(init=False, repr=False, compare=False)
    _order: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.num_nodes < 1:
            raise ValueError("num_nodes must be positive")
        edges = frozenset((int(i), int(j)) for i, j in self.edges)
        object.__setattr__(self, "edges", edges)
        if not 0 <= self.response < self.num_nodes:
            raise ValueError(f"response {self.response} out of range")
        parents = [[] for _ in range(self.num_nodes)]
        children = [[] for _ in range(self.num_nodes)]
        for i, j in sorted(edges):
            if not (0 <= i < self.num_nodes and 0 <= j < self.num_nodes):
                raise ValueError(f"edge ({i}, {j}) out of range")
            if i == j:
                raise ValueError(f"self-loop on node {i}")
            parents[j].append(i)
            children[i].append(j)
        object.__setattr__(self, "_parents", tuple(tuple(p) for p in parents))
        object.__setattr__(self, "_children", tuple(tuple(c) for c in children))
        object.__setattr__(self, "_order", self._toposort())

    def _toposort(self):
        indegree = [len(p) for p in self._parents]
        ready = [i for i in range(self.num_nodes) if indegree[i] == 0]
        order = []
        while ready:
            i = ready.pop()
            order.append(i)
            for j in self._children[i]:
                indegree[j] -= 1
                if indegree[j] == 0:
                    ready.append(j)
        if len(order) != self.num_nodes:
            raise CycleError("graph contains a cycle")
        return tuple(order)

    @property
    def predictors(self) -> tuple:
        return tuple(i for i in range(self.num_nodes) if i != self.response)

    @property
    def topological_order(self) -> tuple:
        return self._order

    def parents(self, i: int) -> frozenset:
        return frozenset(self._parents[self._check(i)])

    def children(self, i: int) -> frozenset:
        return frozenset(self._children[self._check(i)])

    def ancestors(self, i: int) -> frozenset:
        return self._walk(self._check(i), self._parents)

    def descendants(self, i: int) -> frozenset:
        """Descendants of ``i``, including ``i`` itself."""
        return self._walk(self._check(i), self._children) | {i}

    def markov_blanket(self, i: int) -> frozenset:
        ch = self.children(i)
        mb = set(self.parents(i)) | ch
        for c in ch:
            mb.update(self._parents[c])
        mb.discard(i)
        return frozenset(mb)

    def adjacency(self) -> np.ndarray:
        """Boolean matrix with ``A[i, j]`` true iff ``i -> j``."""
        a = np.zeros((self.num_nodes, self.num_nodes), dtype=bool)
        for i, j in self.edges:
            a[i, j] = True
        return a

    def _check(self, i):
        if not 0 <= i < self.num_nodes:
            raise IndexError(f"node {i} out of range for {self.num_nodes} nodes")
        return i

    @staticmethod
    def _walk(start, nbrs):
        seen = set()
        stack = list(nbrs[start])
        while stack:
            k = stack.pop()
            if k not in seen:
                seen.add(k)
                stack.extend(nbrs[k])
        return frozenset(seen)

    def to_dict(self) -> dict:
        return {
            "p": self.num_nodes,
            "edges": [list(e) for e in sorted(self.edges)],
            "response": self.response,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Dag":
        return cls(int(d["p"]), frozenset(tuple(e) for e in d["edges"]), int(d["response"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s: str) -> "Dag":
        return cls.from_dict(json.loads(s))


def relatives(dag: Dag, node: int, kind: str) -> frozenset:
    if kind not in RELATIONS:
        raise ValueError(f"kind must be one of {RELATIONS}, got {kind!r}")
    return getattr(dag, kind)(node)


# ---------------------------------------------------------------------
# d-separation


def _reachable(parents, children, sources, given):
    """Nodes with an active trail from ``sources`` given ``given``.

    Bayes-ball traversal over (node, direction) pairs; "up" means the
    node was entered from one of its children.
    """
    # ancestors of the conditioning set, including the set itself
    anc = set()
    stack = list(given)
    while stack:
        k = stack.pop()
        if k not in anc:
            anc.add(k)
            stack.extend(parents[k])

    visited = set()
    reached = set()
    stack = [(s, "up") for s in sources]
    while stack:
        node, direction = stack.pop()
        if (node, direction) in visited:
            continue
        visited.add((node, direction))
        if node not in given:
            reached.add(node)
        if direction == "up" and node not in given:
            stack.extend((k, "up") for k in parents[node])
            stack.extend((k, "down") for k in children[node])
        elif direction == "down":
            if node not in given:
                stack.extend((k, "down") for k in children[node])
            if node in anc:
                stack.extend((k, "up") for k in parents[node])
    return reached


def d_separated(dag: Dag, a: Iterable[int], b: Iterable[int], s: Iterable[int]) -> bool:
    """True iff ``a`` and ``b`` are d-separated by ``s`` in ``dag``."""
    a, b, s = set(a), set(b), set(s)
    for x in a | b | s:
        dag._check(x)
    if a & b or a & s or b & s:
        raise ValueError("a, b and s must be pairwise disjoint")
    return not (_reachable(dag._parents, dag._children, a, s) & b)


def intervention_graph(dag: Dag, targets: Iterable[int]) -> tuple[Dag, list[int]]:
    """Append one source node per target, with an edge into that target.

    Returns the augmented graph and the indices of the new source nodes.
    """
    targets = sorted(set(targets))
    n = dag.num_nodes
    sources = list(range(n, n + len(targets)))
    edges = set(dag.edges) | {(src, t) for src, t in zip(sources, targets)}
    return Dag(n + len(targets), frozenset(edges), dag.response), sources


# ---------------------------------------------------------------------
# stable sets


def _stable_mask(adj: np.ndarray, response: int, sources: Sequence[int],
                 predictors: Sequence[int], chunk: int = 1 << 16) -> np.ndarray:
    """For every subset S of ``predictors`` decide if S separates sources from Y.

    Vectorised Bayes ball: every subset is one row of the state arrays,
    and all rows are propagated to a fixed point together.
    """
    n = adj.shape[0]
    k = len(predictors)
    # float32 products go through BLAS; entries stay small integers
    a_f = adj.astype(np.float32)  # a[i, j] = 1 iff i -> j
    reach = np.eye(n, dtype=bool) | adj  # reach[i, j]: j in DE(i)
    while True:
        r = reach.astype(np.float32)
        nxt = (r @ r) > 0
        if np.array_equal(nxt, reach):
            break
        reach = nxt
    anc_of = reach.T.astype(np.float32)  # anc_of[j, i]: i is an ancestor-or-self of j
    out = np.empty(1 << k, dtype=bool)
    bits = np.arange(k, dtype=np.int64)
    pred = np.asarray(predictors, dtype=np.int64)
    for lo in range(0, 1 << k, chunk):
        m = np.arange(lo, min(lo + chunk, 1 << k), dtype=np.int64)
        given = np.zeros((len(m), n), dtype=bool)
        given[:, pred] = ((m[:, None] >> bits) & 1).astype(bool)
        in_anc = (given.astype(np.float32) @ anc_of) > 0
        open_ = ~given
        up = np.zeros_like(given)
        down = np.zeros_like(given)
        up[:, list(sources)] = True
        while True:
            send_up = (up & open_) | (down & in_anc)
            send_down = (up | down) & open_
            nu = up | ((send_up.astype(np.float32) @ a_f.T) > 0)
            nd = down | ((send_down.astype(np.float32) @ a_f) > 0)
            if np.array_equal(nu, up) and np.array_equal(nd, down):
                break
            up, down = nu, nd
        out[m] = ~((up[:, response] | down[:, response]) & open_[:, response])
    return out


@dataclass(frozen=True, eq=False)
class StableSetCollection:
    """The intervention-stable predictor sets of a DAG under a target set.

    Backed by a boolean mask over all subsets of ``predictors`` (bit ``k``
    of the subset index selects ``predictors[k]``); ``sets`` is
    materialised lazily in canonical order.
    """

    predictors: tuple
    mask: np.ndarray
    targets: frozenset = frozenset()

    def __len__(self):
        return int(self.mask.sum())

    def __iter__(self):
        return iter(self.sets)

    def __contains__(self, s):
        s = frozenset(s)
        pos = {v: k for k, v in enumerate(self.predictors)}
        if not s <= pos.keys():
            return False
        return bool(self.mask[sum(1 << pos[v] for v in s)])

    def __eq__(self, other):
        if isinstance(other, StableSetCollection):
            return set(self.sets) == set(other.sets)
        return NotImplemented

    @property
    def sets(self) -> list[frozenset]:
        cached = self.__dict__.get("_sets")
        if cached is None:
            idx = np.flatnonzero(self.mask)
            cached = canonical_order(
                frozenset(v for k, v in enumerate(self.predictors) if m >> k & 1) for m in idx
            )
            object.__setattr__(self, "_sets", cached)
        return cached

    def counts(self) -> dict[int, int]:
        """Number of member sets containing each predictor."""
        idx = np.flatnonzero(self.mask).astype(np.int64)
        return {v: int(((idx >> b) & 1).sum()) for b, v in enumerate(self.predictors)}

    def intersection(self) -> frozenset:
        n = len(self)
        if n == 0:
            return frozenset()
        return frozenset(v for v, c in self.counts().items() if c == n)

    def restrict(self, other: "StableSetCollection") -> "StableSetCollection":
        """Sets stable under both collections' targets."""
        if self.predictors != other.predictors:
            raise ValueError("collections are over different predictors")
        return StableSetCollection(self.predictors, self.mask & other.mask,
                                   self.targets | other.targets)


def stable_sets(dag: Dag, targets: Iterable[int]) -> StableSetCollection:
    """All predictor sets S with I ⊥ Y | X_S for every intervention source I."""
    targets = frozenset(targets)
    if dag.response in targets:
        raise ValueError("interventions on the response are not allowed")
    for t in targets:
        dag._check(t)
    predictors = dag.predictors
    if len(predictors) > MAX_PREDICTORS:
        raise CapacityError(f"{len(predictors)} predictors exceeds the cap of {MAX_PREDICTORS}")
    if not targets:
        mask = np.ones(1 << len(predictors), dtype=bool)
    else:
        aug, sources = intervention_graph(dag, targets)
        mask = _stable_mask(aug.adjacency(), aug.response, sources, predictors)
    return StableSetCollection(predictors, mask, targets)


def stability_ratio(coll, i: int) -> Fraction:
    """Fraction of the sets in ``coll`` that contain ``i``.

    ``coll`` is a :class:`StableSetCollection` or any sequence of sets
    (e.g. ICP accepted sets).
    """
    if isinstance(coll, StableSetCollection):
        n = len(coll)
        if n == 0:
            raise ZeroDivisionError("stability ratio of an empty collection")
        return Fraction(coll.counts().get(i, 0), n)
    coll = list(coll)
    if not coll:
        raise ZeroDivisionError("stability ratio of an empty collection")
    return Fraction(sum(1 for s in coll if i in s), len(coll))


def stability_ratios(coll, predictors: Iterable[int]) -> dict[int, Fraction]:
    if isinstance(coll, StableSetCollection):
        n = len(coll)
        if n == 0:
            raise ZeroDivisionError("stability ratio of an empty collection")
        counts = coll.counts()
        return {i: Fraction(counts.get(i, 0), n) for i in predictors}
    return {i: stability_ratio(coll, i) for i in predictors}
