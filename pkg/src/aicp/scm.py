"""Linear Gaussian structural causal models.

``weights[i, j]`` is the coefficient of node ``i`` in the assignment of
node ``j``, so each node is

    X_j := intercept_j + sum_i weights[i, j] X_i + eps_j,
    eps_j ~ N(noise_means[j], noise_variances[j]).

Data matrices have one column per node, in node order (the response
column sits at ``dag.response``).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .graph import Dag

RIDGE = 1e-10
INTERVENTION_KINDS = ("do", "shift", "noise")


@dataclass(frozen=True, eq=False)
class LinearScm:
    dag: Dag
    weights: np.ndarray
    intercepts: np.ndarray
    noise_means: np.ndarray
    noise_variances: np.ndarray

    def __post_init__(self):
        n = self.dag.num_nodes
        for name in ("weights", "intercepts", "noise_means", "noise_variances"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.weights.shape != (n, n):
            raise ValueError(f"weights must be {n}x{n}, got {self.weights.shape}")
        for name in ("intercepts", "noise_means", "noise_variances"):
            if getattr(self, name).shape != (n,):
                raise ValueError(f"{name} must have length {n}")
        if np.any(self.noise_variances < 0):
            raise ValueError("noise variances must be non-negative")
        if not np.array_equal(self.weights != 0, self.dag.adjacency()):
            raise ValueError("non-zero weights must coincide with the DAG's edges")

    @property
    def num_nodes(self) -> int:
        return self.dag.num_nodes

    @property
    def response(self) -> int:
        return self.dag.response

    def __eq__(self, other):
        if not isinstance(other, LinearScm):
            return NotImplemented
        return self.dag == other.dag and all(
            np.array_equal(getattr(self, k), getattr(other, k))
            for k in ("weights", "intercepts", "noise_means", "noise_variances")
        )

    def to_dict(self) -> dict:
        d = self.dag.to_dict()
        d.update(
            weights=self.weights.tolist(),
            intercepts=self.intercepts.tolist(),
            noise_means=self.noise_means.tolist(),
            noise_variances=self.noise_variances.tolist(),
        )
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LinearScm":
        return cls(Dag.from_dict(d), d["weights"], d["intercepts"], d["noise_means"],
                   d["noise_variances"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s: str) -> "LinearScm":
        return cls.from_dict(json.loads(s))


@dataclass(frozen=True)
class Intervention:
    """A single-node intervention.

    ``do`` replaces the assignment by N(mean, variance); ``shift`` adds an
    independent N(mean, variance) term; ``noise`` replaces the noise term.
    """

    target: int
    kind: str = "shift"
    mean: float = 0.0
    variance: float = 0.0

    def __post_init__(self):
        if self.kind not in INTERVENTION_KINDS:
            raise ValueError(f"unknown intervention kind {self.kind!r}")
        if self.variance < 0:
            raise ValueError("intervention variance must be non-negative")

    def at(self, target: int) -> "Intervention":
        return replace(self, target=target)

    def to_dict(self) -> dict:
        return {"target": self.target, "kind": self.kind, "mean": self.mean,
                "variance": self.variance}


@dataclass(frozen=True, eq=False)
class GaussianDist:
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float)
        cov = np.array(self.covariance, dtype=float)
        if cov.shape != (len(mean), len(mean)):
            raise ValueError("covariance shape does not match mean")
        if not np.allclose(cov, cov.T, atol=1e-9, rtol=0):
            raise ValueError("covariance is not symmetric")
        if len(mean) and np.linalg.eigvalsh(cov).min() < -1e-9 * max(1.0, np.abs(cov).max()):
            raise ValueError("covariance is not positive semi-definite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", (cov + cov.T) / 2)

    def marginal(self, keep: Sequence[int]) -> "GaussianDist":
        keep = list(keep)
        return GaussianDist(self.mean[keep], self.covariance[np.ix_(keep, keep)])


def apply_intervention(scm: LinearScm, iv: Intervention) -> LinearScm:
    """Return the intervened SCM; ``scm`` itself is left untouched."""
    j = iv.target
    scm.dag._check(j)
    if j == scm.response:
        raise ValueError("interventions on the response are not allowed")
    weights = scm.weights.copy()
    intercepts = scm.intercepts.copy()
    means = scm.noise_means.copy()
    variances = scm.noise_variances.copy()
    dag = scm.dag
    if iv.kind == "do":
        weights[:, j] = 0.0
        intercepts[j] = iv.mean
        means[j] = 0.0
        variances[j] = iv.variance
        dag = Dag(dag.num_nodes, frozenset(e for e in dag.edges if e[1] != j), dag.response)
    elif iv.kind == "shift":
        means[j] += iv.mean
        variances[j] += iv.variance
    else:
        means[j] = iv.mean
        variances[j] = iv.variance
    return LinearScm(dag, weights, intercepts, means, variances)


def sample(scm: LinearScm, n: int, seed) -> np.ndarray:
    """Draw ``n`` i.i.d. rows; the same seed gives bit-identical output."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    p = scm.num_nodes
    noise = rng.standard_normal((n, p)) * np.sqrt(scm.noise_variances) + scm.noise_means
    X = np.zeros((n, p))
    W = scm.weights
    for j in scm.dag.topological_order:
        X[:, j] = scm.intercepts[j] + noise[:, j] + X @ W[:, j]
    return X


def population_distribution(scm: LinearScm) -> GaussianDist:
    A = np.eye(scm.num_nodes) - scm.weights.T
    mean = np.linalg.solve(A, scm.intercepts + scm.noise_means)
    M = np.linalg.solve(A, np.diag(scm.noise_variances))
    cov = np.linalg.solve(A, M.T).T
    return GaussianDist(mean, (cov + cov.T) / 2)


def _solve_psd(block: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.solve(block, rhs)
    except np.linalg.LinAlgError:
        pass
    try:
        return np.linalg.solve(block + RIDGE * np.eye(len(block)), rhs)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("conditioning block is singular") from exc


def gaussian_condition(g: GaussianDist, given: Iterable[int], values) -> GaussianDist:
    """Condition ``g`` on ``X[given] = values``.

    The result keeps the full dimension: the conditioned coordinates are
    fixed at ``values`` with zero variance, which keeps indices stable.
    """
    given = list(given)
    values = np.asarray(values, dtype=float).reshape(-1)
    if len(values) != len(given):
        raise ValueError("values must match given")
    if not given:
        return g
    rest = [i for i in range(len(g.mean)) if i not in set(given)]
    S = g.covariance
    S_gg = S[np.ix_(given, given)]
    S_rg = S[np.ix_(rest, given)]
    sol = _solve_psd(S_gg, np.column_stack([values - g.mean[given], S_rg.T]))
    mean = g.mean.copy()
    cov = np.zeros_like(S)
    mean[given] = values
    mean[rest] = g.mean[rest] + S_rg @ sol[:, 0]
    cov[np.ix_(rest, rest)] = S[np.ix_(rest, rest)] - S_rg @ sol[:, 1:]
    return GaussianDist(mean, (cov + cov.T) / 2)


def population_ols(g: GaussianDist, response: int, regressors: Iterable[int]):
    """Population least-squares regression of ``response`` on ``regressors``.

    Returns ``(coefficients, intercept, residual_variance)`` with the
    coefficients ordered as ``regressors``.
    """
    S = list(regressors)
    mu, C = g.mean, g.covariance
    if not S:
        return np.zeros(0), float(mu[response]), float(C[response, response])
    C_ss = C[np.ix_(S, S)]
    C_sy = C[S, response]
    beta = np.linalg.pinv(C_ss, rcond=1e-12, hermitian=True) @ C_sy
    intercept = float(mu[response] - beta @ mu[S])
    resid = float(C[response, response] - C_sy @ beta)
    return beta, intercept, max(resid, 0.0)


def population_markov_blanket(g: GaussianDist, response: int, tol: float = 1e-9) -> frozenset:
    """Support of the population regression of the response on all other nodes."""
    others = [i for i in range(len(g.mean)) if i != response]
    beta, _, _ = population_ols(g, response, others)
    return frozenset(i for i, b in zip(others, beta) if abs(b) > tol)


def random_scm(p: int, avg_degree: float = 3.0, weight_range=(0.5, 1.0),
               intercept_range=(0.0, 1.0), variance_range=(0.0, 1.0),
               response_rule: str = "has_parents", seed=None,
               flip_signs: bool = False) -> LinearScm:
    """Random linear SCM over ``p`` nodes on an Erdős–Rényi DAG.

    Each unordered pair is connected with probability
    ``avg_degree / (p - 1)`` and oriented along a random permutation.
    The intercept range is used for a single location term per node
    (noise means are zero). ``response_rule`` is ``"has_parents"``
    (uniform among nodes with a parent, falling back to any node) or
    ``"uniform"``.
    """
    if p < 2:
        raise ValueError("p must be at least 2")
    if not 0 <= avg_degree <= p - 1:
        raise ValueError("avg_degree must be in [0, p - 1]")
    for name, (lo, hi) in (("weight_range", weight_range),
                           ("intercept_range", intercept_range),
                           ("variance_range", variance_range)):
        if lo > hi:
            raise ValueError(f"{name} is empty: {(lo, hi)}")
    if variance_range[0] < 0:
        raise ValueError("variance_range must be non-negative")
    if weight_range[0] <= 0 <= weight_range[1]:
        raise ValueError("weight_range must not contain 0")
    if response_rule not in ("has_parents", "uniform"):
        raise ValueError(f"unknown response_rule {response_rule!r}")

    rng = np.random.default_rng(seed)
    prob = avg_degree / (p - 1)
    order = rng.permutation(p)
    upper = np.triu(rng.random((p, p)) < prob, k=1)
    adj = np.zeros((p, p), dtype=bool)
    adj[np.ix_(order, order)] = upper
    weights = np.where(adj, rng.uniform(*weight_range, size=(p, p)), 0.0)
    if flip_signs:
        weights *= np.where(rng.random((p, p)) < 0.5, -1.0, 1.0)
    intercepts = rng.uniform(*intercept_range, size=p)
    variances = rng.uniform(*variance_range, size=p)
    if response_rule == "has_parents" and adj.any():
        response = int(rng.choice(np.flatnonzero(adj.any(axis=0))))
    else:
        response = int(rng.integers(p))
    dag = Dag(p, frozenset((int(i), int(j)) for i, j in zip(*np.nonzero(adj))), response)
    return LinearScm(dag, weights, intercepts, np.zeros(p), variances)


# ---------------------------------------------------------------------
# environments


@dataclass(frozen=True)
class Environment:
    data: np.ndarray
    intervention: Optional[Intervention] = None
    _moments: dict = field(default_factory=dict, compare=False, repr=False)

    def moments(self, center: np.ndarray):
        """Row count, column sums and cross-product matrix of ``data - center``."""
        key = center.tobytes()
        if key not in self._moments:
            z = self.data - center
            self._moments[key] = (len(z), z.sum(axis=0), z.T @ z)
        return self._moments[key]


@dataclass
class EnvironmentSet:
    """Append-only, ordered collection of samples from different environments."""

    response: int
    environments: list = field(default_factory=list)

    def __post_init__(self):
        envs, self.environments = self.environments, []
        for env in envs:
            self.append(env)

    def append(self, data, intervention: Optional[Intervention] = None) -> None:
        """Add an environment given as a data matrix or an :class:`Environment`."""
        if isinstance(data, Environment):
            env = data
        else:
            env = Environment(np.asarray(data, dtype=float), intervention)
        if env.data.ndim != 2 or len(env.data) == 0:
            raise ValueError("environment data must be a non-empty 2-d array")
        if self.environments and env.data.shape[1] != self.num_columns:
            raise ValueError("all environments must have the same number of columns")
        if not 0 <= self.response < env.data.shape[1]:
            raise ValueError("response column out of range")
        self.environments.append(env)

    def __len__(self):
        return len(self.environments)

    def __getitem__(self, k):
        return self.environments[k]

    @property
    def num_columns(self) -> int:
        return self.environments[0].data.shape[1]

    @property
    def predictors(self) -> tuple:
        return tuple(i for i in range(self.num_columns) if i != self.response)

    @property
    def center(self) -> np.ndarray:
        """Column means of the first environment, used to centre moments."""
        return self.environments[0].data.mean(axis=0)

    def subset(self, indices: Iterable[int]) -> "EnvironmentSet":
        return EnvironmentSet(self.response, [self.environments[k] for k in indices])

    def pooled(self):
        """Stacked data and the environment label of each row."""
        data = np.vstack([e.data for e in self.environments])
        labels = np.repeat(np.arange(len(self)), [len(e.data) for e in self.environments])
        return data, labels


def column_names(num_columns: int, response: int) -> list[str]:
    return ["Y" if i == response else f"X{i}" for i in range(num_columns)]


def write_csv(path, data: np.ndarray, response: int) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(column_names(data.shape[1], response))
        w.writerows(data.tolist())
