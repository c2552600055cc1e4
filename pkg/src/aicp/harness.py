"""Experiment ensembles, batch execution and summary metrics."""

from __future__ import annotations

import csv
import hashlib
import json
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .policy import (POLICY_NAMES, AicpTrace, PolicyConfig, PopulationOracle, run_aicp,
                     run_aicp_population)
from .scm import Intervention, LinearScm, random_scm


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    mode: str = "finite"
    num_scms: int = 10
    seeds_per_scm: int = 1
    p: int = 12
    avg_degree: float = 3.0
    weight_range: tuple = (0.5, 1.0)
    intercept_range: tuple = (0.0, 1.0)
    variance_range: tuple = (0.0, 1.0)
    flip_signs: bool = False
    response_rule: str = "has_parents"
    T: int = 50
    alpha: float = 0.01
    n_obs: int = 1000
    n_e: int = 1000
    intervention: dict = field(default_factory=lambda: {"kind": "shift", "mean": 10.0,
                                                        "variance": 1.0})
    policies: list = field(default_factory=lambda: ["random", "e"])
    master_seed: int = 0

    def __post_init__(self):
        if self.mode not in ("finite", "population"):
            raise ConfigError(f"mode must be 'finite' or 'population', got {self.mode!r}")
        for name in ("num_scms", "seeds_per_scm", "p", "T", "n_obs", "n_e"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must be in (0, 1)")
        if not self.policies:
            raise ConfigError("at least one policy is required")
        for name in self.policies:
            if name not in POLICY_NAMES:
                raise ConfigError(f"unknown policy {name!r}")
            if self.mode == "population" and "e" in name.split("+"):
                raise ConfigError(f"policy {name!r} is not available in the population setting")
        for name in ("weight_range", "intercept_range", "variance_range"):
            value = tuple(getattr(self, name))
            if len(value) != 2 or value[0] > value[1]:
                raise ConfigError(f"{name} must be an interval [lo, hi]")
            setattr(self, name, value)
        try:
            self.intervention_template()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad intervention: {exc}") from exc

    def intervention_template(self) -> Intervention:
        return Intervention(0, **self.intervention)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as f:
                d = json.load(f)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        d = asdict(self)
        for name in ("weight_range", "intercept_range", "variance_range"):
            d[name] = list(d[name])
        return d


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from arbitrary printable parts."""
    h = hashlib.blake2b(repr(parts).encode(), digest_size=8).digest()
    return int.from_bytes(h, "big") >> 1


def generate_ensemble(cfg: ExperimentConfig) -> list[LinearScm]:
    return [
        random_scm(cfg.p, cfg.avg_degree, cfg.weight_range, cfg.intercept_range,
                   cfg.variance_range, cfg.response_rule,
                   seed=derive_seed(cfg.master_seed, "scm", i), flip_signs=cfg.flip_signs)
        for i in range(cfg.num_scms)
    ]


def save_ensemble(scms: Sequence[LinearScm], path) -> None:
    with open(path, "w") as f:
        json.dump([s.to_dict() for s in scms], f)


def load_ensemble(path) -> list[LinearScm]:
    with open(path) as f:
        return [LinearScm.from_dict(d) for d in json.load(f)]


def _run_scm(args):
    """All (policy, seed) runs for one SCM; the unit of parallel work."""
    cfg, scm_id, scm = args
    template = cfg.intervention_template()
    oracle = PopulationOracle(scm) if cfg.mode == "population" else None
    out = []
    for name in cfg.policies:
        policy = PolicyConfig.from_name(name)
        for k in range(cfg.seeds_per_scm):
            seed = derive_seed(cfg.master_seed, scm_id, name, k)
            if cfg.mode == "population":
                trace = run_aicp_population(scm, policy, seed, scm_id=scm_id, oracle=oracle)
            else:
                trace = run_aicp(scm, policy, cfg.T, cfg.alpha, cfg.n_obs, cfg.n_e, template, seed,
                                 scm_id=scm_id)
            trace.metadata["seed_index"] = k
            out.append(trace)
    return out


def trace_sort_key(trace: AicpTrace):
    return (trace.scm_id, trace.policy, trace.metadata.get("seed_index", 0), trace.seed)


def run_experiment(cfg: ExperimentConfig, scms: Optional[Sequence[LinearScm]] = None,
                   workers: int = 1) -> list[AicpTrace]:
    """Run every configured policy on every SCM; results sorted by (scm, policy, seed)."""
    scms = generate_ensemble(cfg) if scms is None else list(scms)
    jobs = [(cfg, i, scm) for i, scm in enumerate(scms)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            batches = list(pool.map(_run_scm, jobs))
    else:
        batches = [_run_scm(job) for job in jobs]
    return sorted((t for b in batches for t in b), key=trace_sort_key)


def write_traces(traces: Iterable[AicpTrace], path) -> None:
    with open(path, "w") as f:
        for t in sorted(traces, key=trace_sort_key):
            f.write(json.dumps(t.to_dict(), sort_keys=True) + "\n")


def read_traces(path) -> list[AicpTrace]:
    with open(path) as f:
        return [AicpTrace.from_dict(json.loads(line)) for line in f if line.strip()]


# ---------------------------------------------------------------------
# metrics


def jaccard(a: Iterable[int], b: Iterable[int]) -> float:
    a, b = set(a), set(b)
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


def false_positive(trace: AicpTrace) -> bool:
    return any(not r.estimate <= trace.true_parents for r in trace.rounds)


def recovery_time(trace: AicpTrace, censor: Optional[int] = None) -> int:
    """First round whose estimate equals the true parents, else ``censor`` (default T)."""
    censor = trace.T if censor is None else censor
    for r in trace.rounds:
        if r.t > censor:
            break
        if r.estimate == trace.true_parents:
            return r.t
    return censor


@dataclass
class MetricsSummary:
    jaccard: dict  # (policy, t) -> mean Jaccard
    fwer: dict  # policy -> fraction of runs with a false positive
    mean_recovery: dict  # policy -> mean rounds to exact recovery
    runs: dict  # policy -> number of traces

    def write_csv(self, out_dir) -> tuple[Path, Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        curves = out_dir / "jaccard.csv"
        with open(curves, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["policy", "t", "mean_jaccard"])
            for (policy, t), value in sorted(self.jaccard.items()):
                w.writerow([policy, t, f"{value:.6f}"])
        summary = out_dir / "summary.csv"
        with open(summary, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["policy", "fwer", "mean_recovery"])
            for policy in sorted(self.fwer):
                w.writerow([policy, f"{self.fwer[policy]:.6f}", f"{self.mean_recovery[policy]:.6f}"])
        return curves, summary


def compute_metrics(traces: Sequence[AicpTrace], censor: Optional[int] = None) -> MetricsSummary:
    if not traces:
        raise ValueError("no traces to summarise")
    if len({t.T for t in traces}) != 1:
        raise ValueError("traces must share the same T")
    T = traces[0].T
    horizon = T if censor is None else censor
    by_policy = defaultdict(list)
    for t in traces:
        by_policy[t.policy].append(t)
    curves, fwer, recovery, runs = {}, {}, {}, {}
    for policy, group in by_policy.items():
        runs[policy] = len(group)
        fwer[policy] = float(np.mean([false_positive(t) for t in group]))
        recovery[policy] = float(np.mean([recovery_time(t, horizon) for t in group]))
        for step in range(1, horizon + 1):
            curves[(policy, step)] = float(np.mean(
                [jaccard(t.estimate_at(step), t.true_parents) for t in group]))
    return MetricsSummary(curves, fwer, recovery, runs)
