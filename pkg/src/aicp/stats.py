"""Finite-sample statistics: OLS, two-sample tests, the invariance test
and a cross-validated Lasso for Markov-blanket screening."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
import scipy.special

from .scm import EnvironmentSet


class SampleSizeError(ValueError):
    pass


@dataclass
class RegressionFit:
    coefficients: np.ndarray
    intercept: float
    residuals: np.ndarray


@dataclass
class InvarianceTestResult:
    set: frozenset
    p_value: float
    per_environment: list = field(default_factory=list)


def ols_fit(X, y) -> RegressionFit:
    """Least squares with an intercept; minimum-norm if ``X`` is rank deficient."""
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float).reshape(len(y), -1)
    n, k = X.shape
    if n < k + 2:
        raise SampleSizeError(f"need at least {k + 2} observations, got {n}")
    if k == 0:
        mu = y.mean()
        return RegressionFit(np.zeros(0), float(mu), y - mu)
    # centring separates the intercept, so min-norm applies to the slopes only
    xm, ym = X.mean(axis=0), y.mean()
    coef = np.linalg.lstsq(X - xm, y - ym, rcond=None)[0]
    intercept = float(ym - xm @ coef)
    return RegressionFit(coef, intercept, y - intercept - X @ coef)


# ---------------------------------------------------------------------
# two-sample tests, vectorised over summary statistics


def _welch_p(m1, v1, n1, m2, v2, n2):
    m1, v1, n1, m2, v2, n2 = np.broadcast_arrays(*map(np.asarray, (m1, v1, n1, m2, v2, n2)))
    a, b = v1 / n1, v2 / n2
    se2 = a + b
    p = np.where(m1 == m2, 1.0, 0.0)
    ok = se2 > 0
    if ok.any():
        t = np.abs(m1[ok] - m2[ok]) / np.sqrt(se2[ok])
        # Welch-Satterthwaite in shares of se2, which cannot underflow
        ra, rb = a[ok] / se2[ok], b[ok] / se2[ok]
        df = 1.0 / (ra ** 2 / (n1[ok] - 1) + rb ** 2 / (n2[ok] - 1))
        p[ok] = np.minimum(1.0, 2 * scipy.special.stdtr(df, -t))
    return p


def _f_p(v1, n1, v2, n2):
    v1, n1, v2, n2 = np.broadcast_arrays(*map(np.asarray, (v1, n1, v2, n2)))
    p = np.where((v1 == 0) & (v2 == 0), 1.0, 0.0)
    ok = (v1 > 0) & (v2 > 0)
    if ok.any():
        # orient the ratio to be >= 1 so that swapping the samples is exact
        flip = v1[ok] < v2[ok]
        num = np.where(flip, v2[ok], v1[ok])
        den = np.where(flip, v1[ok], v2[ok])
        d1 = np.where(flip, n2[ok], n1[ok]) - 1
        d2 = np.where(flip, n1[ok], n2[ok]) - 1
        f = num / den
        tail = scipy.special.fdtrc(d1, d2, f)
        q = np.minimum(1.0, 2 * np.minimum(tail, 1.0 - tail))
        p[ok] = np.where((f == 1) & (d1 == d2), 1.0, q)  # the median of F(d, d) is 1
    return p


def _check_pair(a, b):
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if len(a) < 2 or len(b) < 2:
        raise SampleSizeError("each sample needs at least two observations")
    return a, b


def welch_t_test(a, b) -> float:
    """Two-sided Welch t-test for equal means.

    If both samples have zero variance the p-value is 1 for equal means
    and 0 otherwise.
    """
    a, b = _check_pair(a, b)
    return float(_welch_p(a.mean(), a.var(ddof=1), len(a), b.mean(), b.var(ddof=1), len(b)))


def f_test_variance(a, b) -> float:
    """Two-sided F-test for equal variances, ``2 * min(cdf, sf)`` capped at 1."""
    a, b = _check_pair(a, b)
    return float(_f_p(a.var(ddof=1), len(a), b.var(ddof=1), len(b)))


# ---------------------------------------------------------------------
# invariance test


class InvarianceTester:
    """Tests H0,S on a fixed set of environments.

    Y is regressed on X_S over the pooled data; the residuals of every
    environment are compared with those of all other environments by a
    Welch t-test and an F-test, and the smallest p-value is
    Bonferroni-corrected by ``2 * len(envs)``.

    Everything is computed from per-environment moments (count, sums and
    cross-products of the centred data), so testing a set costs nothing
    in the number of observations and many sets are tested in one batch.
    """

    def __init__(self, envs: EnvironmentSet):
        if len(envs) < 2:
            raise ValueError("the invariance test needs at least two environments")
        self.response = envs.response
        center = envs.center
        moments = [e.moments(center) for e in envs.environments]
        self.counts = np.array([m[0] for m in moments], dtype=float)
        if self.counts.min() < 2:
            raise SampleSizeError("each environment needs at least two observations")
        self.sums = np.array([m[1] for m in moments])
        self.cross = np.array([m[2] for m in moments])
        self.n = self.counts.sum()
        self.mean = self.sums.sum(axis=0) / self.n
        self.scatter = self.cross.sum(axis=0) - self.n * np.outer(self.mean, self.mean)

    def _coefficients(self, idx: np.ndarray) -> np.ndarray:
        """OLS slopes for a batch of equal-size sets given as an index array."""
        r = self.response
        G = self.scatter[idx[:, :, None], idx[:, None, :]]
        g = self.scatter[idx, r][..., None]
        try:
            return np.linalg.solve(G, g)[..., 0]
        except np.linalg.LinAlgError:
            return (np.linalg.pinv(G, rcond=1e-12, hermitian=True) @ g)[..., 0]

    def _residual_moments(self, sets: list) -> tuple:
        """Per-environment residual sums and sums of squares, shape (len(sets), E)."""
        q = self.scatter.shape[0]
        r = self.response
        W = np.zeros((len(sets), q))
        W[:, r] = 1.0
        by_size = {}
        for b, s in enumerate(sets):
            by_size.setdefault(len(s), []).append(b)
        for k, rows in by_size.items():
            if k == 0:
                continue
            idx = np.array([sorted(sets[b]) for b in rows], dtype=np.int64)
            beta = self._coefficients(idx)
            W[np.array(rows)[:, None], idx] = -beta
        w0 = -(W @ self.mean)  # residuals have zero pooled mean
        lin = W @ self.sums.T  # (B, E)
        E = len(self.counts)
        WC = (W @ self.cross.transpose(1, 0, 2).reshape(q, E * q)).reshape(len(sets), E, q)
        quad = (WC * W[:, None, :]).sum(axis=2)
        sums = lin + w0[:, None] * self.counts
        sq = quad + 2 * w0[:, None] * lin + (w0 ** 2)[:, None] * self.counts
        return sums, sq

    def _test_batch(self, sets: list):
        sums, sq = self._residual_moments(sets)
        n_in = self.counts[None, :]
        n_out = self.n - n_in
        tot, tot_sq = sums.sum(axis=1, keepdims=True), sq.sum(axis=1, keepdims=True)
        m_in = sums / n_in
        m_out = (tot - sums) / n_out
        v_in = np.maximum(sq - n_in * m_in ** 2, 0.0) / (n_in - 1)
        v_out = np.maximum(tot_sq - sq - n_out * m_out ** 2, 0.0) / (n_out - 1)
        t_p = _welch_p(m_in, v_in, n_in, m_out, v_out, n_out)
        f_p = _f_p(v_in, n_in, v_out, n_out)
        k = len(self.counts)
        p = np.minimum(1.0, k * (2 * np.minimum(t_p, f_p)).min(axis=1))
        return p, t_p, f_p

    def _check_size(self, sets):
        largest = max((len(s) for s in sets), default=0)
        if self.n < largest + 3:
            raise SampleSizeError(f"need at least {largest + 3} pooled observations, got {int(self.n)}")

    def p_values(self, sets) -> np.ndarray:
        sets = [frozenset(s) for s in sets]
        self._check_size(sets)
        if not sets:
            return np.zeros(0)
        return self._test_batch(sets)[0]

    def test(self, s: Iterable[int]) -> InvarianceTestResult:
        s = frozenset(s)
        self._check_size([s])
        p, t_p, f_p = self._test_batch([s])
        return InvarianceTestResult(s, float(p[0]), list(zip(t_p[0].tolist(), f_p[0].tolist())))


def test_invariance(envs: EnvironmentSet, s: Iterable[int]) -> InvarianceTestResult:
    return InvarianceTester(envs).test(s)


test_invariance.__test__ = False  # not a pytest test


# ---------------------------------------------------------------------
# Lasso


def soft_threshold(x, lam):
    return np.sign(x) * np.maximum(np.abs(x) - lam, 0.0)


def lasso_objective(G, c, yy, beta, lam) -> float:
    """(1/2n)||y - X b||^2 + lam ||b||_1 written in terms of the Gram matrix."""
    return float(0.5 * yy - c @ beta + 0.5 * beta @ G @ beta + lam * np.abs(beta).sum())


def lasso_cd(G, c, lam, beta=None, tol=1e-6, max_sweeps=10_000, history=None):
    """Cyclic coordinate descent on ``0.5 b'Gb - c'b + lam |b|_1``.

    ``G = X'X/n`` and ``c = X'y/n``. Stops when the largest coefficient
    change in a sweep drops below ``tol``. If ``history`` is a list, the
    objective (up to the constant) is appended after every sweep.
    """
    p = len(c)
    beta = np.zeros(p) if beta is None else np.array(beta, dtype=float)
    diag = np.diag(G)
    active = diag > 0
    for _ in range(max_sweeps):
        delta = 0.0
        for j in range(p):
            if not active[j]:
                continue
            old = beta[j]
            rho = c[j] - G[j] @ beta + diag[j] * old
            new = soft_threshold(rho, lam) / diag[j]
            if new != old:
                beta[j] = new
                delta = max(delta, abs(new - old))
        if history is not None:
            history.append(lasso_objective(G, c, 0.0, beta, lam))
        if delta < tol:
            break
    return beta


def _standardize(X, y):
    xm, xs = X.mean(axis=0), X.std(axis=0)
    xs = np.where(xs > 0, xs, 1.0)
    ym = y.mean()
    Z = (X - xm) / xs
    return Z, y - ym, xm, xs, ym


def lasso(X, y, lam, tol=1e-6):
    """Lasso on standardized columns; returns ``(coef, intercept)`` in original units."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    Z, yc, xm, xs, ym = _standardize(X, y)
    n = len(y)
    beta = lasso_cd(Z.T @ Z / n, Z.T @ yc / n, lam, tol=tol)
    coef = beta / xs
    return coef, float(ym - xm @ coef)


def lambda_grid(X, y, n_lambdas=50, ratio=1e-3):
    Z, yc, *_ = _standardize(np.asarray(X, float), np.asarray(y, float))
    lam_max = np.abs(Z.T @ yc).max() / len(yc)
    return np.geomspace(lam_max, lam_max * ratio, n_lambdas)


def lasso_cv(X, y, folds=10, seed=0, n_lambdas=50, ratio=1e-3, tol=1e-6):
    """Select the Lasso penalty by k-fold CV.

    Returns ``(coef, intercept, lam, lambdas, cv_error)``. Ties in CV
    error go to the larger penalty.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if not 2 <= folds <= n:
        raise ValueError("need 2 <= folds <= n")
    lambdas = lambda_grid(X, y, n_lambdas, ratio)
    assign = np.empty(n, dtype=int)
    assign[np.random.default_rng(seed).permutation(n)] = np.arange(n) % folds
    errors = np.zeros((folds, len(lambdas)))
    for k in range(folds):
        train, test = assign != k, assign == k
        Z, yc, xm, xs, ym = _standardize(X[train], y[train])
        m = len(yc)
        G, c = Z.T @ Z / m, Z.T @ yc / m
        Zt = (X[test] - xm) / xs
        beta = np.zeros(p)
        for i, lam in enumerate(lambdas):
            beta = lasso_cd(G, c, lam, beta, tol=tol)
            errors[k, i] = np.mean((y[test] - ym - Zt @ beta) ** 2)
    cv = errors.mean(axis=0)
    best = int(np.argmin(cv))
    coef, intercept = lasso(X, y, lambdas[best], tol=tol)
    return coef, intercept, float(lambdas[best]), lambdas, cv


def lasso_markov_blanket(X, y, folds=10, seed=0, threshold=1e-8) -> frozenset:
    """Columns of ``X`` with a non-zero coefficient in the CV-tuned Lasso."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.ptp(y) == 0:
        return frozenset()
    if np.all(np.ptp(X, axis=0) == 0):
        return frozenset()
    coef = lasso_cv(X, y, folds=folds, seed=seed)[0]
    return frozenset(int(j) for j in np.flatnonzero(np.abs(coef) > threshold))
