"""Multivariate alternating conditional expectation (MACE).

Power iteration on ``B`` written as conditional-expectation updates on
per-variable functions, plus the correlation measures built on it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import DistributionSet
from .errors import DegenerateInitError, DomainError, ValidationError
from .spectral import FeatureSet, build_b, eigendecompose


@dataclass(frozen=True)
class MaceConfig:
    k: int = 1
    max_iters: int = 500
    rel_tol: float = 1e-9
    seed: int = 0
    reorthogonalize_every: int = 1

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValidationError("max_iters must be >= 1")
        if not self.rel_tol > 0:
            raise ValidationError("rel_tol must be > 0")
        if self.k < 1:
            raise ValidationError("k must be >= 1")
        if self.reorthogonalize_every < 1:
            raise ValidationError("reorthogonalize_every must be >= 1")


@dataclass
class MaceTrace:
    objective: list = field(default_factory=list)
    converged: bool = False
    iters_used: int = 0
    seed: int = 0
    gram_schmidt_order: str = "project-then-normalize"

    def to_dict(self) -> dict:
        return {
            "objective": list(map(float, self.objective)),
            "converged": self.converged,
            "iters": self.iters_used,
            "seed": self.seed,
            "gram_schmidt_order": self.gram_schmidt_order,
        }


def _center(tables, dist):
    return [t - (p @ t)[None, :] for p, t in zip(dist.marginals, tables)]


def conditional_expectation_step(fs: FeatureSet, dist: DistributionSet) -> FeatureSet:
    """``f_i <- f_i + E[sum_{j != i} f_j(X_j) | X_i]`` for every variable and column."""
    new = []
    for i in range(dist.d):
        acc = fs.tables[i].copy()
        for j in range(dist.d):
            if j != i:
                acc += dist.conditional(i, j) @ fs.tables[j]
        new.append(acc)
    return fs.with_tables(new)


def joint_norms(fs: FeatureSet, dist: DistributionSet) -> np.ndarray:
    return np.diag(fs.gram(dist)).copy()


def normalize(fs: FeatureSet, dist: DistributionSet) -> FeatureSet:
    """Scale each column so that ``sum_i E[f_i^2] = 1``."""
    sq = joint_norms(fs, dist)
    if np.any(sq <= 0):
        raise DegenerateInitError("a feature column has zero joint norm; re-seed the initialization")
    scale = 1.0 / np.sqrt(sq)
    return fs.with_tables([t * scale[None, :] for t in fs.tables])


def joint_correlation(fs: FeatureSet, dist: DistributionSet) -> np.ndarray:
    """``E[sum_{i != j} f_i^(l)(X_i) f_j^(l)(X_j)]`` per column."""
    out = np.zeros(fs.k)
    for i in range(dist.d):
        for j in range(dist.d):
            if i != j:
                out += np.einsum("xl,xy,yl->l", fs.tables[i], dist.pairwise[i][j], fs.tables[j])
    return out


def _inner(a, b, dist):
    """``<f, g> = sum_i E[f_i g_i]`` between single columns."""
    return sum(p @ (x[:, 0] * y[:, 0]) for p, x, y in zip(dist.marginals, a, b))


def _gram_schmidt(col, previous, dist):
    for prev in previous:
        c = _inner(prev, col, dist)
        col = [x - c * y for x, y in zip(col, prev)]
    return col


def _init_column(dist, rng):
    tables = [rng.standard_normal((s, 1)) for s in dist.dims]
    return _center(tables, dist)


def _fit_column(dist, cfg, rng, previous):
    """Run the power iteration for one column, deflating ``previous`` columns."""
    trace = MaceTrace(seed=cfg.seed)
    for _ in range(8):
        col = _gram_schmidt(_init_column(dist, rng), previous, dist)
        if _inner(col, col, dist) > 1e-12:
            break
    else:
        raise DegenerateInitError("could not draw a non-degenerate initialization")
    fs = normalize(FeatureSet(tuple(col)), dist)
    prev_rq = None
    for it in range(1, cfg.max_iters + 1):
        fs = conditional_expectation_step(fs, dist)
        tables = _center(fs.tables, dist)
        if previous and (it % cfg.reorthogonalize_every == 0):
            tables = _gram_schmidt(tables, previous, dist)
        fs = normalize(fs.with_tables(tables), dist)
        obj = float(joint_correlation(fs, dist)[0])
        trace.objective.append(obj)
        trace.iters_used = it
        rq = 1.0 + obj
        if prev_rq is not None and abs(rq - prev_rq) <= cfg.rel_tol * abs(rq):
            trace.converged = True
            break
        prev_rq = rq
    if previous:
        fs = normalize(fs.with_tables(_gram_schmidt(list(fs.tables), previous, dist)), dist)
        trace.objective[-1] = float(joint_correlation(fs, dist)[0])
    return fs, trace


def mace_fit(dist: DistributionSet, cfg: MaceConfig = MaceConfig()):
    """Top functional representation by MACE; returns ``(features, trace)``."""
    if cfg.k != 1:
        raise DomainError("mace_fit computes one column; use mace_fit_k for k > 1")
    rng = np.random.default_rng(cfg.seed)
    fs, trace = _fit_column(dist, cfg, rng, [])
    fs = FeatureSet(fs.tables, np.array([1.0 + trace.objective[-1]]), dist.alphabets)
    return fs, trace


def mace_fit_k(dist: DistributionSet, cfg: MaceConfig):
    """Sequential top-``k`` columns with Gram-Schmidt deflation.

    Returns ``(features, [trace per column])``; the features carry
    ``1 + objective`` per column as their eigenvalue hint.
    """
    if cfg.k > dist.m - dist.d:
        raise DomainError(f"k must be <= m-d = {dist.m - dist.d}, got {cfg.k}")
    rng = np.random.default_rng(cfg.seed)
    columns, traces = [], []
    for _ in range(cfg.k):
        fs, trace = _fit_column(dist, cfg, rng, [list(c.tables) for c in columns])
        columns.append(fs)
        traces.append(trace)
    tables = tuple(np.hstack([c.tables[i] for c in columns]) for i in range(dist.d))
    hint = np.array([1.0 + t.objective[-1] for t in traces])
    return FeatureSet(tables, hint, dist.alphabets), traces


def _second_eigenvalue(dist):
    return float(eigendecompose(build_b(dist)).eigenvalues[1])


def generalized_maximal_correlation(dist: DistributionSet, method: str = "eig", cfg: MaceConfig | None = None) -> float:
    """``(lambda^(1) - 1) / (d - 1)``: zero iff the variables are pairwise independent."""
    if method == "eig":
        top = _second_eigenvalue(dist) - 1.0
    elif method == "mace":
        _, trace = mace_fit(dist, cfg or MaceConfig(max_iters=5000, rel_tol=1e-13))
        top = trace.objective[-1]
    else:
        raise DomainError(f"unknown method {method!r}")
    return top / (dist.d - 1)


def hgr_maximal_correlation(dist: DistributionSet, i: int = 0, j: int = 1) -> float:
    """HGR maximal correlation: second singular value of the ``(i, j)`` block of ``B``."""
    p, q = dist.marginals[i], dist.marginals[j]
    if np.any(p <= 0) or np.any(q <= 0):
        raise DomainError("zero-probability symbol in the pair")
    block = dist.pairwise[i][j] / np.outer(np.sqrt(p), np.sqrt(q))
    s = np.linalg.svd(block, compute_uv=False)
    return float(s[1]) if len(s) > 1 else 0.0


def linear_features(dist: DistributionSet, values, weights) -> FeatureSet:
    """Features ``f_i(x) = w_i z_i(x)`` with ``z_i`` the standardized numeric symbol value."""
    tables = []
    for p, val, w in zip(dist.marginals, values, weights):
        val = np.asarray(val, dtype=float)
        mu = p @ val
        sd = np.sqrt(p @ (val - mu) ** 2)
        tables.append((w * (val - mu) / sd)[:, None])
    return FeatureSet(tuple(tables), None, dist.alphabets)


def linear_pca_direction(dist: DistributionSet, values):
    """Best linear family member: top eigenvector of the correlation matrix.

    Returns ``(weights, objective)`` where ``objective`` is the joint
    correlation of :func:`linear_features` at those weights.
    """
    d = dist.d
    z = []
    for p, val in zip(dist.marginals, values):
        val = np.asarray(val, dtype=float)
        mu = p @ val
        z.append((val - mu) / np.sqrt(p @ (val - mu) ** 2))
    corr = np.array([[z[i] @ dist.pairwise[i][j] @ z[j] for j in range(d)] for i in range(d)])
    w, v = np.linalg.eigh(corr)
    top = v[:, -1] * np.sign(v[np.argmax(np.abs(v[:, -1])), -1])
    return top, float(w[-1] - 1.0)
