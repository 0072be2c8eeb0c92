"""Multivariate H-score and the low-rank training route.

Maximizing the MH-score over per-symbol tables is the same problem as the
best rank-``k`` approximation of ``B_tilde`` in Frobenius norm.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DistributionSet
from .errors import DomainError, TrainingError, ValidationError
from .linalg import inv_sqrt
from .spectral import FeatureSet, build_b, build_b_tilde


@dataclass(frozen=True)
class HTrainConfig:
    k: int = 1
    steps: int = 5000
    learning_rate: float = 0.05
    seed: int = 0
    init_scale: float = 0.1
    tol: float = 1e-13

    def __post_init__(self):
        if self.steps < 1:
            raise ValidationError("steps must be >= 1")
        if not self.learning_rate > 0:
            raise ValidationError("learning_rate must be > 0")
        if self.k < 1:
            raise ValidationError("k must be >= 1")


def _as_tables(tables):
    if isinstance(tables, FeatureSet):
        return tables.tables
    return tuple(np.atleast_2d(np.asarray(t, dtype=float).T).T for t in tables)


def _check_shapes(tables, dist):
    if len(tables) != dist.d:
        raise DomainError(f"expected {dist.d} tables, got {len(tables)}")
    k = tables[0].shape[1]
    for i, t in enumerate(tables):
        if t.shape != (dist.dims[i], k):
            raise DomainError(f"table {i} has shape {t.shape}, expected {(dist.dims[i], k)}")


def h_score_pair(f_i, f_j, dist: DistributionSet, i: int, j: int) -> float:
    """H-score between the vector features of variables ``i`` and ``j``."""
    f_i = np.atleast_2d(np.asarray(f_i, dtype=float).T).T
    f_j = np.atleast_2d(np.asarray(f_j, dtype=float).T).T
    if f_i.shape != (dist.dims[i], f_j.shape[1]) or f_j.shape[0] != dist.dims[j]:
        raise DomainError("table shapes do not match the alphabets or each other")
    p, q = dist.marginals[i], dist.marginals[j]
    cross = np.trace(f_i.T @ dist.pairwise[i][j] @ f_j)
    mean = (p @ f_i) @ (q @ f_j)
    cov_i = (f_i * p[:, None]).T @ f_i
    cov_j = (f_j * q[:, None]).T @ f_j
    return float(cross - mean - 0.5 * np.trace(cov_i @ cov_j))


def mh_score(tables, dist: DistributionSet) -> float:
    """Sum of pair H-scores over all ordered pairs, including ``i == j``."""
    tables = _as_tables(tables)
    _check_shapes(tables, dist)
    return sum(
        h_score_pair(tables[i], tables[j], dist, i, j) for i in range(dist.d) for j in range(dist.d)
    )


def mh_gradient(tables, dist: DistributionSet) -> list:
    """Gradient of :func:`mh_score` with respect to every table entry."""
    tables = _as_tables(tables)
    _check_shapes(tables, dist)
    total_mean = sum(p @ t for p, t in zip(dist.marginals, tables))
    total_cov = sum((t * p[:, None]).T @ t for p, t in zip(dist.marginals, tables))
    grads = []
    for i in range(dist.d):
        p = dist.marginals[i]
        g = 2 * sum(dist.pairwise[i][j] @ tables[j] for j in range(dist.d))
        g -= 2 * np.outer(p, total_mean)
        g -= 2 * (p[:, None] * tables[i]) @ total_cov
        grads.append(g)
    return grads


def tables_to_psi(tables, dist: DistributionSet) -> np.ndarray:
    tables = _as_tables(tables)
    return np.concatenate([np.sqrt(p)[:, None] * t for p, t in zip(dist.marginals, tables)])


def check_mh_identity(tables, dist: DistributionSet) -> float:
    """``| ||Bt - Psi Psi^T||^2 - (||Bt||^2 - 2 H) |`` for arbitrary tables."""
    bt = build_b_tilde(build_b(dist)).dense()
    psi = tables_to_psi(tables, dist)
    lhs = np.linalg.norm(bt - psi @ psi.T) ** 2
    rhs = np.linalg.norm(bt) ** 2 - 2 * mh_score(tables, dist)
    return float(abs(lhs - rhs))


def mh_optimum(dist: DistributionSet, k: int) -> float:
    """``(1/2) sum_{l<=k} lambda_tilde_l^2`` over the positive top-``k`` eigenvalues of ``B_tilde``."""
    w = np.linalg.eigvalsh(build_b_tilde(build_b(dist)).dense())[::-1][:k]
    return float(0.5 * np.sum(np.clip(w, 0, None) ** 2))


def whiten(tables, dist: DistributionSet, rotate: bool = True) -> FeatureSet:
    """Center each table, then map to ``sum_i E[f_i f_i^T] = I``.

    With ``rotate`` the whitened basis is further rotated (Rayleigh-Ritz)
    so that its columns diagonalize ``B`` on the learned subspace, in
    decreasing order; the hint then holds the Ritz values.
    """
    tables = [t - (p @ t)[None, :] for p, t in zip(dist.marginals, _as_tables(tables))]
    gram = sum((t * p[:, None]).T @ t for p, t in zip(dist.marginals, tables))
    fs = FeatureSet(tuple(t @ inv_sqrt(gram) for t in tables), None, dist.alphabets)
    if not rotate:
        return fs
    psi = fs.to_psi(dist)
    ritz, vecs = np.linalg.eigh(psi.T @ build_b(dist).dense() @ psi)
    vecs = vecs[:, ::-1]
    vecs *= np.sign(vecs[np.argmax(np.abs(vecs), axis=0), np.arange(vecs.shape[1])])
    return FeatureSet(tuple(t @ vecs for t in fs.tables), ritz[::-1].copy(), dist.alphabets)


def mh_train(dist: DistributionSet, cfg: HTrainConfig = HTrainConfig()):
    """Gradient ascent on the MH-score over per-symbol tables.

    Steps are taken in the ``sqrt(P) f`` coordinates (the table gradient
    divided by ``P_{X_i}(x)``), which makes the step size independent of
    how rare a symbol is.  A step that lowers the score is retried with
    half the learning rate.  Returns ``(tables, curve)`` where ``curve`` is
    the list of ``(step, score)`` pairs.
    """
    rng = np.random.default_rng(cfg.seed)
    tables = [cfg.init_scale * rng.standard_normal((s, cfg.k)) for s in dist.dims]
    lr = cfg.learning_rate
    score = mh_score(tables, dist)
    curve = [(0, score)]
    for step in range(1, cfg.steps + 1):
        grads = mh_gradient(tables, dist)
        while True:
            with np.errstate(over="ignore", invalid="ignore"):
                trial = [t + lr * g / p[:, None] for t, g, p in zip(tables, grads, dist.marginals)]
                new = mh_score(trial, dist)
            if not np.isfinite(new):
                raise TrainingError("MH-score became non-finite; lower learning_rate")
            if new >= score - 1e-15 * max(1.0, abs(score)):
                break
            lr *= 0.5
            if lr < 1e-12:
                raise TrainingError("learning rate underflow while enforcing ascent")
        tables, gain, score = trial, new - score, new
        curve.append((step, score))
        if abs(gain) <= cfg.tol * max(1.0, abs(score)):
            break
    return [np.asarray(t) for t in tables], curve
