"""Large-deviation exponent of the top-``k`` feature estimate.

From ``n`` samples, the estimated top-``k`` eigenvectors of ``B_tilde`` lose
``tr(Psi^T Bt Psi) - tr(Psi_hat^T Bt Psi_hat)`` of joint correlation.  The
probability that this loss exceeds ``eps^2`` decays like
``exp(-n eps^2 / (2 alpha_k))`` where ``alpha_k`` is the top eigenvalue of a
quadratic form built from pair and quadruple marginals.

Pair-indexed vectors use column-major order: entry ``(x_i, x_j)`` of a pair
``(i, j)`` sits at ``x_j * |X_i| + x_i``.  Pair blocks of length ``m^2`` are
ordered ``(1,1), (2,1), ..., (d,1), (1,2), ..., (d,d)`` (first index fastest).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .core import DistributionSet
from .errors import DegeneracyError, DomainError, ValidationError
from .linalg import psd_sqrt
from .spectral import Spectrum, build_b, build_b_tilde, eigendecompose

GAP_TOL = 1e-9
ALPHA_FLOOR = 1e-12


def _need_joint(dist):
    if dist.full_joint is None:
        raise DomainError("this construction needs the full joint table")


def pair_order(d: int) -> list:
    """``[(0,0), (1,0), ..., (d-1,0), (0,1), ...]``, first index fastest."""
    return [(i, j) for j in range(d) for i in range(d)]


def pair_indicator(dist: DistributionSet, i: int, j: int) -> np.ndarray:
    """0/1 matrix ``E_ij`` mapping the full joint to the ``(i, j)`` pair table (column-major)."""
    _need_joint(dist)
    dims = dist.dims
    grids = np.indices(dims).reshape(len(dims), -1)
    rows = grids[j] * dims[i] + grids[i]
    out = np.zeros((dims[i] * dims[j], grids.shape[1]))
    out[rows, np.arange(grids.shape[1])] = 1.0
    return out


def pair_table(dist: DistributionSet, i: int, j: int) -> np.ndarray:
    """Column-major vector of ``P_{X_iX_j}``; for ``i == j`` it is ``diag(P_{X_i})``."""
    return pair_indicator(dist, i, j) @ dist.full_joint.ravel()


def build_L(dist: DistributionSet, i: int, j: int) -> np.ndarray:
    """Linear map from the pair perturbation ``xi_{X_iX_j}`` to ``vec(Xi_ij)``.

    Entry at row ``(x'_j, x_i)``, column ``(xh'_j, xh_i)``::

        sqrt(P_ij(xh_i, xh'_j) / (P_i(x_i) P_j(x'_j)))
          * [ d(x_i,xh_i) d(x'_j,xh'_j)
              - (d(x_i,xh_i)/P_i(x_i) + d(x'_j,xh'_j)/P_j(x'_j)) (P_ij(x_i,x'_j) + P_i P_j) / 2 ]
    """
    pi, pj = dist.marginals[i], dist.marginals[j]
    ni, nj = len(pi), len(pj)
    pij = dist.pairwise[i][j]
    # axes: (x_j', x_i) for rows, (xh_j', xh_i) for columns
    di = np.eye(ni)[None, :, None, :]
    dj = np.eye(nj)[:, None, :, None]
    scale = np.sqrt(pij.T[None, None, :, :] / np.outer(pj, pi)[:, :, None, None])
    mix = (pij.T + np.outer(pj, pi))[:, :, None, None]
    inner = di * dj - 0.5 * (di / pi[None, :, None, None] + dj / pj[:, None, None, None]) * mix
    return (scale * inner).reshape(ni * nj, ni * nj)


def build_C(dist: DistributionSet, i: int, j: int) -> np.ndarray:
    """``xi_{X^d} -> xi_{X_iX_j}``: ``sqrt(P(x^d) / P_ij(x_i, x_j))`` on consistent cells."""
    e = pair_indicator(dist, i, j)
    p = dist.full_joint.ravel()
    pij = e @ p
    inv = np.divide(1.0, np.sqrt(pij), out=np.zeros_like(pij), where=pij > 0)
    return inv[:, None] * e * np.sqrt(p)[None, :]


def build_quadruple(dist: DistributionSet, i: int, j: int, s: int, t: int) -> np.ndarray:
    """``P_{ijst} / (sqrt(P_ij) sqrt(P_st))``, zero where either pair probability is zero."""
    ea, eb = pair_indicator(dist, i, j), pair_indicator(dist, s, t)
    p = dist.full_joint.ravel()
    quad = (ea * p[None, :]) @ eb.T
    pa, pb = ea @ p, eb @ p
    ra = np.divide(1.0, np.sqrt(pa), out=np.zeros_like(pa), where=pa > 0)
    rb = np.divide(1.0, np.sqrt(pb), out=np.zeros_like(pb), where=pb > 0)
    return ra[:, None] * quad * rb[None, :]


def build_J0(dist: DistributionSet) -> np.ndarray:
    """Stack ``L_ij C_ij`` over all ordered pairs: ``zeta = J0 xi_{X^d}``."""
    _need_joint(dist)
    return np.vstack([build_L(dist, i, j) @ build_C(dist, i, j) for i, j in pair_order(dist.d)])


def build_J(dist: DistributionSet) -> np.ndarray:
    """Block matrix with blocks ``L_ij B_{ij;st} L_st^T``."""
    _need_joint(dist)
    pairs = pair_order(dist.d)
    ls = {pr: build_L(dist, *pr) for pr in pairs}
    rows = []
    for a in pairs:
        rows.append([ls[a] @ build_quadruple(dist, *a, *b) @ ls[b].T for b in pairs])
    return np.block(rows)


def xi_matrix(dist: DistributionSet, xi_joint) -> np.ndarray:
    """Dense first-order perturbation ``Xi`` of ``B_tilde`` for a joint perturbation vector."""
    zeta = build_J0(dist) @ np.asarray(xi_joint, dtype=float)
    return zeta_to_matrix(zeta, dist.dims)


def zeta_to_matrix(zeta, dims) -> np.ndarray:
    """Inverse of the pair-block vectorization: rebuild the ``m x m`` matrix."""
    d = len(dims)
    off = np.concatenate([[0], np.cumsum(dims)])
    out = np.zeros((off[-1], off[-1]))
    pos = 0
    for i, j in pair_order(d):
        size = dims[i] * dims[j]
        out[off[i]:off[i + 1], off[j]:off[j + 1]] = zeta[pos:pos + size].reshape(dims[j], dims[i]).T
        pos += size
    return out


def tracy_singh(x, y, dims) -> np.ndarray:
    """Partitioned Kronecker product: blocks ``x_b (kron) y_a``, ``a`` fastest."""
    off = np.concatenate([[0], np.cumsum(dims)])
    parts = []
    for b in range(len(dims)):
        for a in range(len(dims)):
            parts.append(np.kron(x[off[b]:off[b + 1]], y[off[a]:off[a + 1]]))
    return np.concatenate(parts)


def b_tilde_spectrum(dist: DistributionSet) -> Spectrum:
    return eigendecompose(build_b_tilde(build_b(dist)))


def check_gap(eigenvalues, k: int) -> None:
    lam = np.asarray(eigenvalues)
    if not 1 <= k < len(lam):
        raise DomainError(f"k must be in 1..{len(lam) - 1}")
    if not lam[k - 1] > lam[k] + GAP_TOL:
        raise DegeneracyError(
            f"no eigengap at k={k}: lambda^({k})={lam[k - 1]:.12g}, lambda^({k + 1})={lam[k]:.12g}"
        )


def build_Gk(spec: Spectrum, k: int) -> np.ndarray:
    """``sum_{i<=k<j} (psi_j o psi_i)(psi_j o psi_i)^T / (lambda_i - lambda_j)`` over the ``B_tilde`` spectrum."""
    check_gap(spec.eigenvalues, k)
    lam, vecs = spec.eigenvalues, spec.eigenvectors
    m = len(lam)
    cols, weights = [], []
    for i in range(k):
        for j in range(k, m):
            cols.append(tracy_singh(vecs[:, j], vecs[:, i], spec.dims))
            weights.append(1.0 / (lam[i] - lam[j]))
    a = np.stack(cols, axis=1)
    g = (a * np.asarray(weights)[None, :]) @ a.T
    return (g + g.T) / 2


@dataclass
class ExponentResult:
    k: int
    alpha_k: float
    exponent: float
    gap_ok: bool
    alpha_via_j0: float

    def to_dict(self) -> dict:
        out = asdict(self)
        if not np.isfinite(self.exponent):
            out["exponent"] = "inf"
        return out


def error_exponent(dist: DistributionSet, k: int, spec: Spectrum | None = None) -> ExponentResult:
    """``1 / (2 alpha_k)`` with ``alpha_k = ||G^(1/2) J G^(1/2)||_2``.

    ``alpha_via_j0`` is the same quantity computed as ``||J0^T G J0||_2``.
    An ``alpha_k`` below ``1e-12`` gives an infinite exponent.
    """
    _need_joint(dist)
    spec = spec or b_tilde_spectrum(dist)
    g = build_Gk(spec, k)
    root = psd_sqrt(g)
    j = build_J(dist)
    alpha = float(np.linalg.norm(root @ j @ root, 2))
    j0 = build_J0(dist)
    alt = float(np.linalg.norm(j0.T @ g @ j0, 2))
    exponent = float("inf") if alpha <= ALPHA_FLOOR else 1.0 / (2.0 * alpha)
    return ExponentResult(k, alpha, exponent, True, alt)


def top_k_loss(a: np.ndarray, u: np.ndarray, lam: np.ndarray, u_hat: np.ndarray, k: int) -> float:
    """``tr(U^T A U) - tr(U_hat^T A U_hat)`` written so that no O(1) terms cancel.

    ``u``/``lam`` is the full eigensystem of ``A`` (descending).
    """
    kept = np.sum((u.T @ u_hat) ** 2, axis=1)
    gained = lam[k:] @ kept[k:]
    resid = u[:, :k] - u_hat @ (u_hat.T @ u[:, :k])
    lost_top = lam[:k] @ np.sum(resid**2, axis=0)
    return float(lost_top - gained)


def _top_k(a, k):
    w, v = np.linalg.eigh(a)
    return v[:, ::-1][:, :k]


def lemma2_expansion(a, xi, k: int, eps_grid=(1e-2, 1e-3, 1e-4)) -> dict:
    """Compare the exact top-``k`` trace loss under ``A + eps Xi`` with its second-order term.

    Returns the predicted coefficient ``sum_{i<=k<j} (u_i^T Xi u_j)^2 / (lambda_i - lambda_j)``
    and per-``eps`` rows with ``loss / eps^2`` and the relative deviation.
    """
    a = np.asarray(a, dtype=float)
    xi = np.asarray(xi, dtype=float)
    w, v = np.linalg.eigh(a)
    lam, u = w[::-1], v[:, ::-1]
    check_gap(lam, k)
    c = u.T @ xi @ u
    pred = float(sum(c[i, j] ** 2 / (lam[i] - lam[j]) for i in range(k) for j in range(k, len(lam))))
    rows = []
    for eps in eps_grid:
        u_hat = _top_k(a + eps * xi, k)
        loss = top_k_loss(a, u, lam, u_hat, k)
        ratio = loss / eps**2
        rows.append({"eps": eps, "loss": loss, "loss/eps^2": ratio, "rel_dev": abs(ratio - pred) / abs(pred) if pred else abs(ratio)})
    return {"predicted": pred, "rows": rows}


def empirical_b_tilde(dist: DistributionSet, counts) -> np.ndarray:
    """``B_tilde`` built from an empirical joint given by cell counts (zero marginals give zero rows)."""
    p = np.asarray(counts, dtype=float).reshape(dist.dims)
    p = p / p.sum()
    d = dist.d
    marg, blocks = [], []
    for i in range(d):
        axes = tuple(a for a in range(d) if a != i)
        marg.append(p.sum(axis=axes))
    sq = [np.sqrt(q) for q in marg]
    inv = [np.divide(1.0, s, out=np.zeros_like(s), where=s > 0) for s in sq]
    for i in range(d):
        row = []
        for j in range(d):
            if i == j:
                row.append(np.eye(len(marg[i])) - np.outer(sq[i], sq[i]))
            else:
                axes = tuple(a for a in range(d) if a not in (i, j))
                pij = p.sum(axis=axes) if axes else p
                if i > j:
                    pij = pij.T
                row.append((pij - np.outer(marg[i], marg[j])) * np.outer(inv[i], inv[j]))
        blocks.append(row)
    return np.block(blocks)


@dataclass
class MonteCarloResult:
    n_grid: list
    frequencies: list
    trials: int
    eps: float
    seed: int
    slope: float | None
    nonincreasing_pairs: int
    notes: list

    @property
    def majority_nonincreasing(self) -> bool:
        return self.nonincreasing_pairs * 2 > len(self.n_grid) - 1

    def to_dict(self) -> dict:
        out = asdict(self)
        out["majority_nonincreasing"] = self.majority_nonincreasing
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


def monte_carlo_check(
    dist: DistributionSet,
    k: int,
    n_grid=(100, 200, 400, 800),
    trials: int = 200,
    eps: float = 0.1,
    seed: int = 0,
    max_m: int = 20,
) -> MonteCarloResult:
    """Empirical frequency of a trace loss above ``eps^2`` for each sample size.

    Each trial draws an empirical joint (multinomial counts) from its own
    child seed, takes the top-``k`` eigenvectors of the empirical
    ``B_tilde`` and measures the loss against the true ``B_tilde``.  The
    reported slope is the least-squares slope of ``log(frequency)`` against
    ``n`` over the non-zero frequencies.
    """
    _need_joint(dist)
    if dist.m > max_m:
        raise DomainError(f"m={dist.m} exceeds the Monte Carlo limit {max_m}")
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    bt = build_b_tilde(build_b(dist)).dense()
    w, v = np.linalg.eigh(bt)
    lam, u = w[::-1], v[:, ::-1]
    check_gap(lam, k)
    p = dist.full_joint.ravel()
    children = np.random.SeedSequence(seed).spawn(len(n_grid))
    freqs, notes = [], []
    for n, child in zip(n_grid, children):
        hits = 0
        for trial_seed in child.spawn(trials):
            rng = np.random.default_rng(trial_seed)
            counts = rng.multinomial(int(n), p)
            u_hat = _top_k(empirical_b_tilde(dist, counts), k)
            if top_k_loss(bt, u, lam, u_hat, k) > eps**2:
                hits += 1
        freqs.append(hits / trials)
        if hits == 0:
            notes.append(f"n={n}: no exceedances in {trials} trials (frequency < {1 / trials:.3g})")
    pairs = sum(1 for a, b in zip(freqs, freqs[1:]) if b <= a)
    nz = [(n, f) for n, f in zip(n_grid, freqs) if f > 0]
    slope = None
    if len(nz) >= 2:
        x = np.array([t[0] for t in nz], dtype=float)
        y = np.log([t[1] for t in nz])
        slope = float(np.polyfit(x, y, 1)[0])
    return MonteCarloResult(list(map(int, n_grid)), freqs, trials, eps, seed, slope, pairs, notes)
