"""The normalized pairwise-joint matrix and its eigen-decomposition.

``B`` stacks the blocks ``P_{X_iX_j}(x_i, x_j) / sqrt(P_{X_i}(x_i) P_{X_j}(x_j))``
with identity blocks on the diagonal.  Its second through ``(m-d)``-th
eigenvectors, rescaled by ``1/sqrt(P_{X_i})``, are the feature functions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import Alphabet, DistributionSet
from .errors import CapacityError, DomainError, ValidationError
from .linalg import eigen_clusters, helmert_basis, orthonormal_basis, sin_largest_angle

DEFAULT_DENSE_CAP = 4000


@dataclass(frozen=True)
class BMatrix:
    dims: tuple
    blocks: tuple
    variant: str
    sqrt_marginals: tuple

    @property
    def d(self) -> int:
        return len(self.dims)

    @property
    def m(self) -> int:
        return int(sum(self.dims))

    @property
    def offsets(self):
        return np.concatenate([[0], np.cumsum(self.dims)])

    def dense(self) -> np.ndarray:
        return np.block([list(row) for row in self.blocks])

    def psi0(self) -> np.ndarray:
        """The trivial top eigenvector ``(1/sqrt(d)) [v_1; ...; v_d]``."""
        return np.concatenate(self.sqrt_marginals) / np.sqrt(self.d)

    def constant_directions(self) -> np.ndarray:
        """``m x d`` matrix whose i-th column is ``v_i`` placed in block i."""
        out = np.zeros((self.m, self.d))
        off = self.offsets
        for i, v in enumerate(self.sqrt_marginals):
            out[off[i]:off[i + 1], i] = v
        return out


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    dims: tuple
    variant: str = "B"

    @property
    def m(self) -> int:
        return len(self.eigenvalues)

    def part(self, ell: int, i: int) -> np.ndarray:
        """Sub-vector ``psi_i^(ell)``."""
        off = np.concatenate([[0], np.cumsum(self.dims)])
        return self.eigenvectors[off[i]:off[i + 1], ell]

    def reconstruction_error(self, b: BMatrix) -> float:
        a = b.dense()
        rec = (self.eigenvectors * self.eigenvalues) @ self.eigenvectors.T
        return float(np.linalg.norm(a - rec) / max(np.linalg.norm(a), 1e-300))


@dataclass(frozen=True)
class FeatureSet:
    """``k`` real functions per variable, stored as ``|X_i| x k`` tables."""

    tables: tuple
    eigenvalues_hint: np.ndarray | None = None
    alphabets: tuple | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def k(self) -> int:
        return self.tables[0].shape[1]

    @property
    def d(self) -> int:
        return len(self.tables)

    def column(self, ell: int) -> "FeatureSet":
        hint = None if self.eigenvalues_hint is None else self.eigenvalues_hint[ell:ell + 1]
        return FeatureSet(tuple(t[:, ell:ell + 1] for t in self.tables), hint, self.alphabets)

    def with_tables(self, tables) -> "FeatureSet":
        return FeatureSet(tuple(np.asarray(t, dtype=float) for t in tables), self.eigenvalues_hint, self.alphabets)

    def means(self, dist: DistributionSet) -> np.ndarray:
        """``d x k`` matrix of ``E[f_i^(l)(X_i)]``."""
        return np.stack([p @ t for p, t in zip(dist.marginals, self.tables)])

    def gram(self, dist: DistributionSet) -> np.ndarray:
        """``sum_i E[f_i f_i^T]``, the joint inner-product matrix."""
        return sum((t * p[:, None]).T @ t for p, t in zip(dist.marginals, self.tables))

    def to_psi(self, dist: DistributionSet) -> np.ndarray:
        """Stack ``sqrt(P_{X_i}) f_i`` into an ``m x k`` matrix."""
        return np.concatenate([np.sqrt(p)[:, None] * t for p, t in zip(dist.marginals, self.tables)])

    @classmethod
    def from_psi(cls, psi, dist: DistributionSet, eigenvalues_hint=None) -> "FeatureSet":
        psi = np.asarray(psi, dtype=float).reshape(dist.m, -1)
        off = dist.offsets
        tables = tuple(
            psi[off[i]:off[i + 1]] / np.sqrt(dist.marginals[i])[:, None] for i in range(dist.d)
        )
        return cls(tables, eigenvalues_hint, dist.alphabets)

    def evaluate(self, samples) -> np.ndarray:
        """Per-sample ``sum_i f_i(x_i)``; ``samples`` is ``n x d`` indices."""
        samples = np.asarray(samples)
        return sum(t[samples[:, i]] for i, t in enumerate(self.tables))

    def check(self, dist: DistributionSet, mean_tol=1e-8, gram_tol=1e-6) -> dict:
        mean_err = float(np.max(np.abs(self.means(dist))))
        gram_err = float(np.max(np.abs(self.gram(dist) - np.eye(self.k))))
        return {
            "zero_mean": {"passed": mean_err <= mean_tol, "residual": mean_err},
            "orthonormal": {"passed": gram_err <= gram_tol, "residual": gram_err},
        }

    def to_dict(self) -> dict:
        alphabets = self.alphabets or tuple(Alphabet.of_size(t.shape[0]) for t in self.tables)
        return {
            "schema": "featureset/1",
            "k": self.k,
            "alphabet_order": [list(a.symbols) for a in alphabets],
            "tables": [
                {sym: t[x].tolist() for x, sym in enumerate(a.symbols)}
                for a, t in zip(alphabets, self.tables)
            ],
            "eigenvalues_hint": None if self.eigenvalues_hint is None else np.asarray(self.eigenvalues_hint).tolist(),
            "metadata": self.metadata,
        }

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1), encoding="utf-8")

    @classmethod
    def from_dict(cls, data: dict) -> "FeatureSet":
        alphabets = tuple(Alphabet(tuple(s)) for s in data["alphabet_order"])
        tables = []
        for a, tab in zip(alphabets, data["tables"]):
            tables.append(np.array([tab[s] for s in a.symbols], dtype=float).reshape(a.size, data["k"]))
        hint = data.get("eigenvalues_hint")
        return cls(tuple(tables), None if hint is None else np.asarray(hint), alphabets, data.get("metadata", {}))

    @classmethod
    def from_json(cls, path) -> "FeatureSet":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def build_b(dist: DistributionSet) -> BMatrix:
    for i, p in enumerate(dist.marginals):
        if np.any(p <= 0):
            raise DomainError(f"variable {i} has a zero-probability symbol; drop it from the alphabet")
    v = dist.sqrt_marginals()
    d = dist.d
    blocks = [[None] * d for _ in range(d)]
    for i in range(d):
        for j in range(d):
            if i == j:
                blocks[i][j] = np.eye(len(v[i]))
            else:
                blocks[i][j] = dist.pairwise[i][j] / np.outer(v[i], v[j])
    return BMatrix(dist.dims, tuple(tuple(r) for r in blocks), "B", tuple(v))


def build_b_tilde(b: BMatrix, dist: DistributionSet | None = None) -> BMatrix:
    """``B - d psi0 psi0^T``, blockwise ``B_ij - v_i v_j^T``."""
    if b.variant != "B":
        raise ValidationError("build_b_tilde expects the plain B variant")
    v = b.sqrt_marginals if dist is None else tuple(dist.sqrt_marginals())
    blocks = tuple(
        tuple(b.blocks[i][j] - np.outer(v[i], v[j]) for j in range(b.d)) for i in range(b.d)
    )
    return BMatrix(b.dims, blocks, "B_tilde", tuple(v))


def _fix_signs(vecs):
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def _pin(vecs, cluster, trivial, first):
    """Rotate an eigen-cluster so that ``trivial`` directions occupy its ends."""
    q = vecs[:, cluster]
    if q.shape[1] <= trivial.shape[1]:
        return
    if sin_largest_angle(trivial, q) > 1e-6:
        return
    t = orthonormal_basis(q @ (q.T @ trivial))
    rest = orthonormal_basis(q - t @ (t.T @ q))
    rest = rest[:, : q.shape[1] - t.shape[1]]
    vecs[:, cluster] = np.hstack([t, rest]) if first else np.hstack([rest, t])


def eigendecompose(b: BMatrix, cap: int = DEFAULT_DENSE_CAP) -> Spectrum:
    """Dense symmetric eigen-decomposition with a reproducible basis.

    Eigenvalues are descending.  Inside an eigenvalue cluster that contains
    the trivial directions (``psi0`` at ``d``, the constant-function family
    at ``0``), those directions are placed first (``psi0``) or last (zero
    family) so that the remaining vectors satisfy the per-block
    orthogonality to ``v_i``.  Each eigenvector's largest-magnitude entry
    is made positive.
    """
    if b.m > cap:
        raise CapacityError(f"m={b.m} exceeds the dense cap {cap}; use the MACE route")
    a = b.dense()
    w, v = np.linalg.eigh((a + a.T) / 2)
    order = np.argsort(-w, kind="stable")
    w, v = w[order], v[:, order].copy()
    clusters = eigen_clusters(w)
    const = b.constant_directions()
    if b.variant == "B":
        psi0 = b.psi0()[:, None]
        zero_family = const @ helmert_basis(b.d)
        top = clusters[0]
        _pin(v, top, psi0, first=True)
        bottom = clusters[-1]
        if abs(w[bottom[0]]) <= 1e-8:
            _pin(v, bottom, zero_family, first=False)
    else:
        bottom = clusters[-1]
        if abs(w[bottom[0]]) <= 1e-8:
            _pin(v, bottom, const, first=False)
    return Spectrum(w, _fix_signs(v), b.dims, b.variant)


@dataclass
class CheckResult:
    name: str
    passed: bool
    residual: float
    note: str = ""


@dataclass
class Lemma1Report:
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "checks": [c.__dict__ for c in self.checks]}


def check_lemma1(b: BMatrix, spec: Spectrum, dist: DistributionSet) -> Lemma1Report:
    """Verify the five structural properties of the spectrum of ``B``."""
    d, m = b.d, b.m
    lam, psi = spec.eigenvalues, spec.eigenvectors
    checks = []

    checks.append(CheckResult("psd", lam[-1] >= -1e-9, float(lam[-1])))

    psi0 = b.psi0()
    vec_res = min(np.linalg.norm(psi[:, 0] - psi0), np.linalg.norm(psi[:, 0] + psi0))
    res2 = max(abs(lam[0] - d), vec_res)
    checks.append(CheckResult("top_eigenpair", res2 <= 1e-8, float(res2)))

    checks.append(
        CheckResult("second_eigenvalue_ge_1", lam[1] >= 1 - 1e-9, float(lam[1]) if m > 1 else float("nan"))
    )

    tail = lam[m - d + 1:]
    family = b.constant_directions() @ helmert_basis(d)
    null_idx = np.flatnonzero(np.abs(lam) <= 1e-9)
    note = ""
    if len(null_idx) > d - 1:
        note = f"null space has dimension {len(null_idx)} > d-1; tested containment of the zero-sum family"
        angle = sin_largest_angle(family, psi[:, null_idx])
    else:
        angle = sin_largest_angle(family, psi[:, m - d + 1:])
    tail_max = float(np.max(np.abs(tail))) if len(tail) else 0.0
    checks.append(
        CheckResult("trailing_null_family", tail_max <= 1e-9 and angle <= 1e-6, max(tail_max, angle), note)
    )

    worst = 0.0
    v = dist.sqrt_marginals()
    for ell in range(1, m - d + 1):
        for i in range(d):
            worst = max(worst, abs(spec.part(ell, i) @ v[i]))
    checks.append(CheckResult("blockwise_orthogonal", worst <= 1e-7, float(worst)))
    return Lemma1Report(checks)


def features_from_spectrum(spec: Spectrum, dist: DistributionSet, k: int) -> FeatureSet:
    """``f_i^(l) = psi_i^(l) / sqrt(P_{X_i})`` for the top ``k`` non-trivial vectors."""
    m, d = spec.m, dist.d
    if not 1 <= k <= m - d:
        raise DomainError(f"k must lie in 1..m-d = 1..{m - d}, got {k}")
    start = 1 if spec.variant == "B" else 0
    cols = slice(start, start + k)
    return FeatureSet.from_psi(spec.eigenvectors[:, cols], dist, spec.eigenvalues[cols].copy())


def quadratic_form_check(fs: FeatureSet, dist: DistributionSet) -> np.ndarray:
    """``sum_{i,j} E[f_i^(l) f_j^(l)]`` per column (equals the eigenvalue for eigen-features)."""
    out = np.zeros(fs.k)
    for i in range(fs.d):
        for j in range(fs.d):
            out += np.einsum("xl,xy,yl->l", fs.tables[i], dist.pairwise[i][j], fs.tables[j])
    return out


def dense_features(dist: DistributionSet, k: int) -> FeatureSet:
    """Shortcut: build ``B``, decompose, convert the top ``k`` features."""
    return features_from_spectrum(eigendecompose(build_b(dist)), dist, k)
