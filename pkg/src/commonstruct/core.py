"""Alphabets, categorical datasets and empirical distributions.

Every other module consumes :class:`DistributionSet`: per-variable marginals,
all pairwise joint tables and, for small instances, the full joint table.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import CapacityError, EmptyInputError, FormatError, ValidationError

DEFAULT_JOINT_CAP = 10**7
JOINT_CAP_ENV = "COMMONSTRUCT_JOINT_CAP"


def joint_cap() -> int:
    """Full-joint cell cap, overridable through ``COMMONSTRUCT_JOINT_CAP``."""
    return int(os.environ.get(JOINT_CAP_ENV, DEFAULT_JOINT_CAP))


@dataclass(frozen=True)
class Alphabet:
    symbols: tuple

    def __post_init__(self):
        object.__setattr__(self, "symbols", tuple(str(s) for s in self.symbols))
        if len(self.symbols) < 1:
            raise ValidationError("alphabet must contain at least one symbol")
        if len(set(self.symbols)) != len(self.symbols):
            raise ValidationError(f"alphabet symbols are not unique: {self.symbols}")
        object.__setattr__(self, "_lookup", {s: i for i, s in enumerate(self.symbols)})

    @property
    def size(self) -> int:
        return len(self.symbols)

    def index(self, symbol) -> int:
        return self._lookup[str(symbol)]

    def symbol(self, index: int) -> str:
        return self.symbols[index]

    @classmethod
    def of_size(cls, size: int) -> "Alphabet":
        return cls(tuple(str(i) for i in range(size)))


@dataclass(frozen=True)
class DiscreteDataset:
    """``n`` samples of ``d`` categorical variables stored as symbol indices."""

    alphabets: tuple
    samples: np.ndarray
    names: tuple = ()

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.int64)
        object.__setattr__(self, "alphabets", tuple(self.alphabets))
        if samples.ndim != 2 or samples.shape[0] < 1:
            raise EmptyInputError("dataset needs at least one sample")
        if samples.shape[1] < 2:
            raise FormatError(f"d >= 2 variables required, got d={samples.shape[1]}")
        if samples.shape[1] != len(self.alphabets):
            raise ValidationError("one alphabet per column required")
        sizes = np.array([a.size for a in self.alphabets])
        if np.any(samples < 0) or np.any(samples >= sizes[None, :]):
            raise ValidationError("sample index outside its alphabet")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        if not self.names:
            object.__setattr__(self, "names", tuple(f"X{i + 1}" for i in range(samples.shape[1])))

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def d(self) -> int:
        return self.samples.shape[1]

    @property
    def dims(self) -> tuple:
        return tuple(a.size for a in self.alphabets)

    def decode(self) -> list:
        """Rows of symbol strings, the inverse of the CSV encoding."""
        return [[self.alphabets[i].symbol(v) for i, v in enumerate(row)] for row in self.samples]

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence], names: Sequence[str] = ()) -> "DiscreteDataset":
        """Encode rows of raw cells; alphabets follow first-appearance order."""
        rows = [list(map(str, r)) for r in rows]
        if not rows:
            raise EmptyInputError("no data rows")
        d = len(rows[0])
        lookups = [dict() for _ in range(d)]
        encoded = np.empty((len(rows), d), dtype=np.int64)
        for r, row in enumerate(rows):
            if len(row) != d:
                raise FormatError(f"row {r + 1} has {len(row)} fields, expected {d}")
            for i, cell in enumerate(row):
                encoded[r, i] = lookups[i].setdefault(cell, len(lookups[i]))
        alphabets = tuple(Alphabet(tuple(lk)) for lk in lookups)
        return cls(alphabets, encoded, tuple(names))


def load_csv(path, delimiter: str = ",", header: bool = True) -> DiscreteDataset:
    """Read a UTF-8 CSV of categorical cells into a :class:`DiscreteDataset`.

    Row numbers in format errors are 1-based file line numbers.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        lines = [row for row in csv.reader(fh, delimiter=delimiter) if row]
    if not lines:
        raise EmptyInputError(f"{path} is empty")
    names = ()
    offset = 1
    if header:
        names = tuple(lines[0])
        lines = lines[1:]
        offset = 2
    if not lines:
        raise EmptyInputError(f"{path} has no data rows")
    d = len(names) if header else len(lines[0])
    if d < 2:
        raise FormatError(f"d >= 2 variables required, got d={d}")
    for r, row in enumerate(lines):
        if len(row) != d:
            raise FormatError(f"row {r + offset} has {len(row)} fields, expected {d}")
    return DiscreteDataset.from_rows(lines, names)


def write_csv(ds: DiscreteDataset, path, delimiter: str = ",") -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter=delimiter)
        w.writerow(ds.names)
        w.writerows(ds.decode())


@dataclass(frozen=True)
class DistributionSet:
    """Marginals, pairwise joints and an optional full joint.

    ``pairwise[i][j]`` has shape ``(|X_i|, |X_j|)``; the diagonal entries
    ``pairwise[i][i]`` are ``diag(P_{X_i})``.
    """

    alphabets: tuple
    marginals: tuple
    pairwise: tuple
    full_joint: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return len(self.marginals)

    @property
    def dims(self) -> tuple:
        return tuple(len(p) for p in self.marginals)

    @property
    def m(self) -> int:
        return int(sum(self.dims))

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.dims)])

    def sqrt_marginals(self) -> list:
        return [np.sqrt(p) for p in self.marginals]

    def conditional(self, i: int, j: int) -> np.ndarray:
        """Row-stochastic ``P_{X_j|X_i}`` of shape ``(|X_i|, |X_j|)``."""
        return self.pairwise[i][j] / self.marginals[i][:, None]

    def validate(self, tol: float = 1e-12) -> None:
        for i, p in enumerate(self.marginals):
            if np.any(p < 0) or abs(p.sum() - 1.0) > tol:
                raise ValidationError(f"marginal {i} is not a distribution (sum={p.sum()!r})")
        for i in range(self.d):
            for j in range(self.d):
                t = self.pairwise[i][j]
                if abs(t.sum() - 1.0) > tol or np.any(t < 0):
                    raise ValidationError(f"pairwise table ({i},{j}) is not a distribution")
                if np.max(np.abs(t.sum(1) - self.marginals[i])) > tol:
                    raise ValidationError(f"pairwise ({i},{j}) rows do not match marginal {i}")
                if np.max(np.abs(t.sum(0) - self.marginals[j])) > tol:
                    raise ValidationError(f"pairwise ({i},{j}) columns do not match marginal {j}")
                if np.max(np.abs(t - self.pairwise[j][i].T)) > tol:
                    raise ValidationError(f"pairwise ({i},{j}) is not the transpose of ({j},{i})")
            if np.max(np.abs(self.pairwise[i][i] - np.diag(self.marginals[i]))) > tol:
                raise ValidationError(f"pairwise ({i},{i}) is not diag(marginal)")
        if self.full_joint is not None:
            for i in range(self.d):
                for j in range(i + 1, self.d):
                    axes = tuple(a for a in range(self.d) if a not in (i, j))
                    if np.max(np.abs(self.full_joint.sum(axis=axes) - self.pairwise[i][j])) > tol:
                        raise ValidationError(f"full joint does not reproduce pairwise ({i},{j})")

    def to_dict(self) -> dict:
        out = {
            "schema": "distributionset/1",
            "alphabets": [list(a.symbols) for a in self.alphabets],
            "marginals": [p.tolist() for p in self.marginals],
            "pairwise": [[self.pairwise[i][j].tolist() for j in range(self.d)] for i in range(self.d)],
            "metadata": dict(self.metadata, d=self.d),
        }
        if self.full_joint is not None:
            out["full_joint"] = self.full_joint.ravel().tolist()
        return out

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1), encoding="utf-8")

    @classmethod
    def from_dict(cls, data: dict) -> "DistributionSet":
        alphabets = tuple(Alphabet(tuple(s)) for s in data["alphabets"])
        if "full_joint" in data:
            table = np.asarray(data["full_joint"], dtype=float).reshape([a.size for a in alphabets])
            return from_joint(alphabets, table, metadata=data.get("metadata", {}))
        marg = tuple(np.asarray(p, dtype=float) for p in data["marginals"])
        pw = tuple(tuple(np.asarray(t, dtype=float) for t in row) for row in data["pairwise"])
        return cls(alphabets, marg, pw, None, dict(data.get("metadata", {})))


def _pairwise_from_counts(samples, dims, weights=None):
    d = len(dims)
    pw = [[None] * d for _ in range(d)]
    for i in range(d):
        for j in range(i, d):
            flat = samples[:, i] * dims[j] + samples[:, j]
            c = np.bincount(flat, minlength=dims[i] * dims[j]).reshape(dims[i], dims[j])
            pw[i][j] = c
            pw[j][i] = c.T
    return pw


def estimate_distributions(
    ds: DiscreteDataset,
    with_full_joint: bool = False,
    alpha: float = 0.0,
    cap: int | None = None,
) -> DistributionSet:
    """Maximum-likelihood (counting) estimate of all tables.

    ``alpha`` adds pseudo-counts to every cell of the full joint; the
    pairwise and marginal tables are smoothed consistently with that.
    """
    dims = ds.dims
    cells = int(np.prod(dims, dtype=object))
    cap = joint_cap() if cap is None else cap
    if with_full_joint and cells > cap:
        raise CapacityError(
            f"full joint needs {cells} cells (cap {cap}); omit the full joint or raise the cap"
        )
    n = ds.n
    counts = _pairwise_from_counts(ds.samples, dims)
    if alpha > 0:
        total = n + alpha * cells
        pw = [[None] * ds.d for _ in range(ds.d)]
        for i in range(ds.d):
            for j in range(ds.d):
                if i == j:
                    extra = alpha * cells / dims[i]
                    pw[i][j] = (counts[i][j] + np.diag(np.full(dims[i], extra))) / total
                else:
                    extra = alpha * cells / (dims[i] * dims[j])
                    pw[i][j] = (counts[i][j] + extra) / total
    else:
        total = n
        pw = [[counts[i][j] / n for j in range(ds.d)] for i in range(ds.d)]
    marginals = tuple(np.diag(pw[i][i]).copy() for i in range(ds.d))
    full = None
    if with_full_joint:
        flat = np.ravel_multi_index(ds.samples.T, dims)
        full = np.bincount(flat, minlength=cells).astype(float)
        full = ((full + alpha) / total).reshape(dims)
    meta = {"n": n, "smoothing_alpha": alpha, "alphabet_order": "first-appearance"}
    return DistributionSet(
        ds.alphabets, marginals, tuple(tuple(r) for r in pw), full, meta
    )


def from_joint(alphabets, full_joint, tol: float = 1e-9, metadata: dict | None = None) -> DistributionSet:
    """Exact marginal and pairwise tables of a full joint probability table."""
    table = np.asarray(full_joint, dtype=float)
    d = table.ndim
    if alphabets is None:
        alphabets = tuple(Alphabet.of_size(s) for s in table.shape)
    alphabets = tuple(alphabets)
    if d < 2:
        raise FormatError("joint table must have at least two variables")
    if tuple(a.size for a in alphabets) != table.shape:
        raise ValidationError("alphabet sizes do not match the joint table shape")
    if np.any(table < 0):
        raise ValidationError("joint table has negative entries")
    s = table.sum()
    if abs(s - 1.0) > tol:
        raise ValidationError(f"joint table sums to {s!r}, not 1")
    pw = [[None] * d for _ in range(d)]
    for i in range(d):
        for j in range(i + 1, d):
            axes = tuple(a for a in range(d) if a not in (i, j))
            t = table.sum(axis=axes) if axes else table.copy()
            pw[i][j] = t
            pw[j][i] = t.T
    marginals = []
    for i in range(d):
        axes = tuple(a for a in range(d) if a != i)
        p = table.sum(axis=axes)
        marginals.append(p)
        pw[i][i] = np.diag(p)
    return DistributionSet(
        alphabets, tuple(marginals), tuple(tuple(r) for r in pw), table, dict(metadata or {})
    )


def product_joint(*marginals) -> np.ndarray:
    """Full joint table of independent variables."""
    out = np.asarray(marginals[0], dtype=float)
    for p in marginals[1:]:
        out = np.multiply.outer(out, np.asarray(p, dtype=float))
    return out


def dsbs(p: float) -> DistributionSet:
    """Doubly symmetric binary source with crossover probability ``p``."""
    return from_joint(None, np.array([[(1 - p) / 2, p / 2], [p / 2, (1 - p) / 2]]))


def random_joint(dims, rng, concentration: float = 1.0) -> DistributionSet:
    """Dirichlet-random full joint over ``dims``, strictly positive."""
    dims = tuple(int(s) for s in dims)
    w = rng.dirichlet(np.full(int(np.prod(dims)), concentration))
    w = np.maximum(w, 1e-300)
    w /= w.sum()
    return from_joint(None, w.reshape(dims))


def sample_dataset(dist: DistributionSet, n: int, rng) -> DiscreteDataset:
    """Draw ``n`` i.i.d. rows from ``dist.full_joint``."""
    if dist.full_joint is None:
        raise ValidationError("sampling requires the full joint table")
    flat = rng.choice(dist.full_joint.size, size=n, p=dist.full_joint.ravel())
    idx = np.stack(np.unravel_index(flat, dist.dims), axis=1)
    return DiscreteDataset.from_rows(
        [[dist.alphabets[i].symbol(v) for i, v in enumerate(row)] for row in idx]
    )
