"""The common-bits family: each variable observes a subset of shared fair bits.

With ``r`` independent uniform bits ``b_1..b_r`` valued in ``{-1, +1}`` and
``X_i = (b_j : j in I_i)``, the spectrum of ``B`` and its eigenvectors are
known in closed form.  For every subset ``J`` of bits the inclusion count
``w(J) = #{i : J subset of I_i}`` is an eigenvalue, with feature functions
``prod_{j in J} b_j / sqrt(w(J))`` on the variables that see all of ``J``.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import numpy as np

from .core import Alphabet, DistributionSet, from_joint, joint_cap
from .errors import CapacityError, DomainError, FormatError, ValidationError
from .spectral import FeatureSet

MAX_BITS = 20


def _pattern_symbol(values) -> str:
    return ",".join("+1" if v > 0 else "-1" for v in values)


def _patterns(nbits: int) -> np.ndarray:
    """All ``{-1,+1}^nbits`` patterns, ``-1`` first, last bit fastest."""
    if nbits == 0:
        return np.zeros((1, 0), dtype=int)
    return np.array(list(itertools.product((-1, 1), repeat=nbits)), dtype=int)


@dataclass(frozen=True)
class BitsInstance:
    """``r`` shared bits and, per variable, the 1-based indices it observes."""

    r: int
    index_sets: tuple

    def __post_init__(self):
        sets = tuple(tuple(sorted(set(int(j) for j in s))) for s in self.index_sets)
        object.__setattr__(self, "index_sets", sets)
        if self.r < 1:
            raise ValidationError("r must be >= 1")
        if len(sets) < 2:
            raise ValidationError("need at least two variables")
        for i, s in enumerate(sets):
            if not s:
                raise ValidationError(f"index set {i + 1} is empty")
            if s[0] < 1 or s[-1] > self.r:
                raise ValidationError(f"index set {i + 1} has bits outside 1..{self.r}")

    @property
    def d(self) -> int:
        return len(self.index_sets)

    @property
    def dims(self) -> tuple:
        return tuple(2 ** len(s) for s in self.index_sets)

    @property
    def m(self) -> int:
        return int(sum(self.dims))

    def alphabets(self) -> tuple:
        return tuple(
            Alphabet(tuple(_pattern_symbol(p) for p in _patterns(len(s)))) for s in self.index_sets
        )

    def to_dict(self) -> dict:
        return {"r": self.r, "index_sets": [list(s) for s in self.index_sets]}

    @classmethod
    def from_dict(cls, data: dict) -> "BitsInstance":
        try:
            return cls(int(data["r"]), tuple(tuple(s) for s in data["index_sets"]))
        except (KeyError, TypeError) as exc:
            raise FormatError(f"bits instance needs 'r' and 'index_sets': {exc}") from exc

    @classmethod
    def from_json(cls, text: str) -> "BitsInstance":
        return cls.from_dict(json.loads(text))

    @classmethod
    def parse(cls, r: int, sets: str) -> "BitsInstance":
        """Parse ``"1,2;2,3;1,3"`` style index sets."""
        try:
            parsed = tuple(tuple(int(x) for x in part.split(",") if x.strip()) for part in sets.split(";"))
        except ValueError as exc:
            raise FormatError(f"cannot parse index sets {sets!r}") from exc
        return cls(r, parsed)


def triangle() -> BitsInstance:
    """Three bits, three variables, each seeing one pair of bits."""
    return BitsInstance(3, ((1, 2), (2, 3), (1, 3)))


def bit_patterns(inst: BitsInstance) -> np.ndarray:
    """``2^r x r`` matrix of all bit patterns, in the order of the full joint's support."""
    return _patterns(inst.r)


def observation_indices(inst: BitsInstance) -> np.ndarray:
    """``2^r x d`` symbol indices of ``X_i`` for every bit pattern."""
    pats = bit_patterns(inst)
    cols = []
    for s in inst.index_sets:
        sub = (pats[:, [j - 1 for j in s]] > 0).astype(int)
        weights = 2 ** np.arange(len(s) - 1, -1, -1)
        cols.append(sub @ weights)
    return np.stack(cols, axis=1)


def bits_joint(inst: BitsInstance) -> DistributionSet:
    """Exact distribution of ``(X_1..X_d)`` with the full joint table."""
    if inst.r > MAX_BITS:
        raise CapacityError(f"r={inst.r} exceeds the {MAX_BITS}-bit enumeration limit")
    cells = int(np.prod(inst.dims, dtype=object))
    if cells > joint_cap():
        raise CapacityError(f"full joint needs {cells} cells (cap {joint_cap()})")
    idx = observation_indices(inst)
    table = np.zeros(inst.dims)
    np.add.at(table, tuple(idx.T), 2.0 ** -inst.r)
    return from_joint(inst.alphabets(), table, metadata={"bits": inst.to_dict()})


def inclusion_count(inst: BitsInstance, subset) -> int:
    """``w(J)``: how many index sets contain ``J`` (``w(empty) = d``)."""
    j = set(subset)
    return sum(1 for s in inst.index_sets if j.issubset(s))


def ordered_patterns(inst: BitsInstance) -> list:
    """``(J, w(J))`` for every ``J`` with ``w(J) > 0``, by decreasing ``w``.

    Ties are broken by subset size, then lexicographically, so the empty
    set comes first and ``ell = 1..`` index the non-trivial features.
    """
    if inst.r > MAX_BITS:
        raise CapacityError(f"r={inst.r} exceeds the {MAX_BITS}-bit enumeration limit")
    out = []
    for size in range(inst.r + 1):
        for sub in itertools.combinations(range(1, inst.r + 1), size):
            w = inclusion_count(inst, sub)
            if w > 0:
                out.append((sub, w))
    out.sort(key=lambda t: (-t[1], len(t[0]), t[0]))
    return out


def bits_spectrum(inst: BitsInstance) -> np.ndarray:
    """Eigenvalues of ``B``: the positive inclusion counts padded with zeros to ``m``."""
    w = [wt for _, wt in ordered_patterns(inst)]
    out = np.zeros(inst.m)
    out[: len(w)] = w
    return out


def _feature_tables(inst: BitsInstance, subset, w):
    tables = []
    for s in inst.index_sets:
        pats = _patterns(len(s))
        if set(subset).issubset(s):
            cols = [s.index(j) for j in subset]
            vals = np.prod(pats[:, cols], axis=1) / np.sqrt(w)
        else:
            vals = np.zeros(len(pats))
        tables.append(vals[:, None].astype(float))
    return tables


def bits_features(inst: BitsInstance, ell) -> FeatureSet:
    """Analytic feature column for pattern index ``ell`` or an explicit bit subset.

    ``f_i(x_i) = prod_{j in J} b_j / sqrt(w(J))`` when ``J`` is contained in
    ``I_i`` and 0 otherwise.
    """
    if isinstance(ell, (int, np.integer)):
        pats = ordered_patterns(inst)
        if not 0 <= ell < len(pats):
            raise DomainError(f"pattern index {ell} has w=0 (only {len(pats)} positive)")
        subset, w = pats[ell]
    else:
        subset = tuple(sorted(int(j) for j in ell))
        w = inclusion_count(inst, subset)
        if w == 0:
            raise DomainError(f"w({subset}) = 0: no variable sees all of these bits")
    tables = _feature_tables(inst, subset, w)
    return FeatureSet(tuple(tables), np.array([float(w)]), inst.alphabets(), {"subset": list(subset)})


def bits_feature_matrix(inst: BitsInstance, k: int) -> FeatureSet:
    """Columns ``ell = 1..k`` of the analytic features, stacked."""
    cols = [bits_features(inst, ell) for ell in range(1, k + 1)]
    tables = tuple(np.hstack([c.tables[i] for c in cols]) for i in range(inst.d))
    hint = np.array([c.eigenvalues_hint[0] for c in cols])
    return FeatureSet(tables, hint, inst.alphabets(), {"subsets": [c.metadata["subset"] for c in cols]})


def feature_sums_on_patterns(inst: BitsInstance, fs: FeatureSet) -> np.ndarray:
    """``2^r x k`` values of ``sum_i f_i(X_i)`` at every bit pattern."""
    return fs.evaluate(observation_indices(inst))


def parity_functions(inst: BitsInstance, subsets) -> np.ndarray:
    """``2^r x len(subsets)`` values of ``prod_{j in J} b_j``."""
    pats = bit_patterns(inst)
    return np.stack([np.prod(pats[:, [j - 1 for j in s]], axis=1) for s in subsets], axis=1).astype(float)
