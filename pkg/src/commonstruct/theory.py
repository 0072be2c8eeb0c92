"""Total correlation, its reduction by an attribute, and the small-rate embeddings.

An attribute ``U`` (or ``U^k``) is embedded in ``X^d`` by exponentially
tilting ``P_U P_{X^d}`` along the top feature directions.  The reduction of
total correlation achieved this way, divided by the information rate
``delta``, tends to ``lambda^(1) - 1`` (one attribute) or
``sum_{l<=k0} lambda^(l) - k0`` (``k`` attributes) as ``delta`` shrinks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import rel_entr

from .core import DistributionSet
from .errors import DeltaTooLargeError, DomainError, ValidationError
from .spectral import Spectrum, build_b, eigendecompose, features_from_spectrum

DEFAULT_DELTA_GRID = (1e-2, 1e-3, 1e-4)
EIGEN_ONE_TOL = 1e-9
GAP_FLOOR = 1e-9


def _kl(p, q) -> float:
    return float(np.sum(rel_entr(p, q)))


def _marginal(table, keep):
    axes = tuple(a for a in range(table.ndim) if a not in keep)
    return table.sum(axis=axes, keepdims=True) if axes else table


def mutual_information(table, a, b) -> float:
    """``I(A;B)`` in nats where ``A``, ``B`` are disjoint groups of axes of ``table``.

    Axes outside both groups are summed out first.
    """
    a, b = tuple(a), tuple(b)
    t = _marginal(table, a + b)
    return _kl(t, _marginal(t, a) * _marginal(t, b))


def total_correlation(full_joint, marginals=None) -> float:
    """``D(P_{X^d} || prod_i P_{X_i})`` in nats.

    ``marginals`` defaults to the marginals of ``full_joint``.
    """
    t = np.asarray(full_joint, dtype=float)
    if marginals is None:
        marginals = [_marginal(t, (i,)).ravel() for i in range(t.ndim)]
    prod = np.ones(t.shape)
    for i, p in enumerate(marginals):
        shape = [1] * t.ndim
        shape[i] = -1
        prod = prod * np.asarray(p, dtype=float).reshape(shape)
    return _kl(t, prod)


@dataclass(frozen=True)
class JointWithAttribute:
    """Joint table of attributes ``U_1..U_k`` (leading axes) and ``X_1..X_d``."""

    u_alphabets: tuple
    p_u: tuple
    joint: np.ndarray
    delta: float
    h: tuple
    q: np.ndarray
    k0: int = 1
    metadata: dict = field(default_factory=dict)

    @property
    def k(self) -> int:
        return len(self.u_alphabets)

    @property
    def d(self) -> int:
        return self.joint.ndim - self.k

    @property
    def u_axes(self) -> tuple:
        return tuple(range(self.k))

    @property
    def x_axes(self) -> tuple:
        return tuple(range(self.k, self.joint.ndim))

    def x_marginal(self) -> np.ndarray:
        return self.joint.sum(axis=self.u_axes)

    def u_marginal(self) -> np.ndarray:
        return self.joint.sum(axis=self.x_axes)

    def validate(self, tol: float = 1e-9) -> None:
        if np.any(self.joint < 0):
            raise ValidationError("joint has negative entries")
        if abs(self.joint.sum() - 1.0) > tol:
            raise ValidationError("joint does not sum to 1")
        for ell, (p, h) in enumerate(zip(self.p_u, self.h)):
            if abs(p @ h) > 1e-8 or abs(p @ h**2 - 1.0) > 1e-8:
                raise ValidationError(f"h_{ell} is not zero-mean unit-variance under p_u")


def attribute_information(jwa: JointWithAttribute) -> float:
    """``I(U^k; X^d)`` with the attributes taken jointly."""
    return mutual_information(jwa.joint, jwa.u_axes, jwa.x_axes)


def per_attribute_information(jwa: JointWithAttribute) -> np.ndarray:
    """``I(U_l; X^d)`` for each attribute."""
    return np.array([mutual_information(jwa.joint, (ell,), jwa.x_axes) for ell in range(jwa.k)])


def correlation_reduction(jwa: JointWithAttribute) -> float:
    """``sum_i I(U^k; X_i) - I(U^k; X^d)``, the drop in total correlation given ``U^k``."""
    u = jwa.u_axes
    gains = sum(mutual_information(jwa.joint, u, (a,)) for a in jwa.x_axes)
    return float(gains - attribute_information(jwa))


def correlation_reduction_divergence(jwa: JointWithAttribute) -> float:
    """Same quantity as :func:`correlation_reduction`, from its divergence definition.

    ``C(X^d) - sum_u P(u) C(X^d | U=u)`` where ``C`` is total correlation.
    """
    base = total_correlation(jwa.x_marginal())
    pu = jwa.u_marginal()
    flat = jwa.joint.reshape(pu.size, -1)
    xshape = jwa.joint.shape[jwa.k:]
    cond = 0.0
    for w, row in zip(pu.ravel(), flat):
        if w > 0:
            cond += w * total_correlation((row / w).reshape(xshape))
    return float(base - cond)


def log_likelihood_ratio(jwa: JointWithAttribute, u, reference=None) -> np.ndarray:
    """``log(P_{X^d|U=u} / P_{X^d})`` over the product alphabet (``-inf``-free on the support).

    ``reference`` is the denominator table; it defaults to the embedding's
    own ``X``-marginal.  Passing the untilted ``P_{X^d}`` the embedding was
    built from makes the ratio exactly affine in the tilt direction.
    """
    u = tuple(np.atleast_1d(u))
    px = jwa.x_marginal() if reference is None else np.asarray(reference, dtype=float)
    cond = jwa.joint[u] / jwa.u_marginal()[u]
    out = np.zeros(px.shape)
    mask = px > 0
    out[mask] = np.log(cond[mask] / px[mask])
    return out


def _sum_over_variables(fs_tables, dims):
    """Tensor of ``sum_i f_i(x_i)`` over the product alphabet, one per column."""
    k = fs_tables[0].shape[1]
    out = np.zeros((k,) + tuple(dims))
    for i, t in enumerate(fs_tables):
        shape = [k] + [1] * len(dims)
        shape[i + 1] = dims[i]
        out = out + t.T.reshape(shape)
    return out


def _check_h(h, p_u):
    h = np.asarray(h, dtype=float)
    p_u = np.asarray(p_u, dtype=float)
    if h.shape != p_u.shape:
        raise ValidationError("h and p_u must have the same length")
    if abs(p_u.sum() - 1) > 1e-12 or np.any(p_u <= 0):
        raise ValidationError("p_u must be a positive distribution")
    if abs(p_u @ h) > 1e-8 or abs(p_u @ h**2 - 1) > 1e-8:
        raise ValidationError("h must be zero-mean and unit-variance under p_u")
    return h, p_u


def count_above_one(eigenvalues) -> int:
    """``k* = max{l : lambda^(l) > 1}``, counting non-trivial eigenvalues of ``B``."""
    lam = np.asarray(eigenvalues)[1:]
    return int(np.sum(lam > 1 + EIGEN_ONE_TOL))


def max_admissible_delta(score_max: float) -> float:
    """Largest ``delta`` with ``sqrt(2 delta) * score_max < 1``."""
    if score_max <= 0:
        return float("inf")
    return 1.0 / (2.0 * score_max**2)


def build_embedding_k(
    dist: DistributionSet,
    spec: Spectrum | None = None,
    delta: float = 1e-3,
    k: int = 1,
    h_list=None,
    q=None,
    p_u_list=None,
) -> JointWithAttribute:
    """Tilt ``prod_l P_{U_l} * P_{X^d}`` along the top ``k0 = min(k, k*)`` feature sums.

    Attributes beyond ``k0`` are left independent of ``X^d``.  The default
    attribute is a uniform binary variable with ``h = (+1, -1)``.  Raises
    :class:`DeltaTooLargeError` when the tilt exponent can reach magnitude 1
    on the support, where it is no longer a small perturbation.
    """
    if dist.full_joint is None:
        raise DomainError("the embedding needs the full joint table")
    if delta < 0:
        raise ValidationError("delta must be >= 0")
    if k < 1:
        raise ValidationError("k must be >= 1")
    spec = spec or eigendecompose(build_b(dist))
    k0 = min(k, count_above_one(spec.eigenvalues))
    if p_u_list is None:
        p_u_list = [np.array([0.5, 0.5])] * k
    if h_list is None:
        h_list = [np.array([1.0, -1.0])] * k
    if len(h_list) != k or len(p_u_list) != k:
        raise ValidationError("need one h and one p_u per attribute")
    checked = [_check_h(h, p) for h, p in zip(h_list, p_u_list)]
    hs = tuple(c[0] for c in checked)
    pus = tuple(c[1] for c in checked)
    q = np.eye(k0) if q is None else np.asarray(q, dtype=float)
    if q.shape != (k0, k0) or not np.allclose(q.T @ q, np.eye(k0), atol=1e-10):
        raise ValidationError(f"q must be a {k0}x{k0} orthogonal matrix")

    px = dist.full_joint
    u_shape = tuple(len(p) for p in pus)
    exponent = np.zeros(u_shape + px.shape)
    if k0 > 0:
        fs = features_from_spectrum(spec, dist, k0)
        sums = _sum_over_variables(fs.tables, dist.dims)
        lam = spec.eigenvalues[1:k0 + 1]
        scaled = sums / np.sqrt(lam).reshape((k0,) + (1,) * px.ndim)
        g = np.tensordot(q.T, scaled, axes=1)
        for ell in range(k0):
            shape = [1] * (k + px.ndim)
            shape[ell] = u_shape[ell]
            exponent = exponent + hs[ell].reshape(shape) * g[ell][(None,) * k]
    support = np.broadcast_to(px > 0, exponent.shape)
    score_max = float(np.max(np.abs(exponent[support]))) if support.any() else 0.0
    dmax = max_admissible_delta(score_max)
    if delta >= dmax:
        raise DeltaTooLargeError(
            f"delta={delta!r} too large for a small tilt; must be < {dmax:.6g}", dmax
        )
    base = px[(None,) * k]
    for ell, p in enumerate(pus):
        shape = [1] * (k + px.ndim)
        shape[ell] = u_shape[ell]
        base = base * p.reshape(shape)
    raw = base * np.exp(np.sqrt(2 * delta) * exponent)
    joint = raw / raw.sum()
    return JointWithAttribute(
        u_alphabets=tuple(tuple(range(len(p))) for p in pus),
        p_u=pus,
        joint=joint,
        delta=float(delta),
        h=hs,
        q=q,
        k0=k0,
        metadata={"max_delta": dmax},
    )


def build_embedding(dist: DistributionSet, spec: Spectrum | None = None, delta: float = 1e-3, h=None, p_u=None):
    """Single-attribute embedding along ``sum_i f_i^(1)`` scaled by ``1/sqrt(lambda^(1))``.

    Unlike the ``k``-attribute version, the tilt is applied even when
    ``lambda^(1) = 1`` (there is still a top feature; it just carries no
    shared structure).
    """
    if dist.full_joint is None:
        raise DomainError("the embedding needs the full joint table")
    spec = spec or eigendecompose(build_b(dist))
    if dist.m - dist.d < 1:
        raise DomainError("no non-trivial feature exists (every alphabet has one symbol)")
    h = np.array([1.0, -1.0]) if h is None else h
    p_u = np.full(len(h), 1.0 / len(h)) if p_u is None else p_u
    h, p_u = _check_h(h, p_u)
    if delta < 0:
        raise ValidationError("delta must be >= 0")
    fs = features_from_spectrum(spec, dist, 1)
    s = _sum_over_variables(fs.tables, dist.dims)[0] / np.sqrt(spec.eigenvalues[1])
    px = dist.full_joint
    exponent = h.reshape((-1,) + (1,) * px.ndim) * s[None]
    support = np.broadcast_to(px > 0, exponent.shape)
    dmax = max_admissible_delta(float(np.max(np.abs(exponent[support]))))
    if delta >= dmax:
        raise DeltaTooLargeError(
            f"delta={delta!r} too large for a small tilt; must be < {dmax:.6g}", dmax
        )
    raw = p_u.reshape((-1,) + (1,) * px.ndim) * px[None] * np.exp(np.sqrt(2 * delta) * exponent)
    return JointWithAttribute(
        u_alphabets=(tuple(range(len(h))),),
        p_u=(p_u,),
        joint=raw / raw.sum(),
        delta=float(delta),
        h=(h,),
        q=np.eye(1),
        k0=1,
        metadata={"max_delta": dmax},
    )


@dataclass
class TheoremReport:
    k: int
    k0: int
    target: float
    rows: list
    monotone: bool
    final_gap: float
    passed: bool
    tolerance: float

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "k0": self.k0,
            "target": self.target,
            "rows": self.rows,
            "monotone": self.monotone,
            "final_gap": self.final_gap,
            "tolerance": self.tolerance,
            "passed": self.passed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


def theorem_target(eigenvalues, k: int) -> tuple:
    """``(target, k0)``: ``sum_{l<=k0} lambda^(l) - k0`` with ``k0 = min(k, k*)``.

    For ``k = 1`` this is ``lambda^(1) - 1`` even when ``lambda^(1) = 1``.
    """
    lam = np.asarray(eigenvalues)
    if k == 1:
        return float(lam[1] - 1.0), 1
    k0 = min(k, count_above_one(lam))
    return float(np.sum(lam[1:k0 + 1]) - k0), k0


def verify_theorem(
    dist: DistributionSet,
    k: int = 1,
    delta_grid=DEFAULT_DELTA_GRID,
    spec: Spectrum | None = None,
    tolerance: float = 0.05,
) -> TheoremReport:
    """Check that ``L / delta`` approaches the optimal-value constant as ``delta`` shrinks.

    The gap is relative to the target, or absolute when the target is zero.
    Passes when the gaps are non-increasing along the (descending) grid and
    the last gap is within ``tolerance``.
    """
    grid = [float(x) for x in delta_grid]
    if any(b >= a for a, b in zip(grid, grid[1:])):
        raise ValidationError("delta_grid must be strictly descending")
    spec = spec or eigendecompose(build_b(dist))
    target, k0 = theorem_target(spec.eigenvalues, k)
    rows = []
    for delta in grid:
        if k == 1:
            jwa = build_embedding(dist, spec, delta)
        else:
            jwa = build_embedding_k(dist, spec, delta, k)
        value = correlation_reduction(jwa)
        ratio = value / delta
        scale = abs(target) if abs(target) > 1e-12 else 1.0
        rows.append(
            {
                "delta": delta,
                "L": value,
                "L/delta": ratio,
                "target": target,
                "gap": abs(ratio - target) / scale,
                "I(U;X)/delta": attribute_information(jwa) / delta,
            }
        )
    gaps = [r["gap"] for r in rows]
    # gaps at round-off level carry no ordering information
    monotone = all(b <= a or b <= GAP_FLOOR for a, b in zip(gaps, gaps[1:]))
    final = gaps[-1]
    return TheoremReport(k, k0, target, rows, monotone, final, bool(monotone and final <= tolerance), tolerance)
