"""Small dense linear-algebra helpers used across modules."""

import numpy as np


def orthonormal_basis(a, tol=1e-10):
    """Orthonormal basis for the column span of ``a`` (via SVD)."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.size == 0:
        return np.zeros((a.shape[0], 0))
    u, s, _ = np.linalg.svd(a, full_matrices=False)
    rank = int(np.sum(s > tol * max(1.0, s[0] if s.size else 0.0)))
    return u[:, :rank]


def projector(a):
    q = orthonormal_basis(a)
    return q @ q.T


def projector_distance(a, b):
    """Frobenius distance between the orthogonal projectors onto span(a), span(b)."""
    return float(np.linalg.norm(projector(a) - projector(b)))


def sin_largest_angle(a, b):
    """Sine of the largest principal angle from span(a) into span(b)."""
    qa, qb = orthonormal_basis(a), orthonormal_basis(b)
    if qa.shape[1] == 0:
        return 0.0
    resid = qa - qb @ (qb.T @ qa)
    return float(np.linalg.norm(resid, 2))


def psd_sqrt(g):
    """Symmetric square root, clamping eigenvalue noise below zero."""
    w, v = np.linalg.eigh((g + g.T) / 2)
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.T


def inv_sqrt(g):
    w, v = np.linalg.eigh((g + g.T) / 2)
    return (v / np.sqrt(w)) @ v.T


def eigen_clusters(values, rel_tol=1e-8):
    """Group sorted (descending) eigenvalues that agree within ``rel_tol``.

    Returns a list of index arrays.
    """
    values = np.asarray(values)
    groups, start = [], 0
    for k in range(1, len(values) + 1):
        if k == len(values) or abs(values[k] - values[k - 1]) > rel_tol * max(1.0, abs(values[k - 1])):
            groups.append(np.arange(start, k))
            start = k
    return groups


def helmert_basis(d):
    """Orthonormal basis (d x d-1) of the vectors in R^d summing to zero."""
    h = np.zeros((d, d - 1))
    for k in range(1, d):
        h[:k, k - 1] = 1.0
        h[k, k - 1] = -k
        h[:, k - 1] /= np.sqrt(k * (k + 1))
    return h
