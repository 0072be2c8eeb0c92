import itertools

import numpy as np
import pytest

from commonstruct.core import random_joint


def naive_b(full_joint):
    """Entry-by-entry B from a full joint table, by explicit summation."""
    p = np.asarray(full_joint)
    dims = p.shape
    d = len(dims)
    marg = [np.array([sum(p[idx] for idx in np.ndindex(dims) if idx[i] == a) for a in range(dims[i])]) for i in range(d)]
    off = np.concatenate([[0], np.cumsum(dims)])
    b = np.zeros((off[-1], off[-1]))
    for i, j in itertools.product(range(d), repeat=2):
        for a in range(dims[i]):
            for c in range(dims[j]):
                if i == j:
                    b[off[i] + a, off[j] + c] = float(a == c)
                else:
                    pij = sum(p[idx] for idx in np.ndindex(dims) if idx[i] == a and idx[j] == c)
                    b[off[i] + a, off[j] + c] = pij / np.sqrt(marg[i][a] * marg[j][c])
    return b


def entropy(p):
    p = np.asarray(p, dtype=float).ravel()
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def random_dims(rng, d_choices=(2, 3, 4), sizes=(2, 5)):
    d = int(rng.choice(d_choices))
    return tuple(int(s) for s in rng.integers(sizes[0], sizes[1] + 1, size=d))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def small_dist(rng):
    return random_joint((3, 2, 4), rng)
