import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from commonstruct.bits import bits_joint, triangle
from commonstruct.core import dsbs, from_joint, product_joint, random_joint
from commonstruct.errors import DegenerateInitError, DomainError, ValidationError
from commonstruct.linalg import eigen_clusters, projector_distance
from commonstruct.mace import (
    MaceConfig,
    conditional_expectation_step,
    generalized_maximal_correlation,
    hgr_maximal_correlation,
    joint_correlation,
    linear_features,
    linear_pca_direction,
    mace_fit,
    mace_fit_k,
    normalize,
)
from commonstruct.spectral import FeatureSet, build_b, dense_features, eigendecompose

from conftest import random_dims

TIGHT = dict(max_iters=20000, rel_tol=1e-14)


def spectrum(dist):
    return eigendecompose(build_b(dist)).eigenvalues


def top_subspace_gap(lam, k):
    """Relative gap after position k (1-based, excluding the trivial top)."""
    return (lam[k] - lam[k + 1]) / lam[k]


class TestConfig:
    @pytest.mark.parametrize("kw", [dict(max_iters=0), dict(rel_tol=0.0), dict(k=0), dict(reorthogonalize_every=0)])
    def test_invalid(self, kw):
        with pytest.raises(ValidationError):
            MaceConfig(**kw)


class TestStep:
    def test_eigen_fixed_point(self, small_dist):
        fs = dense_features(small_dist, 1)
        out = conditional_expectation_step(fs, small_dist)
        for a, b in zip(out.tables, fs.tables):
            assert_allclose(a, fs.eigenvalues_hint[0] * b, atol=1e-8)

    def test_zero(self, small_dist):
        fs = FeatureSet(tuple(np.zeros((s, 2)) for s in small_dist.dims))
        out = conditional_expectation_step(fs, small_dist)
        assert all(np.all(t == 0) for t in out.tables)

    def test_two_variable_form(self, rng):
        dist = random_joint((3, 4), rng)
        f1, f2 = rng.standard_normal((3, 1)), rng.standard_normal((4, 1))
        f1 -= dist.marginals[0] @ f1
        f2 -= dist.marginals[1] @ f2
        out = conditional_expectation_step(FeatureSet((f1, f2)), dist)
        p = dist.full_joint
        e2_given_1 = (p @ f2[:, 0]) / p.sum(1)
        e1_given_2 = (p.T @ f1[:, 0]) / p.sum(0)
        assert_allclose(out.tables[0][:, 0], f1[:, 0] + e2_given_1, atol=1e-14)
        assert_allclose(out.tables[1][:, 0], f2[:, 0] + e1_given_2, atol=1e-14)

    def test_preserves_zero_mean(self, small_dist, rng):
        tables = [rng.standard_normal((s, 2)) for s in small_dist.dims]
        tables = [t - p @ t for p, t in zip(small_dist.marginals, tables)]
        out = conditional_expectation_step(FeatureSet(tuple(tables)), small_dist)
        assert np.max(np.abs(out.means(small_dist))) <= 1e-8


class TestNormalize:
    def test_scales(self, small_dist, rng):
        fs = dense_features(small_dist, 1)
        doubled = fs.with_tables([2 * t for t in fs.tables])
        assert_allclose(np.diag(doubled.gram(small_dist)), [4.0], atol=1e-12)
        back = normalize(doubled, small_dist)
        for a, b in zip(back.tables, fs.tables):
            assert_allclose(a, b, atol=1e-12)

    def test_idempotent(self, small_dist):
        fs = dense_features(small_dist, 2)
        again = normalize(fs, small_dist)
        for a, b in zip(again.tables, fs.tables):
            assert_allclose(a, b, atol=1e-12)

    def test_zero_column(self, small_dist):
        fs = FeatureSet(tuple(np.zeros((s, 1)) for s in small_dist.dims))
        with pytest.raises(DegenerateInitError):
            normalize(fs, small_dist)


class TestJointCorrelation:
    def test_eigen_columns(self, small_dist):
        fs = dense_features(small_dist, 4)
        assert_allclose(joint_correlation(fs, small_dist), fs.eigenvalues_hint - 1, atol=1e-10)

    def test_zero(self, small_dist):
        fs = FeatureSet(tuple(np.zeros((s, 1)) for s in small_dist.dims))
        assert joint_correlation(fs, small_dist)[0] == 0.0

    def test_two_variables_twice_hgr(self, rng):
        dist = random_joint((3, 4), rng)
        fs = dense_features(dist, 1)
        rho = hgr_maximal_correlation(dist)
        # joint normalization splits unit norm evenly, so the value is rho
        assert_allclose(joint_correlation(fs, dist)[0], rho, atol=1e-10)
        unit = fs.with_tables([np.sqrt(2) * t for t in fs.tables])
        assert_allclose([p @ t[:, 0] ** 2 for p, t in zip(dist.marginals, unit.tables)], [1.0, 1.0], atol=1e-12)
        assert_allclose(joint_correlation(unit, dist)[0], 2 * rho, atol=1e-10)


class TestMaceFit:
    def test_dsbs(self):
        fs, trace = mace_fit(dsbs(0.1), MaceConfig(**TIGHT))
        assert trace.converged
        assert_allclose(trace.objective[-1], 0.8, atol=1e-9)

    def test_bits(self):
        _, trace = mace_fit(bits_joint(triangle()), MaceConfig(**TIGHT))
        assert_allclose(trace.objective[-1], 1.0, atol=1e-9)

    def test_product(self, rng):
        dist = from_joint(None, product_joint([0.3, 0.7], [0.2, 0.5, 0.3], [0.6, 0.4]))
        fs, trace = mace_fit(dist, MaceConfig(max_iters=50))
        assert abs(trace.objective[-1]) <= 1e-6

    def test_invariants_and_monotone(self, rng):
        for seed in range(10):
            dist = random_joint(random_dims(rng), rng)
            fs, trace = mace_fit(dist, MaceConfig(seed=seed, max_iters=300))
            check = fs.check(dist)
            assert check["zero_mean"]["passed"] and check["orthonormal"]["passed"]
            obj = np.array(trace.objective)
            assert np.all(np.diff(obj) >= -1e-12)
            assert obj[-1] <= spectrum(dist)[1] - 1 + 1e-9

    def test_k_must_be_one(self, small_dist):
        with pytest.raises(DomainError):
            mace_fit(small_dist, MaceConfig(k=2))

    def test_max_iters_not_converged(self, small_dist):
        _, trace = mace_fit(small_dist, MaceConfig(max_iters=2, rel_tol=1e-15))
        assert not trace.converged and trace.iters_used == 2

    def test_trace_dict(self, small_dist):
        _, trace = mace_fit(small_dist, MaceConfig(max_iters=5))
        data = trace.to_dict()
        assert data["gram_schmidt_order"] == "project-then-normalize"
        assert len(data["objective"]) == data["iters"]

    def test_seed_determinism(self, small_dist):
        a, _ = mace_fit(small_dist, MaceConfig(seed=3))
        b, _ = mace_fit(small_dist, MaceConfig(seed=3))
        assert all(np.array_equal(x, y) for x, y in zip(a.tables, b.tables))


class TestMaceFitK:
    def test_bits_six_columns(self):
        dist = bits_joint(triangle())
        fs, traces = mace_fit_k(dist, MaceConfig(k=6, **TIGHT))
        obj = sorted((t.objective[-1] for t in traces), reverse=True)
        assert_allclose(obj, [1, 1, 1, 0, 0, 0], atol=1e-8)
        assert_allclose(fs.gram(dist), np.eye(6), atol=1e-8)

    def test_oracle_equivalence(self, rng):
        done = 0
        while done < 6:
            dist = random_joint(random_dims(rng, (2, 3, 4), (2, 6)), rng)
            lam = spectrum(dist)
            k = min(3, dist.m - dist.d)
            if k < dist.m - dist.d and top_subspace_gap(lam, k) < 0.02:
                continue
            fs, traces = mace_fit_k(dist, MaceConfig(k=k, seed=done, **TIGHT))
            assert_allclose(sum(t.objective[-1] for t in traces), np.sum(lam[1 : k + 1] - 1), atol=1e-6)
            oracle = dense_features(dist, k)
            assert projector_distance(fs.to_psi(dist), oracle.to_psi(dist)) <= 1e-5
            done += 1

    def test_k_too_large(self, small_dist):
        with pytest.raises(DomainError, match="m-d"):
            mace_fit_k(small_dist, MaceConfig(k=small_dist.m - small_dist.d + 1))

    def test_columns_orthonormal(self, small_dist):
        fs, _ = mace_fit_k(small_dist, MaceConfig(k=3, max_iters=200))
        assert_allclose(fs.gram(small_dist), np.eye(3), atol=1e-10)
        assert np.max(np.abs(fs.means(small_dist))) <= 1e-8

    def test_degenerate_grouping(self):
        dist = bits_joint(triangle())
        lam = spectrum(dist)
        groups = eigen_clusters(lam[1:7])
        fs, _ = mace_fit_k(dist, MaceConfig(k=3, **TIGHT))
        oracle = dense_features(dist, 3)
        assert len(groups[0]) == 3
        assert projector_distance(fs.to_psi(dist), oracle.to_psi(dist)) <= 1e-5


class TestCorrelationMeasures:
    @pytest.mark.parametrize("p", [0.05, 0.1, 0.25])
    def test_hgr_dsbs(self, p):
        assert_allclose(hgr_maximal_correlation(dsbs(p)), 1 - 2 * p, atol=1e-9)

    def test_hgr_independent(self):
        dist = from_joint(None, product_joint([0.3, 0.7], [0.2, 0.5, 0.3]))
        assert hgr_maximal_correlation(dist) <= 1e-9

    def test_hgr_bijection(self, rng):
        p = rng.dirichlet(np.ones(4))
        perm = rng.permutation(4)
        table = np.zeros((4, 4))
        table[np.arange(4), perm] = p
        assert_allclose(hgr_maximal_correlation(from_joint(None, table)), 1.0, atol=1e-9)

    def test_gmc_pairwise_independent(self):
        # X3 = X1 xor X2 with fair bits: pairwise independent but dependent
        table = np.zeros((2, 2, 2))
        for a in range(2):
            for b in range(2):
                table[a, b, a ^ b] = 0.25
        assert generalized_maximal_correlation(from_joint(None, table)) <= 1e-6

    def test_gmc_bits(self):
        assert_allclose(generalized_maximal_correlation(bits_joint(triangle())), 0.5, atol=1e-12)

    def test_gmc_d2_is_hgr(self, rng):
        dist = random_joint((3, 4), rng)
        assert_allclose(generalized_maximal_correlation(dist), hgr_maximal_correlation(dist), rtol=1e-12)

    def test_gmc_mace_route(self, small_dist):
        a = generalized_maximal_correlation(small_dist)
        b = generalized_maximal_correlation(small_dist, method="mace")
        assert_allclose(a, b, atol=1e-6)

    def test_gmc_range(self, rng):
        for _ in range(10):
            g = generalized_maximal_correlation(random_joint(random_dims(rng), rng))
            assert -1e-12 <= g <= 1 + 1e-9

    def test_unknown_method(self, small_dist):
        with pytest.raises(DomainError):
            generalized_maximal_correlation(small_dist, method="nope")


class TestPcaReduction:
    def test_linear_family(self, rng):
        dist = random_joint((3, 4, 3), rng)
        values = [np.arange(s, dtype=float) ** 1.5 for s in dist.dims]
        weights, obj = linear_pca_direction(dist, values)
        # independent oracle: covariance of standardized values by enumeration of the full joint
        grid = np.stack(np.meshgrid(*[np.arange(s) for s in dist.dims], indexing="ij"), -1).reshape(-1, 3)
        prob = dist.full_joint.ravel()
        z = np.stack([values[i][grid[:, i]] for i in range(3)], axis=1)
        z = (z - prob @ z) / np.sqrt(prob @ (z - prob @ z) ** 2)
        corr = (z * prob[:, None]).T @ z
        w, v = np.linalg.eigh(corr)
        assert_allclose(obj, w[-1] - 1, atol=1e-12)
        assert projector_distance(weights[:, None], v[:, -1:]) <= 1e-9
        fs = linear_features(dist, values, weights)
        assert_allclose(joint_correlation(fs, dist)[0], obj, atol=1e-12)
        assert_allclose(np.diag(fs.gram(dist)), [1.0], atol=1e-12)
        assert obj <= spectrum(dist)[1] - 1 + 1e-12


class TestProperties:
    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_monotone_objective(self, seed):
        rng = np.random.default_rng(seed)
        dist = random_joint(random_dims(rng), rng)
        _, trace = mace_fit(dist, MaceConfig(seed=seed, max_iters=100))
        assert np.all(np.diff(trace.objective) >= -1e-12)
