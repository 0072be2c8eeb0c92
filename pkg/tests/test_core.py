import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from commonstruct.core import (
    Alphabet,
    DiscreteDataset,
    DistributionSet,
    dsbs,
    estimate_distributions,
    from_joint,
    load_csv,
    product_joint,
    random_joint,
    sample_dataset,
    write_csv,
)
from commonstruct.errors import CapacityError, EmptyInputError, FormatError, ValidationError


def write(tmp_path, text, name="data.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


class TestAlphabet:
    def test_round_trip(self):
        a = Alphabet(("x", "y", "z"))
        assert a.size == 3
        assert [a.index(a.symbol(k)) for k in range(3)] == [0, 1, 2]

    def test_duplicates_rejected(self):
        with pytest.raises(ValidationError):
            Alphabet(("a", "a"))

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            Alphabet(())


class TestLoadCsv:
    def test_three_columns(self, tmp_path):
        ds = load_csv(write(tmp_path, "A,B,C\na,x,1\nb,x,1\na,y,0\n"))
        assert (ds.d, ds.n, ds.dims) == (3, 3, (2, 2, 2))
        assert ds.names == ("A", "B", "C")
        assert ds.alphabets[2].symbols == ("1", "0")
        assert_array_equal(ds.samples, [[0, 0, 0], [1, 0, 0], [0, 1, 1]])

    def test_single_column_rejected(self, tmp_path):
        with pytest.raises(FormatError, match="d >= 2"):
            load_csv(write(tmp_path, "A\na\nb\n"))

    def test_ragged_row_named(self, tmp_path):
        with pytest.raises(FormatError, match="row 3"):
            load_csv(write(tmp_path, "A,B,C\na,x,1\nb,x\na,y,0\n"))

    def test_empty_file(self, tmp_path):
        with pytest.raises(EmptyInputError):
            load_csv(write(tmp_path, ""))

    def test_header_only(self, tmp_path):
        with pytest.raises(EmptyInputError):
            load_csv(write(tmp_path, "A,B\n"))

    def test_delimiter_and_no_header(self, tmp_path):
        ds = load_csv(write(tmp_path, "a;b\nc;b\n"), delimiter=";", header=False)
        assert ds.n == 2 and ds.dims == (2, 1)

    def test_round_trip_cells(self, tmp_path):
        rows = [["u", "7", "x y"], ["v", "7", "z"], ["u", "8", "x y"]]
        p = write(tmp_path, "A,B,C\n" + "\n".join(",".join(r) for r in rows) + "\n")
        ds = load_csv(p)
        assert ds.decode() == rows
        out = tmp_path / "out.csv"
        write_csv(ds, out)
        again = load_csv(out)
        assert again.decode() == rows
        assert again.names == ds.names


class TestDataset:
    def test_first_appearance_order(self):
        ds = DiscreteDataset.from_rows([["b", "q"], ["a", "q"], ["b", "p"]])
        assert ds.alphabets[0].symbols == ("b", "a")
        assert ds.alphabets[1].symbols == ("q", "p")

    def test_index_out_of_range(self):
        with pytest.raises(ValidationError):
            DiscreteDataset((Alphabet.of_size(2), Alphabet.of_size(2)), np.array([[0, 2]]))

    def test_samples_immutable(self):
        ds = DiscreteDataset.from_rows([["a", "b"]])
        with pytest.raises(ValueError):
            ds.samples[0, 0] = 1


class TestEstimate:
    def test_counting_example(self):
        ds = DiscreteDataset((Alphabet.of_size(2), Alphabet.of_size(2)), np.array([[0, 0], [0, 0], [1, 1], [1, 0]]))
        dist = estimate_distributions(ds, with_full_joint=True)
        assert_allclose(dist.marginals[0], [0.5, 0.5], atol=0)
        assert_allclose(dist.marginals[1], [0.75, 0.25], atol=0)
        assert dist.pairwise[0][1][0, 0] == 0.5
        assert_allclose(dist.full_joint, [[0.5, 0.0], [0.25, 0.25]])
        dist.validate()

    def test_single_sample(self):
        ds = DiscreteDataset.from_rows([["a", "b", "c"]])
        dist = estimate_distributions(ds, with_full_joint=True)
        dist.validate()
        assert all(p.tolist() == [1.0] for p in dist.marginals)

    def test_capacity(self):
        rows = np.tile(np.arange(100)[:, None], (1, 4))
        ds = DiscreteDataset(tuple(Alphabet.of_size(100) for _ in range(4)), rows)
        with pytest.raises(CapacityError, match="omit the full joint"):
            estimate_distributions(ds, with_full_joint=True)
        estimate_distributions(ds).validate()

    def test_smoothing_consistent(self, rng):
        ds = sample_dataset(random_joint((2, 3, 2), rng), 50, rng)
        dist = estimate_distributions(ds, with_full_joint=True, alpha=0.5)
        dist.validate()
        assert np.all(dist.full_joint > 0)
        assert dist.metadata["smoothing_alpha"] == 0.5

    def test_against_hand_counts(self, rng):
        ds = sample_dataset(random_joint((3, 2, 4), rng), 200, rng)
        dist = estimate_distributions(ds, with_full_joint=True)
        s = ds.samples
        for i in range(ds.d):
            for j in range(ds.d):
                if i == j:
                    continue
                hand = np.zeros(ds.dims[i : i + 1] + ds.dims[j : j + 1])
                for row in s:
                    hand[row[i], row[j]] += 1
                assert_allclose(dist.pairwise[i][j], hand / ds.n, atol=1e-15)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.lists(st.integers(0, 3), min_size=3, max_size=3), min_size=1, max_size=40))
    def test_invariants_random_datasets(self, rows):
        ds = DiscreteDataset.from_rows(rows)
        dist = estimate_distributions(ds, with_full_joint=True)
        dist.validate()


class TestFromJoint:
    def test_uniform(self):
        dist = from_joint(None, np.full((2, 2), 0.25))
        assert_allclose(dist.marginals[0], [0.5, 0.5])
        assert_allclose(dist.pairwise[0][1], np.full((2, 2), 0.25))

    def test_product_exact(self):
        p, q, r = np.array([0.2, 0.8]), np.array([0.1, 0.3, 0.6]), np.array([0.5, 0.5])
        dist = from_joint(None, product_joint(p, q, r))
        assert_allclose(dist.pairwise[0][1], np.outer(p, q), rtol=1e-15)
        assert_allclose(dist.pairwise[1][2], np.outer(q, r), rtol=1e-15)

    def test_dsbs_marginals(self):
        dist = dsbs(0.1)
        assert_allclose(dist.full_joint, [[0.45, 0.05], [0.05, 0.45]])
        assert_allclose(dist.marginals[0], [0.5, 0.5])
        assert_allclose(dist.marginals[1], [0.5, 0.5])

    def test_not_normalized(self):
        with pytest.raises(ValidationError, match="sums to"):
            from_joint(None, np.full((2, 2), 0.3))

    def test_negative(self):
        with pytest.raises(ValidationError):
            from_joint(None, np.array([[0.6, -0.1], [0.25, 0.25]]))

    def test_json_round_trip(self, small_dist, tmp_path):
        path = tmp_path / "dist.json"
        small_dist.to_json(path)
        back = DistributionSet.from_dict(json.loads(path.read_text()))
        back.validate()
        assert_allclose(back.full_joint, small_dist.full_joint)

    def test_json_without_full_joint(self, small_dist):
        data = small_dist.to_dict()
        del data["full_joint"]
        back = DistributionSet.from_dict(data)
        back.validate()
        assert back.full_joint is None
        for i in range(3):
            assert_allclose(back.marginals[i], small_dist.marginals[i])

    def test_random_valid(self, rng):
        for _ in range(20):
            random_joint(tuple(rng.integers(2, 5, size=3)), rng).validate()


class TestSampling:
    def test_sample_frequencies(self, rng):
        dist = dsbs(0.2)
        ds = sample_dataset(dist, 20000, rng)
        est = estimate_distributions(ds)
        agree = sum(est.pairwise[0][1][ds.alphabets[0].index(s), ds.alphabets[1].index(s)] for s in ("0", "1"))
        assert abs(agree - 0.8) < 0.02

    def test_requires_full_joint(self, small_dist):
        data = small_dist.to_dict()
        del data["full_joint"]
        with pytest.raises(ValidationError):
            sample_dataset(DistributionSet.from_dict(data), 5, np.random.default_rng(0))
