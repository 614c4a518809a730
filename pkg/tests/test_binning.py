import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hammock.binning import (BinningSpec, fit_binning, fit_quantile_bins, one_hot_encode,
                             onehot_rows, quantize)
from hammock.errors import InputError


def nearest_rank_oracle(column, bins):
    """Textbook nearest-rank quantiles with exact rational ranks."""
    s = sorted(column)
    n = len(s)
    vals = {s[math.ceil(Fraction(i, bins) * n) - 1] for i in range(1, bins)}
    return sorted(v for v in vals if v > s[0])


class TestFitQuantileBins:
    def test_quartiles_of_1_to_100(self):
        assert fit_quantile_bins(np.arange(1, 101), 4).tolist() == nearest_rank_oracle(range(1, 101), 4)
        assert fit_quantile_bins(np.arange(1, 101), 4).tolist() == [25, 50, 75]

    @pytest.mark.parametrize("bins", [1, 2, 7, 50])
    def test_constant_column_has_one_bin(self, bins):
        assert fit_quantile_bins([5, 5, 5, 5], bins).tolist() == []

    def test_single_requested_bin(self):
        assert fit_quantile_bins([0, 1], 1).tolist() == []

    @settings(max_examples=60, deadline=None)
    @given(col=st.lists(st.integers(-20, 20), min_size=1, max_size=60),
           bins=st.integers(1, 60))
    def test_matches_oracle(self, col, bins):
        got = fit_quantile_bins(np.array(col, dtype=float), bins)
        assert got.tolist() == nearest_rank_oracle(col, bins)
        assert len(got) <= bins - 1
        assert np.all(np.diff(got) > 0)

    def test_empty_column(self):
        with pytest.raises(InputError):
            fit_quantile_bins([], 5)

    def test_non_finite(self):
        with pytest.raises(InputError):
            fit_quantile_bins([1.0, np.inf], 5)


class TestFitBinning:
    def test_two_full_features(self):
        X = np.random.default_rng(0).random((1000, 2))
        spec = fit_binning(X, 50)
        assert [len(b) for b in spec.boundaries] == [49, 49]
        assert spec.total_onehot_width == 100

    def test_constant_feature(self):
        assert fit_binning(np.full((10, 1), 3.0), 50).total_onehot_width == 1

    def test_mixed(self):
        X = np.column_stack([np.random.default_rng(1).random(500), np.full(500, 2.0)])
        spec = fit_binning(X, 50)
        assert spec.total_onehot_width == 51
        assert spec.widths.tolist() == [50, 1]

    def test_refit_is_bit_identical(self):
        X = np.random.default_rng(2).normal(size=(300, 4))
        a, b = fit_binning(X, 20), fit_binning(X.copy(), 20)
        assert all(np.array_equal(p, q) for p, q in zip(a.boundaries, b.boundaries))

    def test_row_order_does_not_matter(self):
        X = np.random.default_rng(3).normal(size=(200, 3))
        a = fit_binning(X, 10)
        b = fit_binning(X[::-1], 10)
        assert all(np.array_equal(p, q) for p, q in zip(a.boundaries, b.boundaries))

    def test_dict_round_trip(self):
        spec = fit_binning(np.random.default_rng(4).normal(size=(100, 3)), 8)
        again = BinningSpec.from_dict(spec.to_dict())
        X = np.random.default_rng(5).normal(size=(50, 3)) * 3
        assert np.array_equal(quantize(X, spec), quantize(X, again))

    def test_rejects_non_increasing(self):
        with pytest.raises(InputError):
            BinningSpec(([1.0, 1.0],), 3)


class TestQuantize:
    spec = BinningSpec(([0.0, 1.0],), 3)

    @pytest.mark.parametrize("x, expect", [(-5.0, 0), (0.5, 1), (1.0, 2), (0.0, 1), (99.0, 2)])
    def test_examples(self, x, expect):
        assert quantize([x], self.spec).tolist() == [expect]

    def test_dimension_mismatch(self):
        with pytest.raises(InputError):
            quantize([0.1, 0.2], self.spec)

    def test_non_finite(self):
        with pytest.raises(InputError):
            quantize([np.nan], self.spec)

    @settings(max_examples=50, deadline=None)
    @given(data=arrays(np.float64, (30, 3), elements=st.floats(-10, 10)),
           a=arrays(np.float64, 3, elements=st.floats(-10, 10)),
           d=arrays(np.float64, 3, elements=st.floats(0, 5)))
    def test_monotone(self, data, a, d):
        spec = fit_binning(data, 8)
        assert np.all(quantize(a, spec) <= quantize(a + d, spec))

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 10_000), bins=st.integers(2, 40),
           g=st.sampled_from([np.exp, np.arctan, lambda v: v ** 3, lambda v: 5 * v - 2]))
    def test_rank_invariance(self, seed, bins, g):
        X = np.random.default_rng(seed).permutation(200).reshape(100, 2) / 40.0 - 2.5
        q1 = quantize(X, fit_binning(X, bins))
        gX = g(X)
        assume(all(len(np.unique(gX[:, j])) == 100 for j in range(2)))
        assert np.array_equal(q1, quantize(gX, fit_binning(gX, bins)))


class TestOneHot:
    spec = BinningSpec(([0.0, 1.0], [5.0]), 3)  # widths (3, 2)

    def test_first_bins(self):
        assert one_hot_encode([0, 0], self.spec).tolist() == [1, 0, 0, 1, 0]

    def test_last_bins(self):
        assert one_hot_encode([2, 1], self.spec).tolist() == [0, 0, 1, 0, 1]

    def test_out_of_range(self):
        with pytest.raises(InputError):
            one_hot_encode([3, 0], self.spec)
        with pytest.raises(InputError):
            one_hot_encode([0, -1], self.spec)

    @settings(max_examples=50, deadline=None)
    @given(q0=st.integers(0, 2), q1=st.integers(0, 1))
    def test_one_entry_per_block(self, q0, q1):
        v = one_hot_encode([q0, q1], self.spec)
        assert v.sum() == 2
        assert v[:3].sum() == 1 and v[3:].sum() == 1

    def test_rows_match_dense_encoding(self):
        spec = fit_binning(np.random.default_rng(0).normal(size=(300, 4)), 6)
        Q = quantize(np.random.default_rng(1).normal(size=(40, 4)) * 2, spec)
        dense = one_hot_encode(Q, spec)
        assert np.array_equal(np.sort(np.flatnonzero(dense[7])), onehot_rows(Q[7], spec))
        np.testing.assert_array_equal(dense.sum(axis=1), 4)
        for f in range(4):
            lo, hi = spec.offsets[f], spec.offsets[f] + spec.widths[f]
            np.testing.assert_array_equal(dense[:, lo:hi].sum(axis=1), 1)
