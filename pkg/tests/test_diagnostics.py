import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from usvr.data import Dataset, HypercubeConfig, hypercube_generate
from usvr.diagnostics import (
    ResidualHistogram,
    data_piling_index,
    fraction_within_delta,
    histogram,
    residuals,
)
from usvr.kernel import KernelSpec
from usvr.svr import Model, SvrHyperParams, fit_svr

resids = arrays(float, st.integers(1, 40), elements=st.floats(-50, 50))


class TestResiduals:
    def test_exact_model(self):
        m = Model(KernelSpec.linear(), np.array([[1.0]]), np.array([2.0]), 1.0)
        ds = Dataset([[0.0], [1.0]], [1.0, 3.0])
        np.testing.assert_array_equal(residuals(m, ds), 0)

    def test_constant_model(self):
        m = Model(KernelSpec.linear(), np.zeros((0, 1)), np.zeros(0), 2.0)
        np.testing.assert_array_equal(residuals(m, Dataset([[0.0], [5.0]], [1.0, 4.0])), [-1.0, 2.0])

    def test_interpolation(self):
        ds = Dataset([[0.0], [1.0]], [0.0, 1.0])
        model, _ = fit_svr(ds, SvrHyperParams(1000.0, 0.0), 1e-6)
        assert np.all(np.abs(residuals(model, ds)) < 1e-3)


class TestHistogram:
    def test_identical_values(self):
        h = histogram(np.full(7, 0.3))
        assert np.count_nonzero(h.train_counts) == 1

    def test_data_piling_picture(self):
        eps = 0.5
        h = histogram(np.r_[np.full(10, eps), np.full(10, -eps)], bins=20, epsilon=eps)
        occupied = np.flatnonzero(h.train_counts)
        assert occupied.size == 2
        for k in occupied:
            left, right = h.edges[k], h.edges[k + 1]
            assert left <= eps <= right or left <= -eps <= right

    @given(resids, resids, st.integers(1, 30))
    def test_conservation(self, a, b, bins):
        h = histogram(a, b, bins)
        assert h.train_counts.sum() == a.size and h.universum_counts.sum() == b.size

    @given(resids, st.randoms(use_true_random=False))
    def test_permutation_invariant(self, a, r):
        perm = list(a)
        r.shuffle(perm)
        np.testing.assert_array_equal(histogram(a).train_counts, histogram(np.array(perm)).train_counts)

    def test_csv_round_trip(self, tmp_path, rng):
        h = histogram(rng.normal(size=30), rng.normal(size=50), 12, 0.5, 1.0)
        h.save(tmp_path / "h.csv")
        back = ResidualHistogram.from_csv((tmp_path / "h.csv").read_text())
        np.testing.assert_array_equal(back.edges, h.edges)
        np.testing.assert_array_equal(back.train_counts, h.train_counts)
        np.testing.assert_array_equal(back.universum_counts, h.universum_counts)
        assert (back.epsilon, back.delta) == (0.5, 1.0)

    def test_invalid(self):
        with pytest.raises(ValueError):
            histogram([])
        with pytest.raises(ValueError):
            histogram([1.0], bins=0)


class TestFractionWithinDelta:
    def test_all_zero(self):
        assert fraction_within_delta(np.zeros(5), 0.1) == 1

    def test_zero_delta(self):
        assert fraction_within_delta([0.5, -1.0], 0.0) == 0

    def test_count(self):
        assert fraction_within_delta([-3, -1, 0, 1, 3], 1.0) == 0.6

    @given(resids, st.floats(0, 50), st.floats(0, 50))
    def test_monotone(self, r, d1, d2):
        lo, hi = sorted((d1, d2))
        assert fraction_within_delta(r, lo) <= fraction_within_delta(r, hi)
        assert 0 <= fraction_within_delta(r, lo) <= 1


class TestPiling:
    def test_inside(self):
        assert data_piling_index([0.0, 0.1, -0.2], 0.5) == 0

    def test_on_boundary(self):
        assert data_piling_index([0.5, -0.5, 0.5], 0.5) == 1

    def test_small_sample_piles_more(self):
        eps = 0.5
        idx = {}
        for n in (30, 150):
            train, _ = hypercube_generate(HypercubeConfig(n, 0.5, n))
            model, _ = fit_svr(train, SvrHyperParams(float(np.ptp(train.targets)), eps), 1e-6)
            idx[n] = data_piling_index(residuals(model, train), eps, tol=1e-3)
        assert idx[30] > idx[150]
