import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from wrdp.scalar import bracket, shannon_dr
from wrdp.transport import (
    EmptyInput,
    GaussianMoments,
    NegativeBudget,
    NonPSD,
    UnequalCounts,
    dp_tradeoff_point,
    gaussian_dp_reference,
    interpolate_reconstruction,
    interpolation_weight,
    psd_sqrt,
    w2_diagonal,
    w2_empirical_1d,
    w2_gaussian,
)
from wrdp.types import DimensionMismatch


class TestGaussianW2:
    def test_scalar(self):
        a = GaussianMoments.scalar(0.0, 1.0)
        b = GaussianMoments.scalar(0.0, 4.0)
        assert w2_gaussian(a, b) == pytest.approx(1.0)
        assert w2_gaussian(a, GaussianMoments.scalar(1.0, 1.0)) == pytest.approx(1.0)

    def test_diagonal_agrees(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            ma, mb = rng.normal(size=3), rng.normal(size=3)
            va, vb = rng.uniform(0, 3, 3), rng.uniform(0, 3, 3)
            full = w2_gaussian(GaussianMoments.diagonal(ma, va), GaussianMoments.diagonal(mb, vb))
            assert full == pytest.approx(w2_diagonal(ma, va, mb, vb), abs=1e-10)

    def test_commuting_full_covariance(self):
        rot = np.array([[math.cos(0.3), -math.sin(0.3)], [math.sin(0.3), math.cos(0.3)]])
        a = GaussianMoments(np.zeros(2), rot @ np.diag([1.0, 4.0]) @ rot.T)
        b = GaussianMoments(np.zeros(2), rot @ np.diag([9.0, 1.0]) @ rot.T)
        assert w2_gaussian(a, b) == pytest.approx(4.0 + 1.0, abs=1e-10)

    def test_symmetric_and_zero(self):
        rng = np.random.default_rng(1)
        m = rng.normal(size=(3, 3))
        a = GaussianMoments(rng.normal(size=3), m @ m.T)
        n = rng.normal(size=(3, 3))
        b = GaussianMoments(rng.normal(size=3), n @ n.T)
        assert w2_gaussian(a, a) == pytest.approx(0.0, abs=1e-10)
        assert w2_gaussian(a, b) == pytest.approx(w2_gaussian(b, a), rel=1e-9)

    def test_validation(self):
        with pytest.raises(NonPSD):
            GaussianMoments(np.zeros(2), np.array([[1.0, 0.0], [0.0, -1.0]]))
        with pytest.raises(NonPSD):
            GaussianMoments(np.zeros(2), np.array([[1.0, 0.5], [0.0, 1.0]]))
        with pytest.raises(DimensionMismatch):
            GaussianMoments(np.zeros(3), np.eye(2))
        with pytest.raises(DimensionMismatch):
            w2_gaussian(GaussianMoments.scalar(0, 1), GaussianMoments(np.zeros(2), np.eye(2)))

    def test_tiny_negative_eigenvalue_clipped(self):
        c = np.array([[1.0, 1.0], [1.0, 1.0]]) - 1e-12 * np.eye(2)
        s = psd_sqrt(c)
        assert np.all(np.isfinite(s))
        GaussianMoments(np.zeros(2), c)


class TestEmpiricalW2:
    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 6).flatmap(
        lambda n: st.tuples(arrays(float, n, elements=st.floats(-10, 10)),
                            arrays(float, n, elements=st.floats(-10, 10)))))
    def test_matches_exhaustive_pairing(self, xy):
        xs, ys = xy
        best = min(np.mean((xs - ys[list(p)]) ** 2)
                   for p in itertools.permutations(range(len(xs))))
        assert w2_empirical_1d(xs, ys) == pytest.approx(best, rel=1e-12, abs=1e-12)

    def test_errors(self):
        with pytest.raises(UnequalCounts):
            w2_empirical_1d([1, 2], [1])
        with pytest.raises(EmptyInput):
            w2_empirical_1d([], [])


class TestInterpolation:
    def test_weight(self):
        assert interpolation_weight(1.0, 0.25) == 0.5
        assert interpolation_weight(1.0, 2.0) == 1.0
        assert interpolation_weight(0.0, 0.0) == 1.0
        assert interpolation_weight(1.0, 0.0) == 0.0
        with pytest.raises(NegativeBudget):
            interpolation_weight(1.0, -1.0)

    def test_branches(self):
        s_t, s_p = np.array([1.0, 2.0]), np.array([3.0, 4.0])
        assert interpolate_reconstruction(s_t, s_p, 1.0, 5.0) is s_t
        assert np.array_equal(interpolate_reconstruction(s_t, s_p, 1.0, 0.0), s_p)
        assert interpolate_reconstruction(s_t, s_p, 4.0, 1.0) == pytest.approx([2.0, 3.0])

    @given(st.floats(0, 10), st.floats(0, 10), st.floats(0, 20))
    def test_tradeoff_point(self, mmse, w2, P):
        pt = dp_tradeoff_point(mmse, w2, P)
        assert pt.perception == min(w2, P)
        assert pt.distortion == mmse + bracket(w2, P)
        if P < w2:
            assert pt.distortion == pytest.approx(mmse + (math.sqrt(w2) - math.sqrt(P)) ** 2)
        else:
            assert pt.distortion == mmse

    def test_gaussian_reference(self):
        pt = gaussian_dp_reference(1.0, 1.0, 0.0)
        assert pt.distortion == pytest.approx(0.5)
        assert gaussian_dp_reference(1.0, 1.0, 1.0).distortion == shannon_dr(1, 1)

    @pytest.mark.parametrize("P", [0.0, 0.05, 0.15])
    def test_monte_carlo(self, P):
        # S ~ N(0,1), W = S + noise, S~ = E[S|W], S' drawn from the posterior-matched
        # transport map S' = S~ * sqrt(gamma / var(S~))
        rng = np.random.default_rng(42)
        n, gamma, gt = 100_000, 1.0, 0.75
        s_tilde = rng.normal(0.0, math.sqrt(gt), n)
        s = s_tilde + rng.normal(0.0, math.sqrt(gamma - gt), n)
        s_prime = s_tilde * math.sqrt(gamma / gt)
        w2 = (math.sqrt(gamma) - math.sqrt(gt)) ** 2
        x_hat = interpolate_reconstruction(s_tilde, s_prime, w2, P)
        err = (s - x_hat) ** 2
        predicted = dp_tradeoff_point(gamma - gt, w2, P)
        se = err.std(ddof=1) / math.sqrt(n)
        assert abs(err.mean() - predicted.distortion) < 3 * se
        emp_w2 = w2_empirical_1d(x_hat, rng.normal(0.0, 1.0, n))
        assert emp_w2 == pytest.approx(predicted.perception, abs=0.01)
