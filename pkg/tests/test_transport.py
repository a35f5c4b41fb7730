import itertools

import numpy as np
import pytest

from steinmal.transport import RateFit, SampleCloud, rate_fit, w1_1d, w1_exact


def brute_force_w1(a: SampleCloud, b: SampleCloud) -> float:
    """Exhaustive permutation minimum; oracle for n <= 6."""
    best = np.inf
    n = a.n
    for perm in itertools.permutations(range(n)):
        cost = sum(np.linalg.norm(a.data[i] - b.data[perm[i]]) for i in range(n))
        best = min(best, cost)
    return best / n


class TestW1OneD:
    def test_self_distance_zero(self):
        rng = np.random.default_rng(0)
        c = SampleCloud(rng.standard_normal(50))
        assert w1_1d(c, c) == 0.0

    def test_translation(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal(64)
        assert abs(w1_1d(SampleCloud(x), SampleCloud(x + 0.37)) - 0.37) < 1e-12

    def test_two_point_example(self):
        a = SampleCloud(np.array([0.0, 1.0]))
        b = SampleCloud(np.array([0.5, 0.5]))
        assert abs(w1_1d(a, b) - 0.5) < 1e-15

    def test_size_mismatch(self):
        with pytest.raises(ValueError):
            w1_1d(SampleCloud(np.zeros(3)), SampleCloud(np.zeros(4)))


class TestW1Exact:
    def test_identical_clouds(self):
        rng = np.random.default_rng(2)
        c = SampleCloud(rng.standard_normal((20, 2)))
        assert w1_exact(c, c) < 1e-12

    def test_matches_brute_force_small(self):
        rng = np.random.default_rng(3)
        for n in (2, 3, 4, 5, 6):
            a = SampleCloud(rng.standard_normal((n, 2)))
            b = SampleCloud(rng.standard_normal((n, 2)))
            assert abs(w1_exact(a, b) - brute_force_w1(a, b)) < 1e-12

    def test_reduces_to_sorted_coupling_in_1d(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            a = SampleCloud(rng.standard_normal(100))
            b = SampleCloud(rng.standard_normal(100))
            assert abs(w1_exact(a, b) - w1_1d(a, b)) < 1e-12

    def test_symmetry(self):
        rng = np.random.default_rng(5)
        a = SampleCloud(rng.standard_normal((64, 2)))
        b = SampleCloud(rng.standard_normal((64, 2)))
        assert abs(w1_exact(a, b) - w1_exact(b, a)) < 1e-12

    def test_triangle_inequality(self):
        rng = np.random.default_rng(6)
        for _ in range(100):
            a = SampleCloud(rng.standard_normal((64, 2)))
            b = SampleCloud(rng.standard_normal((64, 2)))
            c = SampleCloud(rng.standard_normal((64, 2)))
            assert w1_exact(a, c) <= w1_exact(a, b) + w1_exact(b, c) + 1e-9

    def test_cap_enforced(self):
        rng = np.random.default_rng(7)
        a = SampleCloud(rng.standard_normal((10, 1)))
        with pytest.raises(ValueError, match="subsample"):
            w1_exact(a, a, cap=5)

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            SampleCloud(np.array([1.0, np.nan]))


class TestRateFit:
    def test_exact_inverse_sqrt(self):
        scales = [10.0, 100.0, 1000.0, 10000.0]
        fit = rate_fit([(s, s**-0.5) for s in scales])
        assert abs(fit.slope + 0.5) < 1e-12
        assert fit.residual_rms < 1e-12

    def test_linear_rate(self):
        fit = rate_fit([(s, 3.0 * s) for s in (1.0, 2.0, 5.0, 11.0)])
        assert abs(fit.slope - 1.0) < 1e-12
        assert abs(np.exp(fit.intercept) - 3.0) < 1e-12

    def test_minimum_points(self):
        with pytest.raises(ValueError):
            rate_fit([(1.0, 1.0), (2.0, 0.5)])

    def test_positivity_required(self):
        with pytest.raises(ValueError):
            rate_fit([(1.0, 1.0), (2.0, -0.5), (3.0, 0.2)])

    def test_result_type(self):
        fit = rate_fit([(s, s**-1.0) for s in (2.0, 4.0, 8.0)])
        assert isinstance(fit, RateFit)
        assert fit.points == 3
