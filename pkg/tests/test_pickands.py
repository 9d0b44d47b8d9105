import math
import os
import sys
import unittest

import numpy as np

# Adjust path
sys.path.append(os.path.join(os.path.dirname(__file__), '..', 'app'))

from errors import ParameterError, ResourceError
from pickands import (EstimateKind, FbmGridSpec, FbmSampler, TwoFieldSampler, estimate_H, estimate_H_horizons,
                      estimate_H_two_grids, estimate_P, estimate_P_rate, estimate_P_two_grids, estimate_Q,
                      estimate_Q_two_grids, fgn_autocovariance, h2_exact, lag_penalty, sample_fbm)
from rng import ReplicateRunner

SLOW = os.getenv('CHANGEPOINT_SLOW_TESTS') == '1'


class TestGridSpec(unittest.TestCase):
    def test_points(self):
        self.assertEqual(FbmGridSpec(1.0, 1.0, 0.1).n_points, 11)
        self.assertEqual(FbmGridSpec(1.0, 0.0, 0.1).n_points, 1)
        self.assertEqual(FbmGridSpec(1.5, 0.25, 0.1).n_steps, 2)

    def test_invalid(self):
        with self.assertRaises(ParameterError):
            FbmGridSpec(0.0, 1.0, 0.1)
        with self.assertRaises(ParameterError):
            FbmGridSpec(1.0, 1.0, 0.0)
        with self.assertRaises(ParameterError):
            FbmGridSpec(1.0, -1.0, 0.1)


class TestFbmSampler(unittest.TestCase):
    def test_brownian_autocovariance(self):
        gam = fgn_autocovariance(1.0, 0.1, 4)
        np.testing.assert_allclose(gam, [0.1, 0.0, 0.0, 0.0, 0.0], atol=1e-15)

    def test_starts_at_zero(self):
        path = sample_fbm(FbmGridSpec(0.7, 1.0, 0.05), seed=3)
        self.assertEqual(path.shape, (21,))
        self.assertEqual(path[0], 0.0)

    def test_linear_path(self):
        sampler = FbmSampler(2.0, 0.25, 8)
        self.assertEqual(sampler.method, "linear")
        path = sampler.paths(5, 0, 1)[0]
        ratios = path[1:] / sampler.times[1:]
        np.testing.assert_allclose(ratios, ratios[0], rtol=1e-12)

    def test_marginal_variance(self):
        n = 2000
        for alpha in (0.5, 1.0, 1.5):
            sampler = FbmSampler(alpha, 0.1, 10)
            self.assertEqual(sampler.method, "circulant")
            end = sampler.paths(17, 0, n)[:, -1]
            var = float(np.mean(end ** 2))
            self.assertLess(abs(var - 1.0), 4.0 * math.sqrt(2.0 / n), f"alpha={alpha}")

    def test_increment_correlation_sign(self):
        n = 4000
        rough = FbmSampler(0.5, 0.1, 2).paths(23, 0, n)
        smooth = FbmSampler(1.5, 0.1, 2).paths(23, 0, n)
        corr_rough = np.corrcoef(np.diff(rough, axis=1).T)[0, 1]
        corr_smooth = np.corrcoef(np.diff(smooth, axis=1).T)[0, 1]
        # exact values 2^(alpha-1) - 1: about -0.29 and 0.41
        self.assertLess(corr_rough, -0.15)
        self.assertGreater(corr_smooth, 0.25)

    def test_streams_differ(self):
        sampler = FbmSampler(1.0, 0.1, 10)
        a = sampler.paths(9, 0, 3, stream=0)
        b = sampler.paths(9, 0, 3, stream=1)
        self.assertFalse(np.allclose(a, b))
        np.testing.assert_array_equal(a, sampler.paths(9, 0, 3, stream=0))

    def test_dense_fallback(self):
        sampler = FbmSampler(0.5, 0.1, 10, {"eigen_tolerance": -1.0})
        self.assertEqual(sampler.method, "dense")
        n = 2000
        end = sampler.paths(31, 0, n)[:, -1]
        self.assertLess(abs(float(np.mean(end ** 2)) - 1.0), 4.0 * math.sqrt(2.0 / n))

    def test_dense_fallback_limit(self):
        with self.assertRaises(ResourceError):
            FbmSampler(0.5, 0.1, 10, {"eigen_tolerance": -1.0, "max_dense_points": 5})


class TestH2Exact(unittest.TestCase):
    def test_zero_horizon(self):
        self.assertEqual(h2_exact(0.0, 0.1), 1.0)

    def test_rate_limit(self):
        step = 1e-4
        rate = (h2_exact(10.0, step) - h2_exact(5.0, step)) / 5.0
        self.assertAlmostEqual(rate, 1.0 / math.sqrt(math.pi), delta=1e-6)

    def test_matches_simulation(self):
        n = 20000
        times = np.arange(5) * 0.5
        z = np.random.default_rng(101).standard_normal(n)
        samples = np.exp(math.sqrt(2.0) * np.outer(z, times) - times ** 2).max(axis=1)
        se = samples.std(ddof=1) / math.sqrt(n)
        self.assertLess(abs(samples.mean() - h2_exact(2.0, 0.5)), 4.0 * se)

    def test_alpha_two_is_exact(self):
        est = estimate_H(2.0, 4.0, 0.1, 100, seed=1, kind=EstimateKind.H_OF_LAMBDA)
        self.assertEqual(est.std_error, 0.0)
        self.assertEqual(est.method, "exact")
        self.assertEqual(est.value, h2_exact(4.0, 0.1))


class TestEstimateH(unittest.TestCase):
    def test_zero_horizon_is_one(self):
        est = estimate_H(1.0, 0.0, 0.1, 100, seed=4, kind=EstimateKind.H_OF_LAMBDA,
                         runner=ReplicateRunner(threads=1))
        self.assertEqual(est.value, 1.0)
        self.assertEqual(est.std_error, 0.0)

    def test_at_least_one(self):
        est = estimate_H(0.8, 1.0, 0.05, 200, seed=5, kind=EstimateKind.H_OF_LAMBDA)
        self.assertGreaterEqual(est.value, 1.0)

    def test_deterministic_across_threads(self):
        kwargs = dict(alpha=1.0, lam=1.0, grid_step=0.05, n_rep=300, seed=77)
        serial = estimate_H(runner=ReplicateRunner(threads=1, chunk_size=7), **kwargs)
        pooled = estimate_H(runner=ReplicateRunner(threads=4, chunk_size=64), **kwargs)
        self.assertEqual(serial.value, pooled.value)
        self.assertEqual(serial.std_error, pooled.std_error)

    def test_refinement_never_lowers(self):
        coarse, fine = estimate_H_two_grids(1.0, 2.0, 0.1, 200, seed=8, kind=EstimateKind.H_OF_LAMBDA)
        self.assertEqual(fine.grid.step, 0.05)
        self.assertGreaterEqual(fine.value, coarse.value)

    def test_horizons_nondecreasing(self):
        ests = estimate_H_horizons(1.0, [0.5, 1.0, 2.0], 0.05, 200, seed=12)
        values = [e.value for e in ests]
        self.assertEqual(values, sorted(values))

    def test_rate_needs_two_steps(self):
        with self.assertRaises(ParameterError):
            estimate_H(1.0, 0.05, 0.05, 100, seed=1)

    def test_invalid_arguments(self):
        with self.assertRaises(ParameterError):
            estimate_H(1.0, 1.0, 0.05, 50, seed=1)
        with self.assertRaises(ParameterError):
            estimate_H(1.0, -1.0, 0.05, 100, seed=1)
        with self.assertRaises(ParameterError):
            estimate_H(2.5, 1.0, 0.05, 100, seed=1)

    @unittest.skipUnless(SLOW, "set CHANGEPOINT_SLOW_TESTS=1")
    def test_brownian_constant(self):
        est = estimate_H(1.0, 8.0, 0.01, 10000, seed=20240101)
        self.assertTrue(0.85 <= est.value <= 1.05, est.value)


class TestTwoFieldConstants(unittest.TestCase):
    def test_penalty(self):
        self.assertAlmostEqual(lag_penalty(1.0, 2.0, 5.0, -0.5), 1.0, places=15)
        self.assertAlmostEqual(lag_penalty(2.0, 1.0, 3.0, -0.5), 0.25 - 1.5, places=15)

    def test_fields_are_independent(self):
        n = 2000
        sampler = TwoFieldSampler(1.0, 0.1, 10, 5, {})
        a, c = sampler.fields(41, 0, n)
        self.assertEqual(a.shape, (n, 11))
        self.assertEqual(c.shape, (n, 21))
        np.testing.assert_array_equal(c[:, 5], 0.0)
        r = np.corrcoef(a[:, -1], c[:, -1])[0, 1]
        self.assertLess(abs(r), 4.0 / math.sqrt(n))

    def test_at_least_one(self):
        p = estimate_P(1.0, 1.0, 0.0, 1.0, 0.5, 0.05, 100, seed=3)
        q = estimate_Q(1.0, 1.0, 0.5, 0.05, 100, seed=3)
        self.assertGreaterEqual(p.value, 1.0)
        self.assertGreaterEqual(q.value, 1.0)
        self.assertEqual(p.kind, EstimateKind.P_OF_LAMBDA)
        self.assertEqual(q.kind, EstimateKind.Q_OF_LAMBDA)

    def test_one_sided_window_below_unpenalized_p(self):
        for seed in range(5):
            p0 = estimate_P(1.0, 0.0, 0.0, 1.0, 0.5, 0.05, 100, seed=seed)
            q = estimate_Q(1.0, 1.0, 0.5, 0.05, 100, seed=seed)
            self.assertLessEqual(q.value, p0.value, seed)

    def test_zero_window_is_diagonal(self):
        for alpha in (0.5, 1.0, 1.5):
            q = estimate_Q(alpha, 1.0, 0.0, 0.05, 100, seed=8)
            diagonal = estimate_P(alpha, 0.0, 0.0, 1.0, 0.0, 0.05, 100, seed=8)
            self.assertEqual(q.value, diagonal.value)

    def test_zero_window_q_matches_rescaled_h(self):
        # B1 + B2 on step eta has the law of sqrt(2) B on step 2**(1/alpha) eta
        q = estimate_Q(1.0, 1.0, 0.0, 0.05, 1000, seed=31)
        h = estimate_H(1.0, 2.0, 0.1, 1000, seed=32, kind=EstimateKind.H_OF_LAMBDA)
        self.assertLess(abs(q.value - h.value), 4.0 * math.hypot(q.std_error, h.std_error))

    def test_heavier_penalty_lowers_p(self):
        light = estimate_P(1.0, 0.5, 0.0, 1.0, 1.0, 0.05, 100, seed=6)
        heavy = estimate_P(1.0, 4.0, 0.0, 1.0, 1.0, 0.05, 100, seed=6)
        self.assertLessEqual(heavy.value, light.value)

    def test_refinement_never_lowers(self):
        coarse, fine = estimate_P_two_grids(1.0, 1.0, 0.0, 1.0, 0.5, 0.1, 100, seed=14)
        self.assertGreaterEqual(fine.value, coarse.value)
        coarse, fine = estimate_Q_two_grids(1.0, 1.0, 0.5, 0.1, 100, seed=14)
        self.assertGreaterEqual(fine.value, coarse.value)

    def test_rate_form(self):
        est = estimate_P_rate(1.0, 2.0, 0.0, 1.0, 0.05, 100, seed=21)
        self.assertEqual(est.kind, EstimateKind.P_RATE)
        self.assertGreaterEqual(est.value, 0.0)
        self.assertEqual(est.f_params, {"b_over_a": 2.0, "c_over_sqrt_a": 0.0})

    def test_invalid_arguments(self):
        with self.assertRaises(ParameterError):
            estimate_P(1.0, -1.0, 0.0, 1.0, 0.5, 0.05, 100, seed=1)
        with self.assertRaises(ParameterError):
            estimate_P(1.0, 1.0, 0.0, 1.0, -0.5, 0.05, 100, seed=1)
        with self.assertRaises(ParameterError):
            estimate_Q(1.0, 1.0, 0.5, 0.05, 10, seed=1)

    @unittest.skipUnless(SLOW, "set CHANGEPOINT_SLOW_TESTS=1")
    def test_zero_window_matches_rescaled_h(self):
        alpha, lam, step, n = 1.0, 2.0, 0.02, 4000
        scale = 2.0 ** (1.0 / alpha)
        p = estimate_P(alpha, 0.0, 0.0, lam, 0.0, step, n, seed=55)
        h = estimate_H(alpha, scale * lam, scale * step, n, seed=56, kind=EstimateKind.H_OF_LAMBDA)
        pooled = math.hypot(p.std_error, h.std_error)
        self.assertLess(abs(p.value - h.value), 3.0 * pooled)


if __name__ == '__main__':
    unittest.main()
