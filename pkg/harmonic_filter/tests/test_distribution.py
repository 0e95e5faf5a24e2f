import math

import numpy as np
from django.test import SimpleTestCase

from harmonic_filter.distribution import (
    DENSITY_FLOOR,
    DistributionError,
    HarmonicExpDist,
    convolve,
    convolve_grid,
    entropy,
    estimate_from_density,
    evaluate,
    fit_from_density,
    fit_from_log_density,
    floor_density,
    kl_divergence,
    kl_quadrature,
    mean_pose,
    mode_of_density,
    mode_pose,
    planar_marginal,
    product,
    total_variation,
    uniform,
)
from harmonic_filter.group import DensityGrid, GridSpec
from harmonic_filter.transform import Bands, SpectrumRole

from .conftest import SMALL_GRID, gaussian_grid


class FloorTests(SimpleTestCase):
    def test_floor_is_relative_to_max(self):
        floored = floor_density(np.array([0.0, 2.0]))
        self.assertEqual(floored[0], 2.0 * DENSITY_FLOOR)

    def test_floor_rejects_zero_density(self):
        with self.assertRaises(DistributionError):
            floor_density(np.zeros(3))


class FitTests(SimpleTestCase):
    def test_fit_reproduces_density(self):
        density = gaussian_grid(SMALL_GRID, 0.1, -0.1, 1.0, sigma=0.2)
        dist = fit_from_density(density)
        np.testing.assert_allclose(evaluate(dist).values, density.values, rtol=1e-8)

    def test_fitted_density_is_normalised(self):
        dist = fit_from_density(gaussian_grid(SMALL_GRID))
        self.assertAlmostEqual(evaluate(dist).integral(), 1.0, places=9)

    def test_log_normaliser_of_uniform(self):
        dist = uniform(SMALL_GRID)
        self.assertAlmostEqual(dist.log_z, math.log(SMALL_GRID.volume), places=9)
        np.testing.assert_allclose(evaluate(dist).values, 1.0 / SMALL_GRID.volume)

    def test_log_normaliser_is_stable_for_huge_logs(self):
        log_f = DensityGrid(SMALL_GRID, np.full(SMALL_GRID.shape, 800.0))
        dist = fit_from_log_density(log_f)
        self.assertAlmostEqual(dist.log_z, 800.0 + math.log(SMALL_GRID.volume), places=6)

    def test_non_finite_log_density_is_rejected(self):
        values = np.zeros(SMALL_GRID.shape)
        values[1, 1, 1] = -np.inf
        with self.assertRaises(DistributionError):
            fit_from_log_density(DensityGrid(SMALL_GRID, values))

    def test_eta_is_log_space(self):
        dist = fit_from_density(gaussian_grid(SMALL_GRID))
        self.assertIs(dist.eta.role, SpectrumRole.LOG_SPACE)


class ProductTests(SimpleTestCase):
    def test_product_is_pointwise(self):
        a = gaussian_grid(SMALL_GRID, 0.1, 0.0, 0.0, sigma=0.15)
        b = gaussian_grid(SMALL_GRID, -0.1, 0.1, 1.0, sigma=0.2)
        result = evaluate(product(fit_from_density(a), fit_from_density(b)))
        expected = DensityGrid(SMALL_GRID, a.values * b.values).normalize()
        np.testing.assert_allclose(result.values, expected.values, rtol=1e-7)

    def test_product_with_uniform_is_identity(self):
        a = fit_from_density(gaussian_grid(SMALL_GRID))
        result = evaluate(product(a, uniform(SMALL_GRID)))
        np.testing.assert_allclose(result.values, evaluate(a).values, rtol=1e-8)

    def test_band_mismatch(self):
        a = fit_from_density(gaussian_grid(SMALL_GRID))
        b = fit_from_density(gaussian_grid(SMALL_GRID), Bands.for_grid(SMALL_GRID, band_m=2))
        with self.assertRaises(DistributionError):
            product(a, b)

    def test_grid_mismatch(self):
        other = GridSpec(8, 8, 4)
        a = fit_from_density(gaussian_grid(SMALL_GRID))
        b = fit_from_density(gaussian_grid(other))
        with self.assertRaises(DistributionError):
            product(a, b)


class ConvolveTests(SimpleTestCase):
    def test_convolve_with_uniform_is_uniform(self):
        a = fit_from_density(gaussian_grid(SMALL_GRID))
        result = evaluate(convolve(a, uniform(SMALL_GRID)))
        np.testing.assert_allclose(result.values, 1.0 / SMALL_GRID.volume, rtol=1e-6)

    def test_convolve_grid_is_normalised(self):
        a = fit_from_density(gaussian_grid(SMALL_GRID, 0.0, 0.0, 0.0))
        b = fit_from_density(gaussian_grid(SMALL_GRID, 0.1, 0.0, 0.0))
        grid = convolve_grid(a, b)
        self.assertAlmostEqual(grid.integral(), 1.0, places=9)
        self.assertGreater(grid.values.min(), 0.0)

    def test_convolution_moves_the_mean(self):
        a = fit_from_density(gaussian_grid(SMALL_GRID, 0.0, 0.0, 0.0, kappa=8.0))
        b = fit_from_density(gaussian_grid(SMALL_GRID, 0.125, 0.0, 0.0, sigma=0.05, kappa=8.0))
        moved = mean_pose(convolve(a, b)).pose
        self.assertAlmostEqual(moved.x, 0.125, delta=0.02)
        self.assertAlmostEqual(moved.y, 0.0, delta=0.02)


class EstimatorTests(SimpleTestCase):
    def test_mode_is_peak_sample(self):
        dist = fit_from_density(gaussian_grid(SMALL_GRID, 0.125, -0.25, math.pi / 2, sigma=0.05, kappa=6.0))
        mode = mode_pose(dist)
        self.assertAlmostEqual(mode.x, 0.125)
        self.assertAlmostEqual(mode.y, -0.25)
        self.assertAlmostEqual(mode.theta, math.pi / 2)

    def test_mode_ignores_belief_scale(self):
        grid = gaussian_grid(SMALL_GRID, -0.125, 0.25, 1.0, sigma=0.06, kappa=4.0)
        dist = fit_from_density(grid)
        expected = mode_pose(dist)
        for factor in (1e-3, 250.0):
            offset = fit_from_log_density(DensityGrid(SMALL_GRID, np.full(SMALL_GRID.shape, math.log(factor))))
            self.assertEqual(mode_pose(HarmonicExpDist(dist.eta + offset.eta, dist.log_z)), expected)
            self.assertEqual(mode_of_density(DensityGrid(SMALL_GRID, grid.values * factor)), expected)

    def test_mean_of_symmetric_density(self):
        estimate = mean_pose(fit_from_density(gaussian_grid(SMALL_GRID, 0.0, 0.0, 1.0, sigma=0.05)))
        self.assertAlmostEqual(estimate.pose.x, 0.0, places=6)
        self.assertAlmostEqual(estimate.pose.theta, 1.0, delta=0.05)
        self.assertTrue(estimate.orientation_defined)
        self.assertEqual(estimate.covariance.shape, (2, 2))

    def test_uniform_heading_is_undefined(self):
        with self.assertLogs("harmonic_filter.distribution", level="WARNING"):
            estimate = estimate_from_density(evaluate(uniform(SMALL_GRID)))
        self.assertFalse(estimate.orientation_defined)
        self.assertEqual(estimate.pose.theta, 0.0)

    def test_expected_iur_on_request(self):
        dist = fit_from_density(gaussian_grid(SMALL_GRID))
        self.assertIsNone(mean_pose(dist).expected_iur)
        iur = mean_pose(dist, include_iur=True).expected_iur
        self.assertIs(iur.role, SpectrumRole.PROB_SPACE)
        self.assertAlmostEqual(iur.dc().real, 1.0, places=9)


class DivergenceTests(SimpleTestCase):
    def test_kl_of_identical_is_zero(self):
        density = gaussian_grid(SMALL_GRID)
        self.assertAlmostEqual(kl_divergence(density, density), 0.0)

    def test_kl_is_positive(self):
        p = gaussian_grid(SMALL_GRID, 0.0, 0.0, 0.0)
        q = gaussian_grid(SMALL_GRID, 0.1, 0.0, 0.0)
        self.assertGreater(kl_divergence(p, q), 0.0)

    def test_kl_quadrature_is_clipped(self):
        self.assertEqual(kl_quadrature(np.array([1.0, 1.0]), np.array([1.0, 1.0 + 1e-15]), 0.5), 0.0)

    def test_total_variation_bounds(self):
        p = gaussian_grid(SMALL_GRID, -0.25, 0.0, 0.0, sigma=0.03)
        q = gaussian_grid(SMALL_GRID, 0.25, 0.0, 0.0, sigma=0.03)
        self.assertAlmostEqual(total_variation(p, p), 0.0)
        self.assertLessEqual(total_variation(p, q), 1.0 + 1e-9)
        self.assertGreater(total_variation(p, q), 0.99)

    def test_planar_marginal_integrates_to_one(self):
        density = gaussian_grid(SMALL_GRID)
        marginal = planar_marginal(density)
        self.assertEqual(marginal.shape, (8, 8))
        self.assertAlmostEqual(marginal.sum() * SMALL_GRID.dx * SMALL_GRID.dy, 1.0)

    def test_entropy_of_uniform(self):
        dist = uniform(SMALL_GRID)
        self.assertAlmostEqual(entropy(dist), math.log(SMALL_GRID.volume), places=9)

    def test_entropy_drops_for_concentrated_beliefs(self):
        wide = gaussian_grid(SMALL_GRID, sigma=0.2, kappa=0.5)
        narrow = gaussian_grid(SMALL_GRID, sigma=0.05, kappa=4.0)
        self.assertLess(entropy(narrow), entropy(wide))

    def test_grid_mismatch_raises(self):
        other = GridSpec(8, 8, 4)
        p = gaussian_grid(SMALL_GRID)
        q = DensityGrid(other, np.ones(other.shape)).normalize()
        with self.assertRaises(DistributionError):
            total_variation(p, q)
