import math

import numpy as np
from django.test import SimpleTestCase

from harmonic_filter.analysis import random_smooth_density, spectral_convolve_grid
from harmonic_filter.direct import direct_convolve
from harmonic_filter.group import TWO_PI, DensityGrid, GridSpec, make_grid
from harmonic_filter.transform import (
    Bands,
    SpectrumError,
    SpectrumRole,
    get_transform,
    s1_analyze,
    s1_synthesize,
    se2_analyze,
    se2_synthesize,
    spectral_convolve,
)

from .conftest import MEDIUM_GRID, SMALL_GRID, gaussian_grid, origin_index, point_mass, random_grid

EVEN_GRIDS = [(10, 10, 8), (12, 12, 8), (16, 16, 8)]


class S1Tests(SimpleTestCase):
    def test_round_trip_of_band_limited_signal(self):
        thetas = TWO_PI * np.arange(16) / 16
        samples = 1.0 + 0.5 * np.cos(thetas) - 0.25 * np.sin(3 * thetas)
        spectrum = s1_analyze(samples, 3)
        np.testing.assert_allclose(s1_synthesize(spectrum, thetas), samples, atol=1e-12)

    def test_constant_has_only_dc(self):
        spectrum = s1_analyze(np.full(9, 2.0), 4)
        self.assertAlmostEqual(spectrum.coeff(0), 2.0 * TWO_PI)
        self.assertAlmostEqual(abs(spectrum.coeff(1)), 0.0)
        self.assertEqual(spectrum.coeff(5), 0j)

    def test_real_samples_give_hermitian_spectrum(self):
        spectrum = s1_analyze(np.random.default_rng(1).normal(size=11), 5)
        self.assertTrue(spectrum.is_hermitian())
        self.assertEqual(spectrum.degrees_of_freedom, 11)

    def test_too_few_samples(self):
        with self.assertRaises(SpectrumError):
            s1_analyze(np.ones(4), 2)

    def test_negative_band_limit(self):
        with self.assertRaises(SpectrumError):
            s1_analyze(np.ones(4), -1)


class BandsTests(SimpleTestCase):
    def test_defaults_follow_grid(self):
        bands = Bands.for_grid(SMALL_GRID)
        self.assertEqual(bands, Bands(None, 4, 4))

    def test_rejects_band_above_grid_limit(self):
        with self.assertRaises(SpectrumError):
            Bands.for_grid(SMALL_GRID, band_m=5)

    def test_rejects_n_lambda_above_nyquist(self):
        with self.assertRaises(SpectrumError):
            Bands.for_grid(SMALL_GRID, n_lambda=5)


class Se2TransformTests(SimpleTestCase):
    def test_round_trip_is_exact_on_full_lattice(self):
        density = random_grid(SMALL_GRID)
        spectrum = se2_analyze(density, role=SpectrumRole.PROB_SPACE)
        restored = se2_synthesize(spectrum)
        np.testing.assert_allclose(restored.values, density.values, rtol=1e-9, atol=1e-12)

    def test_dc_coefficient_is_the_integral(self):
        density = gaussian_grid(SMALL_GRID)
        spectrum = se2_analyze(density, role=SpectrumRole.PROB_SPACE)
        self.assertAlmostEqual(spectrum.dc().real, 1.0, places=9)

    def test_origin_must_be_a_sample(self):
        spec = GridSpec(7, 8, 8)
        with self.assertRaisesMessage(SpectrumError, "origin"):
            get_transform(spec)

    def test_analyze_rejects_wrong_shape(self):
        with self.assertRaises(SpectrumError):
            get_transform(SMALL_GRID).analyze(np.ones((8, 8, 4)), role=SpectrumRole.LOG_SPACE)

    def test_analyze_rejects_non_finite(self):
        values = np.ones(SMALL_GRID.shape)
        values[0, 0, 0] = np.nan
        with self.assertRaises(SpectrumError):
            get_transform(SMALL_GRID).analyze(values, role=SpectrumRole.LOG_SPACE)

    def test_orbit_zero_is_the_dc_frequency(self):
        transform = get_transform(SMALL_GRID)
        self.assertEqual(transform.radii[0], 0.0)

    def test_low_pass_bands_smooth_a_spike(self):
        bands = Bands.for_grid(MEDIUM_GRID, n_lambda=2)
        spike = point_mass(MEDIUM_GRID, *origin_index(MEDIUM_GRID))
        spectrum = se2_analyze(spike, bands, role=SpectrumRole.PROB_SPACE)
        smooth = se2_synthesize(spectrum)
        self.assertLess(smooth.max(), spike.max())
        self.assertAlmostEqual(smooth.integral(), 1.0, places=9)

    def test_adding_spectra_of_different_roles_fails(self):
        density = gaussian_grid(SMALL_GRID)
        a = se2_analyze(density, role=SpectrumRole.PROB_SPACE)
        b = se2_analyze(density, role=SpectrumRole.LOG_SPACE)
        with self.assertRaises(SpectrumError):
            a + b

    def test_convolve_requires_prob_space(self):
        density = gaussian_grid(SMALL_GRID)
        log_spectrum = se2_analyze(density, role=SpectrumRole.LOG_SPACE)
        with self.assertRaises(SpectrumError):
            spectral_convolve(log_spectrum, log_spectrum)

    def test_basis_function_matches_synthesis(self):
        transform = get_transform(SMALL_GRID)
        orbit = 3
        coeffs = np.zeros((transform.n_orbits, 8, 8), dtype=complex)
        coeffs[orbit, 1, 2] = 1.0
        spectrum = se2_analyze(gaussian_grid(SMALL_GRID), role=SpectrumRole.LOG_SPACE).with_coeffs(coeffs)
        synthesized = se2_synthesize(spectrum, check_real=False)
        x, y, theta = make_grid(SMALL_GRID).mesh
        expected = transform.basis_function(orbit, 1, 2, x, y, theta)
        np.testing.assert_allclose(transform.synthesize_complex(spectrum), expected, atol=1e-10)
        np.testing.assert_allclose(synthesized.values, expected.real, atol=1e-10)

    def test_analysis_is_linear(self):
        f = random_grid(MEDIUM_GRID, seed=1)
        g = gaussian_grid(MEDIUM_GRID, 0.1, -0.05, 1.0)
        combined = DensityGrid(MEDIUM_GRID, 2.5 * f.values - 0.75 * g.values)
        expected = (
            2.5 * se2_analyze(f, role=SpectrumRole.LOG_SPACE).coeffs
            - 0.75 * se2_analyze(g, role=SpectrumRole.LOG_SPACE).coeffs
        )
        actual = se2_analyze(combined, role=SpectrumRole.LOG_SPACE).coeffs
        np.testing.assert_allclose(actual, expected, atol=1e-9 * np.abs(expected).max())

    def test_round_trip_is_exact_on_even_grids(self):
        for shape in EVEN_GRIDS:
            with self.subTest(shape=shape):
                density = random_grid(GridSpec(*shape), seed=2)
                restored = se2_synthesize(se2_analyze(density, role=SpectrumRole.PROB_SPACE))
                np.testing.assert_allclose(restored.values, density.values, rtol=1e-9, atol=1e-12)


class ConvolutionTests(SimpleTestCase):
    def test_identity_spike_is_neutral(self):
        b = gaussian_grid(SMALL_GRID, 0.1, -0.1, 1.0)
        delta = point_mass(SMALL_GRID, *origin_index(SMALL_GRID))
        for left, right in ((delta, b), (b, delta)):
            ma = se2_analyze(left, role=SpectrumRole.PROB_SPACE)
            mb = se2_analyze(right, role=SpectrumRole.PROB_SPACE)
            result = se2_synthesize(spectral_convolve(ma, mb))
            np.testing.assert_allclose(result.values, b.values, atol=1e-9 * b.max())

    def test_translated_spike_shifts_the_density(self):
        b = gaussian_grid(SMALL_GRID, 0.0, 0.0, 0.0)
        ox, oy, ot = origin_index(SMALL_GRID)
        delta = point_mass(SMALL_GRID, ox + 2, oy, ot)
        ma = se2_analyze(delta, role=SpectrumRole.PROB_SPACE)
        mb = se2_analyze(b, role=SpectrumRole.PROB_SPACE)
        result = se2_synthesize(spectral_convolve(ma, mb))
        np.testing.assert_allclose(result.values, np.roll(b.values, 2, axis=0), atol=1e-9 * b.max())

    def test_rotated_spike_turns_the_motion(self):
        # a quarter turn followed by a step along body x ends up on +y
        motion = point_mass(SMALL_GRID, 6, 4, 0)
        turn = point_mass(SMALL_GRID, 4, 4, 2)
        ma = se2_analyze(turn, role=SpectrumRole.PROB_SPACE)
        mb = se2_analyze(motion, role=SpectrumRole.PROB_SPACE)
        result = se2_synthesize(spectral_convolve(ma, mb))
        self.assertEqual(np.unravel_index(np.argmax(result.values), SMALL_GRID.shape), (4, 6, 2))

    def test_spectral_matches_direct(self):
        a = gaussian_grid(SMALL_GRID, 0.1, 0.0, 0.5, sigma=0.1, kappa=1.0)
        b = gaussian_grid(SMALL_GRID, -0.1, 0.1, 2.0, sigma=0.12, kappa=0.5)
        ma = se2_analyze(a, role=SpectrumRole.PROB_SPACE)
        mb = se2_analyze(b, role=SpectrumRole.PROB_SPACE)
        spectral = se2_synthesize(spectral_convolve(ma, mb)).values
        direct = direct_convolve(a, b).values
        np.testing.assert_allclose(spectral, direct, atol=1e-9 * direct.max())

    def test_mass_is_preserved(self):
        a = gaussian_grid(SMALL_GRID, 0.0, 0.0, 0.5)
        b = gaussian_grid(SMALL_GRID, 0.1, 0.0, 0.0)
        ma = se2_analyze(a, role=SpectrumRole.PROB_SPACE)
        mb = se2_analyze(b, role=SpectrumRole.PROB_SPACE)
        result = se2_synthesize(spectral_convolve(ma, mb))
        self.assertTrue(math.isclose(result.integral(), 1.0, rel_tol=1e-9))

    def test_direct_convolution_rejects_mismatched_grids(self):
        a = DensityGrid(SMALL_GRID, np.ones(SMALL_GRID.shape))
        other = GridSpec(8, 8, 4)
        with self.assertRaises(ValueError):
            direct_convolve(a, DensityGrid(other, np.ones(other.shape)))

    def test_smooth_densities_convolve_on_even_grids(self):
        # Nyquist frequencies alias onto themselves under a half turn.
        for shape in EVEN_GRIDS:
            spec = GridSpec(*shape)
            transform = get_transform(spec)
            for seed in range(5):
                with self.subTest(shape=shape, seed=seed):
                    rng = np.random.default_rng(seed)
                    a = random_smooth_density(spec, rng)
                    b = random_smooth_density(spec, rng)
                    spectral = spectral_convolve_grid(a, b, transform).values
                    direct = direct_convolve(a, b, transform).values
                    np.testing.assert_allclose(spectral, direct, atol=1e-8 * direct.max())
