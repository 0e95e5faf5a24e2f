import math
from unittest import mock

import numpy as np
from django.test import SimpleTestCase

from harmonic_filter.analysis import (
    AnalysisError,
    BenchmarkMismatchError,
    BenchRow,
    VonMisesComponent,
    VonMisesMixture,
    bench_convolution,
    fidelity_sweep,
    harmonic_fit,
    histogram_fit,
    quadrature_grid,
    speedups,
    vm_mixture_density,
    von_mises_log_normalizer,
)
from harmonic_filter.distribution import kl_quadrature
from harmonic_filter.group import TWO_PI, DensityGrid

POINTS = 4096


class VonMisesTests(SimpleTestCase):
    def test_uniform_normaliser(self):
        self.assertAlmostEqual(von_mises_log_normalizer(0.0), math.log(TWO_PI))

    def test_large_kappa_normaliser_is_finite(self):
        self.assertTrue(math.isfinite(von_mises_log_normalizer(1e4)))

    def test_mixture_integrates_to_one(self):
        mix = VonMisesMixture.equal((0.0, 1.0), 4.0)
        density = vm_mixture_density(mix, quadrature_grid(POINTS))
        self.assertAlmostEqual(density.sum() * TWO_PI / POINTS, 1.0)

    def test_weights_must_sum_to_one(self):
        with self.assertRaises(AnalysisError):
            VonMisesMixture((VonMisesComponent(0.0, 1.0, 0.6),))

    def test_negative_kappa(self):
        with self.assertRaises(AnalysisError):
            VonMisesMixture((VonMisesComponent(0.0, -1.0, 1.0),))

    def test_empty_mixture(self):
        with self.assertRaises(AnalysisError):
            VonMisesMixture(())


class FitTests(SimpleTestCase):
    def setUp(self):
        self.thetas = quadrature_grid(POINTS)
        self.truth = vm_mixture_density(VonMisesMixture.equal((0.0, 1.0), 2.0), self.thetas)

    def test_histogram_is_piecewise_constant(self):
        fitted = histogram_fit(self.truth, 8)
        self.assertEqual(len(np.unique(np.round(fitted, 12))), 8)
        self.assertAlmostEqual(fitted.sum() * TWO_PI / POINTS, 1.0)

    def test_harmonic_fit_is_exact_for_single_von_mises(self):
        truth = vm_mixture_density(VonMisesMixture.equal((0.5,), 3.0), self.thetas)
        fitted = harmonic_fit(truth, 3)
        self.assertAlmostEqual(kl_quadrature(truth, fitted, TWO_PI / POINTS), 0.0, places=10)

    def test_harmonic_fit_is_normalised(self):
        fitted = harmonic_fit(self.truth, 8)
        self.assertAlmostEqual(fitted.sum() * TWO_PI / POINTS, 1.0)


class FidelitySweepTests(SimpleTestCase):
    def setUp(self):
        self.mix = VonMisesMixture.equal((0.0, 1.0), 1.0)

    def test_row_order(self):
        rows = fidelity_sweep(self.mix, (8, 16), (1.0, 2.0))
        self.assertEqual(
            [(r.kappa, r.params, r.method) for r in rows],
            [
                (1.0, 8, "histogram"),
                (1.0, 8, "hed"),
                (1.0, 16, "histogram"),
                (1.0, 16, "hed"),
                (2.0, 8, "histogram"),
                (2.0, 8, "hed"),
                (2.0, 16, "histogram"),
                (2.0, 16, "hed"),
            ],
        )

    def test_error_shrinks_with_more_parameters(self):
        rows = fidelity_sweep(self.mix, (8, 16, 32, 64), (4.0,))
        for method in ("histogram", "hed"):
            kls = [r.kl for r in rows if r.method == method]
            self.assertEqual(kls, sorted(kls, reverse=True), method)
        self.assertGreater(rows[0].kl, rows[-2].kl)

    def test_harmonic_beats_histogram_at_matched_budget(self):
        rows = fidelity_sweep(self.mix, (32,), (2.0, 4.0))
        by_key = {(r.kappa, r.method): r.kl for r in rows}
        for kappa in (2.0, 4.0):
            self.assertLess(by_key[(kappa, "hed")], by_key[(kappa, "histogram")])

    def test_too_few_quadrature_points(self):
        with self.assertRaises(AnalysisError):
            fidelity_sweep(self.mix, (8,), (1.0,), quadrature_points=1024)

    def test_parameter_count_below_two(self):
        with self.assertRaises(AnalysisError):
            fidelity_sweep(self.mix, (1,), (1.0,))


class BenchmarkTests(SimpleTestCase):
    def test_rows_per_size(self):
        rows = bench_convolution([(8, 8, 4)], repetitions=1)
        self.assertEqual([r.method for r in rows], ["direct", "spectral"])
        self.assertTrue(all(r.size == (8, 8, 4) and r.seconds >= 0.0 for r in rows))

    def test_disagreement_aborts(self):
        def broken(a, b, transform):
            return DensityGrid(a.spec, np.zeros(a.spec.shape))

        with mock.patch("harmonic_filter.analysis.spectral_convolve_grid", broken):
            with self.assertRaises(BenchmarkMismatchError) as ctx:
                bench_convolution([(8, 8, 4)], repetitions=1)
        self.assertEqual(ctx.exception.size, (8, 8, 4))
        self.assertGreater(ctx.exception.max_error, 0.0)

    def test_speedups(self):
        rows = [
            BenchRow("direct", (8, 8, 4), 2.0),
            BenchRow("spectral", (8, 8, 4), 0.5),
            BenchRow("direct", (16, 16, 4), 9.0),
            BenchRow("spectral", (16, 16, 4), 1.0),
        ]
        self.assertEqual(speedups(rows), {(8, 8, 4): 4.0, (16, 16, 4): 9.0})
