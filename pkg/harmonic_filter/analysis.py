"""Fidelity of S¹ density fits and the convolution runtime benchmark."""

import logging
import math
import statistics
import time
from dataclasses import dataclass

import numpy as np
from scipy.special import i0e

from .direct import direct_convolve
from .distribution import kl_quadrature
from .group import TWO_PI, DensityGrid, GridSpec, make_grid, wrap_angle
from .transform import SpectrumRole, get_transform, s1_analyze, s1_synthesize

logger = logging.getLogger(__name__)

# Spectral and direct convolutions must agree this closely before timing.
BENCHMARK_TOLERANCE = 1e-5

_WEIGHT_TOLERANCE = 1e-12


class AnalysisError(ValueError):
    """Raised for invalid mixtures or sweep parameters."""


class BenchmarkMismatchError(RuntimeError):
    """Raised when the two convolution methods disagree."""

    def __init__(self, message, *, size=None, max_error=None):
        super().__init__(message)
        self.size = size
        self.max_error = max_error


# --- von Mises mixtures ---


@dataclass(frozen=True)
class VonMisesComponent:
    mu: float
    kappa: float
    weight: float


@dataclass(frozen=True)
class VonMisesMixture:
    components: tuple

    def __post_init__(self):
        components = tuple(self.components)
        if not components:
            raise AnalysisError("A mixture needs at least one component")
        for c in components:
            if not (math.isfinite(c.kappa) and c.kappa >= 0.0):
                raise AnalysisError(f"kappa must be finite and non-negative, got {c.kappa!r}")
            if c.weight < 0.0:
                raise AnalysisError(f"Mixture weights must be non-negative, got {c.weight!r}")
        total = sum(c.weight for c in components)
        if abs(total - 1.0) > _WEIGHT_TOLERANCE:
            raise AnalysisError(f"Mixture weights sum to {total!r}")
        object.__setattr__(self, "components", components)

    @classmethod
    def equal(cls, means, kappa):
        """Equal-weight mixture of components sharing one concentration."""
        weight = 1.0 / len(means)
        return cls(tuple(VonMisesComponent(float(mu), float(kappa), weight) for mu in means))

    def with_kappa(self, kappa):
        return VonMisesMixture(
            tuple(VonMisesComponent(c.mu, float(kappa), c.weight) for c in self.components)
        )


def von_mises_log_normalizer(kappa):
    """log(2π·I₀(κ)), via the exponentially scaled Bessel function."""
    return math.log(TWO_PI) + kappa + math.log(float(i0e(kappa)))


def vm_mixture_density(mix, thetas):
    thetas = np.asarray(thetas, dtype=float)
    density = np.zeros_like(thetas)
    for c in mix.components:
        log_pdf = c.kappa * np.cos(thetas - c.mu) - von_mises_log_normalizer(c.kappa)
        density += c.weight * np.exp(log_pdf)
    return density


def quadrature_grid(points):
    return TWO_PI * np.arange(points) / points


def histogram_fit(density, bins):
    """Piecewise-constant fit: each bin holds the average of its fine samples.

    `density` is sampled on quadrature_grid(len(density)); bins must divide
    the sample count or the bin edges fall between samples.
    """
    points = len(density)
    index = np.floor(np.arange(points) * bins / points).astype(int)
    sums = np.bincount(index, weights=density, minlength=bins)
    counts = np.bincount(index, minlength=bins)
    fitted = (sums / counts)[index]
    return fitted / (fitted.sum() * TWO_PI / points)


def harmonic_fit(density, params):
    """Exponential-family fit keeping 2B+1 = params (rounded down to odd) log coefficients."""
    points = len(density)
    band = (params - 1) // 2
    thetas = quadrature_grid(points)
    spectrum = s1_analyze(np.log(density), band)
    log_fit = s1_synthesize(spectrum, thetas)
    fitted = np.exp(log_fit - log_fit.max())
    return fitted / (fitted.sum() * TWO_PI / points)


@dataclass(frozen=True)
class FidelityRow:
    method: str
    params: int
    kappa: float
    kl: float


def fidelity_sweep(mix, param_counts, kappas, quadrature_points=4096):
    """D_KL(truth ‖ fit) for histogram and harmonic fits of `mix` at each κ.

    Returns:
        list[FidelityRow]: Ordered by κ, then parameter count, then method.
    """
    if quadrature_points < 4096:
        raise AnalysisError(f"Use at least 4096 quadrature points, got {quadrature_points}")
    thetas = quadrature_grid(quadrature_points)
    weight = TWO_PI / quadrature_points
    rows = []
    for kappa in kappas:
        truth = vm_mixture_density(mix.with_kappa(kappa), thetas)
        for params in param_counts:
            if params < 2:
                raise AnalysisError(f"Parameter counts must be at least 2, got {params}")
            fits = (
                ("histogram", histogram_fit(truth, params)),
                ("hed", harmonic_fit(truth, params)),
            )
            for method, fitted in fits:
                kl = kl_quadrature(truth, fitted, weight)
                rows.append(FidelityRow(method, params, float(kappa), kl))
                logger.debug("fidelity %s P=%d kappa=%g kl=%.3e", method, params, kappa, kl)
    return rows


# --- Convolution benchmark ---


def random_smooth_density(spec, rng, bumps=3, spread=0.08):
    """Normalised sum of Gaussian-in-(x, y), von-Mises-in-θ bumps near the centre."""
    x, y, theta = make_grid(spec).mesh
    values = np.zeros(spec.shape)
    for _ in range(bumps):
        cx, cy = rng.uniform(-0.15, 0.15, size=2) * np.array([spec.length_x, spec.length_y])
        heading = rng.uniform(0.0, TWO_PI)
        kappa = rng.uniform(0.5, 3.0)
        sigma = spread * min(spec.length_x, spec.length_y) * rng.uniform(0.7, 1.3)
        planar = np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2.0 * sigma**2))
        values += rng.uniform(0.5, 1.5) * planar * np.exp(kappa * np.cos(wrap_angle(theta - heading)))
    return DensityGrid(spec, values).normalize()


def spectral_convolve_grid(a, b, transform):
    ma = transform.analyze(a, role=SpectrumRole.PROB_SPACE)
    mb = transform.analyze(b, role=SpectrumRole.PROB_SPACE)
    return transform.synthesize(transform.convolve(ma, mb))


@dataclass(frozen=True)
class BenchRow:
    method: str
    size: tuple
    seconds: float


def _median_time(func, repetitions):
    timings = []
    for _ in range(repetitions):
        start = time.perf_counter()
        func()
        timings.append(time.perf_counter() - start)
    return statistics.median(timings)


def bench_convolution(sizes, repetitions=3, seed=0):
    """Median wall time of direct and spectral convolution per grid size.

    Both methods run once untimed, and their outputs must agree within
    BENCHMARK_TOLERANCE before any time is reported.

    Raises:
        BenchmarkMismatchError: If the outputs disagree at some size.
    """
    rng = np.random.default_rng(seed)
    rows = []
    for size in sizes:
        spec = GridSpec(*size)
        transform = get_transform(spec)
        a = random_smooth_density(spec, rng)
        b = random_smooth_density(spec, rng)
        direct = direct_convolve(a, b, transform).values
        spectral = spectral_convolve_grid(a, b, transform).values
        max_error = float(np.abs(direct - spectral).max())
        if max_error > BENCHMARK_TOLERANCE:
            raise BenchmarkMismatchError(
                f"Spectral and direct convolution differ by {max_error:.3g} at {size}",
                size=tuple(size),
                max_error=max_error,
            )
        direct_seconds = _median_time(lambda: direct_convolve(a, b, transform), repetitions)
        spectral_seconds = _median_time(lambda: spectral_convolve_grid(a, b, transform), repetitions)
        rows.append(BenchRow("direct", tuple(size), direct_seconds))
        rows.append(BenchRow("spectral", tuple(size), spectral_seconds))
        logger.info(
            "bench %s: direct %.4fs spectral %.4fs (max error %.2e)",
            size,
            direct_seconds,
            spectral_seconds,
            max_error,
        )
    return rows


def speedups(rows):
    """direct/spectral time ratio per size."""
    times = {(row.method, row.size): row.seconds for row in rows}
    return {
        size: times[("direct", size)] / times[("spectral", size)]
        for method, size in times
        if method == "direct"
    }
