"""Harmonic exponential distributions on the pose grid.

A belief is stored by its natural parameters η, the LOG_SPACE spectrum of
its log-density, together with the cached log-normaliser.  Products add
natural parameters; convolutions go through PROB_SPACE spectra and are
re-fitted into log form.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import logsumexp

from .group import DensityGrid, GridError, Pose, make_grid
from .transform import (
    DEFAULT_INTERPOLATION_ORDER,
    SpectrumError,
    SpectrumRole,
    get_transform,
)

logger = logging.getLogger(__name__)

# Densities are floored at this fraction of their maximum before any log.
DENSITY_FLOOR = 1e-12

# Below this resultant length the circular mean is reported as undefined.
_RESULTANT_MIN = 1e-6


class DistributionError(ValueError):
    """Raised for non-finite inputs or mismatched distributions."""


def floor_density(values):
    """Clamp samples from below at DENSITY_FLOOR × max."""
    values = np.asarray(values, dtype=float)
    peak = float(values.max())
    if not peak > 0.0 or not math.isfinite(peak):
        raise DistributionError(f"Cannot floor a density whose maximum is {peak!r}")
    return np.maximum(values, DENSITY_FLOOR * peak)


def log_floor(values):
    return np.log(floor_density(values))


def floor_log_field(field_values):
    """Clamp a log field from below at max + log(DENSITY_FLOOR)."""
    field_values = np.asarray(field_values, dtype=float)
    return np.maximum(field_values, field_values.max() + math.log(DENSITY_FLOOR))


@dataclass(frozen=True, eq=False)
class HarmonicExpDist:
    """p(g) = exp(F⁻¹[η](g) - log_z) on eta.grid."""

    eta: object = field(repr=False)
    log_z: float

    @property
    def grid(self):
        return self.eta.grid

    @property
    def bands(self):
        return self.eta.bands

    @property
    def transform(self):
        return get_transform(self.eta.grid, self.eta.bands, self.eta.interpolation_order)

    @cached_property
    def log_density(self):
        """Unnormalised ln φ(g) = η·T(g) on the grid."""
        values = self.transform.synthesize(self.eta).values
        values.setflags(write=False)
        return values

    @cached_property
    def density(self):
        values = np.exp(self.log_density - self.log_z)
        # Quadrature and rounding leave a residue well inside the tolerance.
        values /= self.grid.weight * values.sum()
        return DensityGrid(self.grid, values, normalized=True)

    @classmethod
    def from_eta(cls, eta):
        """Wrap natural parameters, computing the log-normaliser."""
        eta.require_role(SpectrumRole.LOG_SPACE)
        transform = get_transform(eta.grid, eta.bands, eta.interpolation_order)
        log_phi = transform.synthesize(eta).values
        dist = cls(eta, log_normalizer(log_phi, eta.grid.weight))
        dist.__dict__["log_density"] = log_phi
        return dist

    def expected_iur(self):
        """μ = E[T(g)], the PROB_SPACE spectrum of the normalised density."""
        return self.transform.analyze(self.density, role=SpectrumRole.PROB_SPACE)


def log_normalizer(log_phi, weight):
    """log ∫ exp(ln φ) with max-subtraction, via log-sum-exp."""
    return float(logsumexp(log_phi) + math.log(weight))


def _check_pair(a, b):
    if a.grid != b.grid:
        raise DistributionError(f"Grid mismatch: {a.grid} vs {b.grid}")
    if a.bands != b.bands:
        raise DistributionError(f"Band mismatch: {a.bands} vs {b.bands}")
    if a.eta.interpolation_order != b.eta.interpolation_order:
        raise DistributionError(
            "Interpolation order mismatch: "
            f"{a.eta.interpolation_order} vs {b.eta.interpolation_order}"
        )


def fit_from_log_density(log_f, bands=None, interpolation_order=DEFAULT_INTERPOLATION_ORDER):
    """Fit natural parameters to sampled log-density values.

    Args:
        log_f: DensityGrid of finite (already floored) log values.
        bands: Band set; defaults to the full band set of the grid.
        interpolation_order: Spline order of the rotation sampler.

    Returns:
        HarmonicExpDist: The fitted, normalised distribution.

    Raises:
        DistributionError: If any sample is non-finite.
    """
    if not isinstance(log_f, DensityGrid):
        raise DistributionError(f"Expected DensityGrid, got {type(log_f).__name__}")
    if not np.all(np.isfinite(log_f.values)):
        raise DistributionError("Log-density has non-finite samples; floor it first")
    transform = get_transform(log_f.spec, bands, interpolation_order)
    try:
        eta = transform.analyze(log_f, role=SpectrumRole.LOG_SPACE)
    except SpectrumError as exc:
        raise DistributionError(f"Could not analyse log-density: {exc}") from exc
    return HarmonicExpDist.from_eta(eta)


def fit_from_density(density, bands=None, interpolation_order=DEFAULT_INTERPOLATION_ORDER):
    """Floor, take the log of and fit a sampled (possibly unnormalised) density."""
    log_f = DensityGrid(density.spec, log_floor(density.values))
    return fit_from_log_density(log_f, bands, interpolation_order)


def uniform(spec, bands=None, interpolation_order=DEFAULT_INTERPOLATION_ORDER):
    return fit_from_log_density(DensityGrid(spec, np.zeros(spec.shape)), bands, interpolation_order)


def evaluate(d):
    """Normalised density samples of `d`."""
    return d.density


def product(a, b):
    """Normalised pointwise product: natural parameters add.

    Raises:
        DistributionError: On grid or band mismatch.
    """
    _check_pair(a, b)
    return HarmonicExpDist.from_eta(a.eta + b.eta)


def convolve_grid(a, b):
    """Normalised samples of a ∗ b before the log-space re-fit."""
    _check_pair(a, b)
    transform = a.transform
    ma = transform.analyze(evaluate(a), role=SpectrumRole.PROB_SPACE)
    mb = transform.analyze(evaluate(b), role=SpectrumRole.PROB_SPACE)
    try:
        values = transform.synthesize(transform.convolve(ma, mb)).values
    except SpectrumError as exc:
        raise DistributionError(f"Convolution failed: {exc}") from exc
    return DensityGrid(a.grid, floor_density(values)).normalize()


def convolve(a, b):
    """(a ∗ b)(g) = ∫ a(h) b(h⁻¹∘g) dh, re-fitted into log form.

    Raises:
        DistributionError: On grid or band mismatch.
    """
    grid = convolve_grid(a, b)
    return fit_from_density(grid, a.bands, a.eta.interpolation_order)


# --- Estimators ---


@dataclass(frozen=True)
class PoseEstimate:
    pose: Pose
    covariance: np.ndarray = field(repr=False)
    orientation_defined: bool
    resultant_length: float
    expected_iur: object = field(default=None, repr=False)


def density_moments(density):
    """Grid-weighted planar mean/covariance and circular heading statistics.

    Returns:
        tuple: (mean_x, mean_y, covariance 2×2, mean heading, resultant length).
    """
    spec = density.spec
    xs, ys, thetas = make_grid(spec).mesh
    p = density.values * spec.weight
    total = p.sum()
    if not total > 0.0:
        raise DistributionError("Density has no mass")
    p = p / total
    mx = float((p * xs).sum())
    my = float((p * ys).sum())
    ddx = xs - mx
    ddy = ys - my
    cov = np.array(
        [
            [(p * ddx * ddx).sum(), (p * ddx * ddy).sum()],
            [(p * ddx * ddy).sum(), (p * ddy * ddy).sum()],
        ]
    )
    c = float((p * np.cos(thetas)).sum())
    s = float((p * np.sin(thetas)).sum())
    return mx, my, cov, math.atan2(s, c), math.hypot(c, s)


def estimate_from_density(density):
    mx, my, cov, heading, resultant = density_moments(density)
    defined = resultant >= _RESULTANT_MIN
    if not defined:
        logger.warning("Circular mean undefined (resultant length %.3g)", resultant)
        heading = 0.0
    return PoseEstimate(Pose(mx, my, heading), cov, defined, resultant)


def mean_pose(d, *, include_iur=False):
    """Position mean, planar covariance and circular-mean heading of `d`."""
    estimate = estimate_from_density(evaluate(d))
    if include_iur:
        return PoseEstimate(
            estimate.pose,
            estimate.covariance,
            estimate.orientation_defined,
            estimate.resultant_length,
            d.expected_iur(),
        )
    return estimate


def mode_of_density(density):
    """Grid sample with the largest value; the lowest row-major index wins ties."""
    return make_grid(density.spec).pose_at(int(np.argmax(density.values)))


def mode_pose(d):
    return mode_of_density(evaluate(d))


# --- Divergences ---


def kl_quadrature(p, q, weight):
    """w·Σ p·log(p/q) with q floored at DENSITY_FLOOR × max(q); clipped at 0."""
    p = np.asarray(p, dtype=float)
    q = floor_density(q)
    support = p > 0.0
    value = weight * float(np.sum(p[support] * (np.log(p[support]) - np.log(q[support]))))
    return max(value, 0.0)


def kl_divergence(p, q):
    """D_KL(p ‖ q) between two normalised densities on one grid.

    Raises:
        DistributionError: On grid mismatch.
    """
    try:
        p.require_same_grid(q)
    except GridError as exc:
        raise DistributionError(str(exc)) from exc
    return kl_quadrature(p.values, q.values, p.spec.weight)


def total_variation(p, q):
    """½·w·Σ|p - q| between two densities on one grid."""
    try:
        p.require_same_grid(q)
    except GridError as exc:
        raise DistributionError(str(exc)) from exc
    return 0.5 * p.spec.weight * float(np.abs(p.values - q.values).sum())


def planar_marginal(density):
    """∫ p dθ as an (nx, ny) array."""
    return density.values.sum(axis=2) * density.spec.dtheta


def entropy(d):
    """-w·Σ p log p of a HarmonicExpDist or DensityGrid."""
    density = d if isinstance(d, DensityGrid) else evaluate(d)
    p = density.values
    support = p > 0.0
    return -density.spec.weight * float(np.sum(p[support] * np.log(p[support])))