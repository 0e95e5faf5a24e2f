"""Baseline filters sharing the motion and measurement models: EKF, HistF, PF."""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.special import logsumexp

from .distribution import DENSITY_FLOOR, density_moments, estimate_from_density, mode_of_density
from .group import DensityGrid, Pose, compose, compose_arrays, make_grid, wrap_angle
from .measurements import (
    MeasurementKind,
    associate_greedy,
    associate_weighted,
    pose_loglik,
    resolve_measurements,
    total_loglik,
)

logger = logging.getLogger(__name__)

# Histogram-filter kernels are cut off this many standard deviations out.
_KERNEL_SIGMAS = 3.0

# Smallest landmark distance the EKF will linearise at.
_MIN_RANGE = 1e-12


class BaselineError(RuntimeError):
    """Raised when a baseline filter hits a numerical dead end."""


# --- EKF ---


@dataclass(frozen=True, eq=False)
class GaussianBelief:
    mean: Pose
    covariance: np.ndarray = field(repr=False)

    def __post_init__(self):
        cov = np.array(self.covariance, dtype=float)
        if cov.shape != (3, 3):
            raise BaselineError(f"Covariance must be 3x3, got {cov.shape}")
        if np.abs(cov - cov.T).max() > 1e-10 * max(1.0, np.abs(cov).max()):
            raise BaselineError("Covariance is not symmetric")
        try:
            np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise BaselineError(f"Covariance is not positive definite: {exc}") from exc
        cov.setflags(write=False)
        object.__setattr__(self, "covariance", cov)


def _process_noise(model):
    return np.diag([model.sigma_trans**2, model.sigma_trans**2, model.sigma_rot**2])


def ekf_predict(bel, u, model):
    theta = bel.mean.theta
    c, s = math.cos(theta), math.sin(theta)
    jacobian = np.array(
        [
            [1.0, 0.0, -s * u.dx - c * u.dy],
            [0.0, 1.0, c * u.dx - s * u.dy],
            [0.0, 0.0, 1.0],
        ]
    )
    cov = jacobian @ bel.covariance @ jacobian.T + _process_noise(model)
    mean = compose(bel.mean, Pose(u.dx, u.dy, u.dtheta))
    return GaussianBelief(mean, 0.5 * (cov + cov.T))


def ekf_update(bel, z, landmark_map):
    """Linearised range or bearing update with a wrapped bearing innovation.

    Raises:
        BaselineError: If the innovation covariance is singular.
    """
    landmark = landmark_map.get(z.landmark_id)
    mean = bel.mean
    dx = landmark.x - mean.x
    dy = landmark.y - mean.y
    q = dx * dx + dy * dy
    r = math.sqrt(q)
    if r < _MIN_RANGE:
        raise BaselineError("Singular innovation covariance: pose coincides with the landmark")
    if z.kind is MeasurementKind.RANGE:
        predicted = r
        h = np.array([-dx / r, -dy / r, 0.0])
        innovation = z.value - predicted
    else:
        predicted = math.atan2(dy, dx) - mean.theta
        h = np.array([dy / q, -dx / q, -1.0])
        innovation = wrap_angle(z.value - predicted)
    cov = bel.covariance
    s = float(h @ cov @ h) + z.sigma**2
    if not (math.isfinite(s) and s > 0.0):
        raise BaselineError(f"Singular innovation covariance (S={s!r})")
    gain = cov @ h / s
    correction = gain * innovation
    updated = Pose(mean.x + correction[0], mean.y + correction[1], mean.theta + correction[2])
    joseph = np.eye(3) - np.outer(gain, h)
    new_cov = joseph @ cov @ joseph.T + z.sigma**2 * np.outer(gain, gain)
    return GaussianBelief(updated, 0.5 * (new_cov + new_cov.T))


def ekf_step(bel, u, measurements, *, model, landmark_map=None):
    bel = ekf_predict(bel, u, model)
    if not measurements:
        return bel
    point = bel.mean.as_array()[None, :]
    resolved = resolve_measurements(
        landmark_map, measurements, lambda z: associate_weighted(landmark_map, z, point, [1.0])
    )
    for z in resolved:
        bel = ekf_update(bel, z, landmark_map)
    return bel


def gaussian_density(bel, spec):
    """The EKF Gaussian sampled on the grid (heading residual wrapped), normalised."""
    x, y, theta = make_grid(spec).mesh
    residual = np.stack(
        [x - bel.mean.x, y - bel.mean.y, wrap_angle(theta - bel.mean.theta)], axis=-1
    )
    precision = np.linalg.inv(bel.covariance)
    log_values = -0.5 * np.einsum("...i,ij,...j->...", residual, precision, residual)
    return DensityGrid(spec, np.exp(log_values - log_values.max())).normalize()


def moment_matched(density):
    """Gaussian with the grid density's mean and (wrapped-heading) covariance."""
    mx, my, _, heading, _ = density_moments(density)
    x, y, theta = make_grid(density.spec).mesh
    p = density.values / density.values.sum()
    residual = np.stack([x - mx, y - my, wrap_angle(theta - heading)], axis=-1).reshape(-1, 3)
    weights = p.reshape(-1)
    cov = (residual * weights[:, None]).T @ residual
    # Keep tiny grids with point-like mass positive definite.
    cov += np.diag([1e-12, 1e-12, 1e-12])
    return GaussianBelief(Pose(mx, my, heading), 0.5 * (cov + cov.T))


class EkfFilter:
    name = "ekf"

    def __init__(self, prior, model, landmark_map, spec):
        self.belief = prior
        self.model = model
        self.landmark_map = landmark_map
        self.spec = spec

    def step(self, u, measurements=(), gt=None):
        self.belief = ekf_step(
            self.belief, u, list(measurements), model=self.model, landmark_map=self.landmark_map
        )

    def mode(self):
        return self.belief.mean

    def mean(self):
        return self.belief.mean

    def density(self):
        return gaussian_density(self.belief, self.spec)


# --- Histogram filter ---


def _axis_log_kernel(shift, sigma, step, size, axis):
    radius = int(math.ceil((abs(shift) + _KERNEL_SIGMAS * sigma) / step))
    if 2 * radius + 1 > size:
        raise BaselineError(
            f"Motion kernel along {axis} spans {2 * radius + 1} cells, grid has {size}"
        )
    error = np.arange(-radius, radius + 1) * step - shift
    log_weights = -(error**2) / (2.0 * sigma**2)
    # Keep the nearest sample even when σ is far below the cell size.
    support = np.abs(error) <= _KERNEL_SIGMAS * sigma + 0.5 * step
    return np.where(support, log_weights, -np.inf)


def histf_axis_kernels(spec, shift_x, shift_y, shift_theta, model):
    """Per-axis truncated Gaussian kernels (x, y, θ), each summing to one.

    Raises:
        BaselineError: If a kernel is wider than the grid along its axis.
    """
    axes = (
        _axis_log_kernel(shift_x, model.sigma_trans, spec.dx, spec.nx, "x"),
        _axis_log_kernel(shift_y, model.sigma_trans, spec.dy, spec.ny, "y"),
        _axis_log_kernel(shift_theta, model.sigma_rot, spec.dtheta, spec.ntheta, "theta"),
    )
    kernels = []
    for log_weights in axes:
        weights = np.exp(log_weights - log_weights.max())
        kernels.append(weights / weights.sum())
    return tuple(kernels)


def histf_kernel(spec, shift_x, shift_y, shift_theta, model):
    """Separable truncated Gaussian kernel of cell offsets, summing to one.

    Raises:
        BaselineError: If the kernel is wider than the grid along any axis.
    """
    kx, ky, kt = histf_axis_kernels(spec, shift_x, shift_y, shift_theta, model)
    return kx[:, None, None] * ky[None, :, None] * kt[None, None, :]


def histf_predict(bel, u, model, heading=None):
    """Planar-shift prediction: one kernel for the whole grid.

    The displacement is rotated by the belief's circular-mean heading, so
    heading spread does not bend the motion.  The kernel is applied one axis
    at a time; x and y are zero-padded and θ wraps.
    """
    spec = bel.spec
    if heading is None:
        heading = density_moments(bel)[3]
    c, s = math.cos(heading), math.sin(heading)
    kx, ky, kt = histf_axis_kernels(spec, c * u.dx - s * u.dy, s * u.dx + c * u.dy, u.dtheta, model)
    moved = ndimage.convolve1d(bel.values, kx, axis=0, mode="constant", cval=0.0)
    moved = ndimage.convolve1d(moved, ky, axis=1, mode="constant", cval=0.0)
    moved = ndimage.convolve1d(moved, kt, axis=2, mode="wrap")
    return DensityGrid(spec, np.maximum(moved, 0.0)).normalize()


def histf_update(bel, log_lik):
    values = bel.values * np.exp(log_lik.values - log_lik.values.max())
    if not values.sum() > 0.0:
        raise BaselineError("Histogram update removed all probability mass")
    return DensityGrid(bel.spec, values).normalize()


def histf_step(bel, u, measurements, *, model, landmark_map=None):
    pred = histf_predict(bel, u, model)
    if not measurements:
        return pred
    resolved = resolve_measurements(
        landmark_map, measurements, lambda z: associate_greedy(landmark_map, z, pred)
    )
    return histf_update(pred, total_loglik(landmark_map, resolved, bel.spec))


class HistogramFilter:
    name = "histf"

    def __init__(self, prior, model, landmark_map):
        self.belief = prior
        self.model = model
        self.landmark_map = landmark_map

    def step(self, u, measurements=(), gt=None):
        self.belief = histf_step(
            self.belief, u, list(measurements), model=self.model, landmark_map=self.landmark_map
        )

    def mode(self):
        return mode_of_density(self.belief)

    def mean(self):
        return estimate_from_density(self.belief).pose

    def density(self):
        return self.belief


# --- Particle filter ---


@dataclass(frozen=True, eq=False)
class ParticleSet:
    particles: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        particles = np.array(self.particles, dtype=float)
        weights = np.array(self.weights, dtype=float)
        if particles.ndim != 2 or particles.shape[1] != 3 or particles.shape[0] < 1:
            raise BaselineError(f"Particles must be an (N, 3) array, got {particles.shape}")
        if weights.shape != (particles.shape[0],):
            raise BaselineError(f"Expected {particles.shape[0]} weights, got {weights.shape}")
        if np.any(weights < 0.0) or abs(weights.sum() - 1.0) > 1e-9:
            raise BaselineError("Particle weights must be non-negative and sum to one")
        particles.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "particles", particles)
        object.__setattr__(self, "weights", weights)

    def __len__(self):
        return self.particles.shape[0]

    @classmethod
    def uniform(cls, particles):
        n = len(particles)
        return cls(particles, np.full(n, 1.0 / n))


def effective_sample_size(weights):
    return 1.0 / float(np.sum(np.square(weights)))


def systematic_resample(weights, rng):
    """Indexes drawn with one random offset and N evenly spaced positions."""
    n = len(weights)
    positions = (rng.random() + np.arange(n)) / n
    cumulative = np.cumsum(weights)
    cumulative[-1] = 1.0
    return np.searchsorted(cumulative, positions)


def particle_mean(ps):
    p = ps.particles
    w = ps.weights
    heading = math.atan2(float(w @ np.sin(p[:, 2])), float(w @ np.cos(p[:, 2])))
    return Pose(float(w @ p[:, 0]), float(w @ p[:, 1]), heading)


def particle_mode(ps):
    return Pose(*ps.particles[int(np.argmax(ps.weights))])


def particles_density(ps, spec, epsilon=DENSITY_FLOOR):
    """Weighted histogram at grid resolution (nearest sample), ε-smoothed."""
    p = ps.particles
    ix, iy, it = make_grid(spec).nearest_index(p[:, 0], p[:, 1], p[:, 2])
    flat = np.ravel_multi_index((ix, iy, it), spec.shape)
    counts = np.bincount(flat, weights=ps.weights, minlength=spec.size)
    values = counts.reshape(spec.shape) / spec.weight + epsilon
    return DensityGrid(spec, values).normalize()


def sample_from_density(density, n, rng):
    """Draw n poses: a cell by its probability, then uniformly inside the cell."""
    spec = density.spec
    grid = make_grid(spec)
    p = density.values.ravel()
    cells = rng.choice(spec.size, size=n, p=p / p.sum())
    poses = grid.poses[cells]
    jitter = rng.random((n, 3)) - 0.5
    poses = poses + jitter * np.array([spec.dx, spec.dy, spec.dtheta])
    poses[:, 2] = np.mod(poses[:, 2], 2.0 * math.pi)
    return ParticleSet.uniform(poses)


@dataclass(frozen=True)
class PfStep:
    particles: ParticleSet
    weighted: ParticleSet
    mode: Pose
    mean: Pose
    resampled: bool
    degenerate: bool
    ess: float


def pf_step(ps, u, measurements, rng, *, model, landmark_map=None, spec=None):
    """Propagate, weight and (when ESS < N/2) systematically resample.

    A likelihood that zeroes every weight resets them to uniform and sets
    the degenerate flag.
    """
    n = len(ps)
    noise = rng.normal(size=(n, 3)) * np.array([model.sigma_trans, model.sigma_trans, model.sigma_rot])
    particles = compose_arrays(ps.particles, u.as_array()[None, :] + noise)
    with np.errstate(divide="ignore"):
        log_w = np.log(ps.weights)
    if measurements:
        resolved = resolve_measurements(
            landmark_map,
            measurements,
            lambda z: associate_weighted(landmark_map, z, particles, ps.weights, spec),
        )
        for z in resolved:
            log_w = log_w + pose_loglik(landmark_map, z, particles, spec)
    degenerate = False
    total = logsumexp(log_w)
    if not np.isfinite(total):
        logger.warning("Particle weights collapsed; resetting to uniform")
        weights = np.full(n, 1.0 / n)
        degenerate = True
    else:
        weights = np.exp(log_w - total)
        weights /= weights.sum()
    weighted = ParticleSet(particles, weights)
    ess = effective_sample_size(weights)
    mode = particle_mode(weighted)
    mean = particle_mean(weighted)
    resampled = ess < n / 2
    if resampled:
        indexes = systematic_resample(weights, rng)
        current = ParticleSet.uniform(particles[indexes])
    else:
        current = weighted
    return PfStep(current, weighted, mode, mean, resampled, degenerate, ess)


class ParticleFilter:
    name = "pf"

    def __init__(self, prior, model, landmark_map, spec, rng):
        self.particles = prior
        self.weighted = prior
        self.model = model
        self.landmark_map = landmark_map
        self.spec = spec
        self.rng = rng
        self._mode = particle_mode(prior)
        self._mean = particle_mean(prior)
        self.degenerate_steps = 0

    def step(self, u, measurements=(), gt=None):
        result = pf_step(
            self.particles,
            u,
            list(measurements),
            self.rng,
            model=self.model,
            landmark_map=self.landmark_map,
            spec=self.spec,
        )
        self.particles = result.particles
        self.weighted = result.weighted
        self._mode = result.mode
        self._mean = result.mean
        if result.degenerate:
            self.degenerate_steps += 1

    def mode(self):
        return self._mode

    def mean(self):
        return self._mean

    def density(self):
        return particles_density(self.weighted, self.spec)
