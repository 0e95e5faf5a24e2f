import numpy as np

from harmonic_filter.group import DensityGrid, GridSpec, make_grid, wrap_angle
from harmonic_filter.measurements import Landmark, LandmarkMap

SMALL_GRID = GridSpec(8, 8, 8)
MEDIUM_GRID = GridSpec(16, 16, 8)


def gaussian_grid(spec, x=0.0, y=0.0, theta=0.0, sigma=0.08, kappa=2.0):
    """Normalised Gaussian-in-(x, y), von-Mises-in-θ density."""
    xs, ys, thetas = make_grid(spec).mesh
    log_values = -((xs - x) ** 2 + (ys - y) ** 2) / (2.0 * sigma**2)
    log_values = log_values + kappa * np.cos(wrap_angle(thetas - theta))
    return DensityGrid(spec, np.exp(log_values - log_values.max())).normalize()


def point_mass(spec, ix, iy, it):
    """Unit-mass spike on one sample."""
    values = np.zeros(spec.shape)
    values[ix, iy, it] = 1.0 / spec.weight
    return DensityGrid(spec, values, normalized=True)


def random_grid(spec, seed=0):
    rng = np.random.default_rng(seed)
    return DensityGrid(spec, rng.uniform(0.5, 1.5, spec.shape)).normalize()


def two_landmark_map():
    return LandmarkMap((Landmark(0, -0.2, 0.0), Landmark(1, 0.2, 0.0)))


def origin_index(spec):
    return make_grid(spec).nearest_index(0.0, 0.0, 0.0)


def small_run_overrides():
    """Config overrides small enough for every filter to finish in seconds."""
    return {
        "grid": {"nx": 16, "ny": 16, "ntheta": 8},
        "seeds": 2,
        "filter": {"particles": 200},
        "simulation": {"n_landmarks": 3, "n_steps": 4, "loop_steps": 40},
        "sweep": {"sigma_trans": [0.025], "sigma_rot": [0.1, 0.2]},
        "banana": {"n_steps": 2, "particles": 500, "oracle_particles": 2000},
        "fidelity": {"param_counts": [8, 16], "kappas": [1.0]},
        "bench": {"sizes": [[8, 8, 4]], "repetitions": 1},
    }
