"""SE(2) group elements and the pose grid shared by every density.

Angles are stored canonicalised into [0, 2π).  Grids are cell-left-aligned:
sample (0, 0, 0) sits on the lower bounds and θ samples never duplicate 2π.
"""

import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np

TWO_PI = 2.0 * math.pi

# Normalised densities must integrate to one within this tolerance.
_NORMALIZATION_TOLERANCE = 1e-6


class GridError(ValueError):
    """Raised for invalid grid specifications or mismatched grids."""


def canonical_angle(theta):
    """Map an angle (scalar or array) into [0, 2π)."""
    wrapped = np.mod(theta, TWO_PI)
    # np.mod can round -tiny up to exactly 2π.
    wrapped = np.where(wrapped >= TWO_PI, 0.0, wrapped)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


def wrap_angle(theta):
    """Map an angle (scalar or array) into (-π, π]."""
    wrapped = math.pi - np.mod(math.pi - np.asarray(theta, dtype=float), TWO_PI)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", canonical_angle(float(self.theta)))

    @classmethod
    def identity(cls):
        return cls(0.0, 0.0, 0.0)

    def as_array(self):
        return np.array([self.x, self.y, self.theta])

    def to_dict(self):
        return {"x": self.x, "y": self.y, "theta": self.theta}

    @classmethod
    def from_dict(cls, data):
        return cls(data["x"], data["y"], data["theta"])


def compose(a, b):
    """Rigid-body composition a ∘ b: rotate b's translation by a.theta, then add."""
    c, s = math.cos(a.theta), math.sin(a.theta)
    return Pose(
        a.x + c * b.x - s * b.y,
        a.y + s * b.x + c * b.y,
        a.theta + b.theta,
    )


def inverse(a):
    """Return b with compose(a, b) equal to the identity."""
    c, s = math.cos(a.theta), math.sin(a.theta)
    return Pose(-c * a.x - s * a.y, s * a.x - c * a.y, -a.theta)


def compose_arrays(poses, delta):
    """Vectorised composition of (N, 3) poses with (N, 3) or (3,) relative motions."""
    poses = np.asarray(poses, dtype=float)
    delta = np.broadcast_to(np.asarray(delta, dtype=float), poses.shape)
    c, s = np.cos(poses[:, 2]), np.sin(poses[:, 2])
    out = np.empty_like(poses)
    out[:, 0] = poses[:, 0] + c * delta[:, 0] - s * delta[:, 1]
    out[:, 1] = poses[:, 1] + s * delta[:, 0] + c * delta[:, 1]
    out[:, 2] = canonical_angle(poses[:, 2] + delta[:, 2])
    return out


def inverse_arrays(poses):
    """Vectorised inverse of (N, 3) poses."""
    poses = np.asarray(poses, dtype=float)
    c, s = np.cos(poses[:, 2]), np.sin(poses[:, 2])
    out = np.empty_like(poses)
    out[:, 0] = -c * poses[:, 0] - s * poses[:, 1]
    out[:, 1] = s * poses[:, 0] - c * poses[:, 1]
    out[:, 2] = canonical_angle(-poses[:, 2])
    return out


@dataclass(frozen=True)
class GridSpec:
    nx: int
    ny: int
    ntheta: int
    x_min: float = -0.5
    x_max: float = 0.5
    y_min: float = -0.5
    y_max: float = 0.5

    def __post_init__(self):
        for name in ("nx", "ny", "ntheta"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value:
                raise GridError(f"{name} must be an integer, got {value!r}")
            if value < 2:
                raise GridError(f"{name} must be at least 2, got {value}")
            object.__setattr__(self, name, int(value))
        for name in ("x_min", "x_max", "y_min", "y_max"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise GridError(f"{name} must be finite, got {value!r}")
            object.__setattr__(self, name, value)
        if self.x_max <= self.x_min:
            raise GridError(f"x bounds inverted: [{self.x_min}, {self.x_max}]")
        if self.y_max <= self.y_min:
            raise GridError(f"y bounds inverted: [{self.y_min}, {self.y_max}]")

    @property
    def shape(self):
        return (self.nx, self.ny, self.ntheta)

    @property
    def size(self):
        return self.nx * self.ny * self.ntheta

    @property
    def dx(self):
        return (self.x_max - self.x_min) / self.nx

    @property
    def dy(self):
        return (self.y_max - self.y_min) / self.ny

    @property
    def dtheta(self):
        return TWO_PI / self.ntheta

    @property
    def length_x(self):
        return self.x_max - self.x_min

    @property
    def length_y(self):
        return self.y_max - self.y_min

    @property
    def weight(self):
        """Quadrature weight Δx·Δy·Δθ."""
        return self.dx * self.dy * self.dtheta

    @property
    def area(self):
        return self.length_x * self.length_y

    @property
    def volume(self):
        return self.area * TWO_PI

    @property
    def cell_size(self):
        """Largest planar cell edge, the unit used for 'within N cells' checks."""
        return max(self.dx, self.dy)

    def to_dict(self):
        return {
            "nx": self.nx,
            "ny": self.ny,
            "ntheta": self.ntheta,
            "bounds": [self.x_min, self.x_max, self.y_min, self.y_max],
        }

    @classmethod
    def from_dict(cls, data):
        unknown = set(data) - {"nx", "ny", "ntheta", "bounds"}
        if unknown:
            raise GridError(f"Unknown grid keys: {', '.join(sorted(unknown))}")
        try:
            bounds = data.get("bounds", [-0.5, 0.5, -0.5, 0.5])
            if len(bounds) != 4:
                raise GridError("bounds must list x_min, x_max, y_min, y_max")
            return cls(data["nx"], data["ny"], data["ntheta"], *bounds)
        except KeyError as exc:
            raise GridError(f"Missing grid key: {exc.args[0]}") from exc
        except TypeError as exc:
            raise GridError(f"Malformed grid specification: {exc}") from exc


@dataclass(frozen=True)
class PoseGrid:
    """The sample lattice of a GridSpec, in row-major (ix, iy, iθ) order."""

    spec: GridSpec

    @property
    def weight(self):
        return self.spec.weight

    @cached_property
    def xs(self):
        return self.spec.x_min + self.spec.dx * np.arange(self.spec.nx)

    @cached_property
    def ys(self):
        return self.spec.y_min + self.spec.dy * np.arange(self.spec.ny)

    @cached_property
    def thetas(self):
        return self.spec.dtheta * np.arange(self.spec.ntheta)

    @cached_property
    def mesh(self):
        """(X, Y, Θ) arrays of shape (nx, ny, ntheta)."""
        return np.meshgrid(self.xs, self.ys, self.thetas, indexing="ij")

    @cached_property
    def poses(self):
        x, y, t = self.mesh
        return np.stack([x.ravel(), y.ravel(), t.ravel()], axis=1)

    def __len__(self):
        return self.spec.size

    def pose_at(self, index):
        ix, iy, it = np.unravel_index(index, self.spec.shape)
        return Pose(self.xs[ix], self.ys[iy], self.thetas[it])

    def nearest_index(self, x, y, theta):
        """Nearest grid sample (ix, iy, iθ); every axis wraps periodically.

        Accepts scalars or equally shaped arrays.
        """
        spec = self.spec
        ix = np.mod(np.rint((np.asarray(x) - spec.x_min) / spec.dx), spec.nx).astype(int)
        iy = np.mod(np.rint((np.asarray(y) - spec.y_min) / spec.dy), spec.ny).astype(int)
        it = np.mod(np.rint(np.asarray(theta) / spec.dtheta), spec.ntheta).astype(int)
        if ix.ndim == 0:
            return int(ix), int(iy), int(it)
        return ix, iy, it

    def contains(self, x, y, margin=0.0):
        """True when (x, y) lies inside the bounds shrunk by `margin` (box fraction)."""
        spec = self.spec
        mx = margin * spec.length_x
        my = margin * spec.length_y
        return (
            spec.x_min + mx <= x <= spec.x_max - mx
            and spec.y_min + my <= y <= spec.y_max - my
        )


@lru_cache(maxsize=32)
def make_grid(spec):
    """Build the PoseGrid for `spec`.

    Raises:
        GridError: If `spec` is not a GridSpec.
    """
    if not isinstance(spec, GridSpec):
        raise GridError(f"Expected GridSpec, got {type(spec).__name__}")
    return PoseGrid(spec)


@dataclass(frozen=True, eq=False)
class DensityGrid:
    """Real samples of a function on a pose grid, indexed (ix, iy, iθ)."""

    spec: GridSpec
    values: np.ndarray = field(repr=False)
    normalized: bool = False

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != self.spec.shape:
            raise GridError(
                f"Values shape {values.shape} does not match grid {self.spec.shape}"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.normalized:
            if np.any(values < 0.0):
                raise GridError("Normalised density has negative samples")
            total = self.integral()
            if abs(total - 1.0) > _NORMALIZATION_TOLERANCE:
                raise GridError(f"Normalised density integrates to {total!r}")

    def integral(self):
        return float(self.spec.weight * self.values.sum())

    def max(self):
        return float(self.values.max())

    def normalize(self):
        """Return the density rescaled to integrate to one."""
        total = self.integral()
        if not total > 0.0 or not math.isfinite(total):
            raise GridError(f"Cannot normalise a grid with integral {total!r}")
        return DensityGrid(self.spec, self.values / total, normalized=True)

    def require_same_grid(self, other):
        if self.spec != other.spec:
            raise GridError(f"Grid mismatch: {self.spec} vs {other.spec}")


def check_same_grid(a, b):
    """Raise GridError unless the two specs are identical."""
    if a != b:
        raise GridError(f"Grid mismatch: {a} vs {b}")
