"""Fourier analysis on S¹ and on a compact patch of SE(2).

The SE(2) transform runs in three stages:

1. a physical 2-D DFT over (x, y) of every θ-slice,
2. resampling of the Cartesian frequency plane onto rings: the lattice is
   partitioned into orbits under the grid rotations R(jΔθ) and each orbit
   carries ntheta ring samples ψ_j = jΔθ (lattice-coincident samples are
   copied, the rest are spline-interpolated),
3. per orbit, a DFT over θ (index m), the phase e^{-imψ}, and a DFT over ψ
   (index n).

With that layout the group convolution reduces to one ntheta×ntheta matrix
product per orbit, with the operands in reversed order.

Synthesis reads a lattice point back as the mean of every ring sample that
lands on it.  On even grids the Nyquist points are reached twice (or four
times at the corner) because rotated frequencies alias; averaging the
conjugate pairs keeps the synthesised function real.
"""

import enum
import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import ndimage, sparse

from .group import TWO_PI, DensityGrid, GridError, GridSpec

logger = logging.getLogger(__name__)

DEFAULT_INTERPOLATION_ORDER = 3

# A rotated lattice point counts as lattice-coincident within this distance
# (in lattice units).
_LATTICE_SNAP = 1e-9

# Imaginary residue allowed on synthesis, relative to the largest real sample.
_REAL_RESIDUE = 1e-6

# Tolerance for conjugate symmetry of S¹ spectra.
_HERMITIAN_TOLERANCE = 1e-10


class SpectrumError(ValueError):
    """Raised for band, role or shape violations in spectral operations."""


class SpectrumRole(enum.Enum):
    LOG_SPACE = "log"
    PROB_SPACE = "prob"


# --- S¹ ---


@dataclass(frozen=True, eq=False)
class S1Spectrum:
    """Coefficients for λ = -B..B, stored at index λ + B."""

    band_limit: int
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        coeffs = np.array(self.coeffs, dtype=complex)
        if coeffs.shape != (2 * self.band_limit + 1,):
            raise SpectrumError(
                f"Expected {2 * self.band_limit + 1} coefficients, got {coeffs.shape}"
            )
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def frequencies(self):
        return np.arange(-self.band_limit, self.band_limit + 1)

    @property
    def degrees_of_freedom(self):
        """Real parameters of a conjugate-symmetric spectrum."""
        return 2 * self.band_limit + 1

    def coeff(self, lam):
        if abs(lam) > self.band_limit:
            return 0j
        return complex(self.coeffs[lam + self.band_limit])

    def is_hermitian(self, tol=_HERMITIAN_TOLERANCE):
        scale = max(1.0, float(np.abs(self.coeffs).max()))
        return bool(np.allclose(self.coeffs, np.conj(self.coeffs[::-1]), atol=tol * scale, rtol=0.0))


def s1_analyze(samples, band_limit):
    """Fourier coefficients of equispaced samples on [0, 2π).

    coeff(λ) = (2π/N)·Σ_k f(θ_k)·e^{-iλθ_k}; frequencies above the band limit
    are dropped.

    Raises:
        SpectrumError: If fewer than 2B+1 samples are given.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 1:
        raise SpectrumError("S¹ samples must be a vector")
    if band_limit < 0:
        raise SpectrumError(f"Band limit must be non-negative, got {band_limit}")
    count = samples.shape[0]
    if count < 2 * band_limit + 1:
        raise SpectrumError(
            f"{count} samples cannot resolve band limit {band_limit} "
            f"(need at least {2 * band_limit + 1})"
        )
    full = np.fft.fft(samples) * (TWO_PI / count)
    lam = np.arange(-band_limit, band_limit + 1)
    return S1Spectrum(band_limit, full[lam % count])


def s1_synthesize(spectrum, thetas):
    """Evaluate f(θ) = (1/2π)·Σ_λ coeff(λ)·e^{iλθ} at arbitrary angles."""
    thetas = np.asarray(thetas, dtype=float)
    basis = np.exp(1j * np.multiply.outer(thetas, spectrum.frequencies))
    values = basis @ spectrum.coeffs / TWO_PI
    if spectrum.is_hermitian():
        residue = float(np.abs(values.imag).max(initial=0.0))
        scale = max(1.0, float(np.abs(values.real).max(initial=0.0)))
        if residue > 1e-9 * scale:
            raise SpectrumError(f"Imaginary residue {residue:.3g} on a symmetric spectrum")
    return values.real


# --- SE(2) ---


@dataclass(frozen=True)
class Bands:
    """Band limits of an SE(2) spectrum.

    n_lambda=None keeps the whole frequency lattice; an integer keeps
    |k| < n_lambda·Δk only.
    """

    n_lambda: int | None
    band_m: int
    band_n: int

    @classmethod
    def for_grid(cls, spec, n_lambda=None, band_m=None, band_n=None):
        half = spec.ntheta // 2
        bands = cls(
            n_lambda,
            half if band_m is None else band_m,
            half if band_n is None else band_n,
        )
        bands.check(spec)
        return bands

    def check(self, spec):
        nyquist = min(spec.nx, spec.ny) / 2
        if self.n_lambda is not None and not 1 <= self.n_lambda <= nyquist:
            raise SpectrumError(
                f"n_lambda={self.n_lambda} exceeds the grid limit {nyquist:g}"
            )
        half = spec.ntheta / 2
        for name in ("band_m", "band_n"):
            value = getattr(self, name)
            if not 0 <= value <= half:
                raise SpectrumError(f"{name}={value} exceeds the grid limit {half:g}")

    def to_dict(self):
        return {"n_lambda": self.n_lambda, "band_m": self.band_m, "band_n": self.band_n}


@dataclass(frozen=True, eq=False)
class Se2Spectrum:
    """Coefficients indexed (λ, m, n): one ntheta×ntheta block per orbit λ."""

    coeffs: np.ndarray = field(repr=False)
    role: SpectrumRole
    grid: GridSpec
    bands: Bands
    interpolation_order: int = DEFAULT_INTERPOLATION_ORDER

    def __post_init__(self):
        coeffs = np.array(self.coeffs, dtype=complex)
        n = self.grid.ntheta
        if coeffs.ndim != 3 or coeffs.shape[1:] != (n, n):
            raise SpectrumError(f"Spectrum shape {coeffs.shape} does not fit ntheta={n}")
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def n_lambda(self):
        return self.bands.n_lambda

    @property
    def band_m(self):
        return self.bands.band_m

    @property
    def band_n(self):
        return self.bands.band_n

    @property
    def n_orbits(self):
        return self.coeffs.shape[0]

    def require_role(self, role):
        if self.role is not role:
            raise SpectrumError(f"Expected a {role.name} spectrum, got {self.role.name}")

    def require_compatible(self, other):
        if self.grid != other.grid:
            raise SpectrumError(f"Grid mismatch: {self.grid} vs {other.grid}")
        if self.bands != other.bands:
            raise SpectrumError(f"Band mismatch: {self.bands} vs {other.bands}")
        if self.coeffs.shape != other.coeffs.shape:
            raise SpectrumError(
                f"Shape mismatch: {self.coeffs.shape} vs {other.coeffs.shape}"
            )

    def with_coeffs(self, coeffs, role=None):
        return Se2Spectrum(
            coeffs,
            self.role if role is None else role,
            self.grid,
            self.bands,
            self.interpolation_order,
        )

    def __add__(self, other):
        if not isinstance(other, Se2Spectrum):
            return NotImplemented
        if self.role is not other.role:
            raise SpectrumError(f"Cannot add {self.role.name} and {other.role.name} spectra")
        self.require_compatible(other)
        return self.with_coeffs(self.coeffs + other.coeffs)

    def scaled(self, factor):
        return self.with_coeffs(self.coeffs * factor)

    def dc(self):
        """The (orbit 0, m=0, n=0) coefficient; orbit 0 is always k = 0."""
        return complex(self.coeffs[0, 0, 0])


class Se2Transform:
    """Precomputed orbit tables for one (grid, bands, interpolation order).

    Instances are immutable once built and can be shared between threads.
    """

    def __init__(self, spec, bands=None, interpolation_order=DEFAULT_INTERPOLATION_ORDER):
        if bands is None:
            bands = Bands.for_grid(spec)
        bands.check(spec)
        if not 0 <= interpolation_order <= 5:
            raise SpectrumError(
                f"Interpolation order must lie in 0..5, got {interpolation_order}"
            )
        self.spec = spec
        self.bands = bands
        self.interpolation_order = int(interpolation_order)
        self._offset_x = _lattice_offset(spec.x_min, spec.dx, "x")
        self._offset_y = _lattice_offset(spec.y_min, spec.dy, "y")
        self._build_plane_tables()
        self._build_orbits()
        self._build_angular_mask()
        logger.debug(
            "Built SE(2) transform for %s: %d orbits over %d lattice points",
            spec.shape,
            self.n_orbits,
            self._kept_flat.size,
        )

    # --- construction ---

    def _build_plane_tables(self):
        spec = self.spec
        self._p = np.rint(np.fft.fftfreq(spec.nx) * spec.nx).astype(int)
        self._q = np.rint(np.fft.fftfreq(spec.ny) * spec.ny).astype(int)
        kx = TWO_PI * self._p / spec.length_x
        ky = TWO_PI * self._q / spec.length_y
        self._kx, self._ky = np.meshgrid(kx, ky, indexing="ij")
        # e^{-i k·t_min}; periodic in the lattice because t_min is a whole
        # number of cells.
        phase_x = np.exp(-2j * np.pi * np.outer(self._p, np.ones(spec.ny)) * self._offset_x / spec.nx)
        phase_y = np.exp(-2j * np.pi * np.outer(np.ones(spec.nx), self._q) * self._offset_y / spec.ny)
        self._phase = phase_x * phase_y
        radius = np.hypot(self._kx, self._ky)
        if self.bands.n_lambda is None:
            kept = np.ones(spec.nx * spec.ny, dtype=bool)
        else:
            step = min(TWO_PI / spec.length_x, TWO_PI / spec.length_y)
            kept = (radius < self.bands.n_lambda * step - 1e-12).ravel()
        self._kept_mask = kept.reshape(spec.nx, spec.ny)
        self._kept_flat = np.flatnonzero(kept)

    def _build_orbits(self):
        spec = self.spec
        n = spec.ntheta
        kept = self._kept_flat
        ip, iq = np.unravel_index(kept, (spec.nx, spec.ny))
        p = self._p[ip].astype(float)
        q = self._q[iq].astype(float)

        angles = spec.dtheta * np.arange(n)
        cos, sin = np.cos(angles), np.sin(angles)
        # Rotate in physical frequency units, then express in lattice units.
        kx = p[:, None] * (TWO_PI / spec.length_x)
        ky = q[:, None] * (TWO_PI / spec.length_y)
        rp = (cos * kx - sin * ky) * (spec.length_x / TWO_PI)
        rq = (sin * kx + cos * ky) * (spec.length_y / TWO_PI)

        snapped_p = np.rint(rp)
        snapped_q = np.rint(rq)
        on_lattice = (np.abs(rp - snapped_p) < _LATTICE_SNAP) & (
            np.abs(rq - snapped_q) < _LATTICE_SNAP
        )
        hit_flat = np.where(
            on_lattice,
            np.mod(snapped_p, spec.nx).astype(int) * spec.ny
            + np.mod(snapped_q, spec.ny).astype(int),
            -1,
        )
        hit_flat = np.where(on_lattice & self._kept_mask.ravel()[np.maximum(hit_flat, 0)], hit_flat, -1)

        position_of = {int(flat): row for row, flat in enumerate(kept)}
        assigned = np.full(kept.size, False)
        orbit_rows = []
        for row in range(kept.size):
            if assigned[row]:
                continue
            orbit_rows.append(row)
            for flat in hit_flat[row]:
                if flat >= 0:
                    assigned[position_of[int(flat)]] = True

        orbit_rows = np.asarray(orbit_rows, dtype=int)
        self.n_orbits = orbit_rows.size
        self.radii = np.hypot(
            p[orbit_rows] * TWO_PI / spec.length_x, q[orbit_rows] * TWO_PI / spec.length_y
        )
        self._ring_p = np.mod(rp[orbit_rows], spec.nx)
        self._ring_q = np.mod(rq[orbit_rows], spec.ny)
        self._ring_hit = hit_flat[orbit_rows]

        exact = self._ring_hit >= 0
        self._exact_index = np.nonzero(exact)
        self._exact_flat = self._ring_hit[exact]
        self._interp_index = np.nonzero(~exact)
        self._interp_coords = np.stack(
            [self._ring_p[~exact], self._ring_q[~exact]], axis=0
        )

        # Ring hit h lands on kept row hit_row[h]; rows reached k times get
        # weight 1/k in the gather.
        self._hit_orbit, self._hit_pos = self._exact_index
        hit_row = np.array([position_of[int(flat)] for flat in self._exact_flat], dtype=int)
        counts = np.bincount(hit_row, minlength=kept.size)
        self._hit_weight = 1.0 / counts[hit_row]
        self._gather = sparse.csr_matrix(
            (self._hit_weight, (hit_row, np.arange(hit_row.size))),
            shape=(kept.size, hit_row.size),
        )
        self._spline_weights = _spline_operator(
            self._interp_coords, (spec.nx, spec.ny), self.interpolation_order
        )

    def _build_angular_mask(self):
        n = self.spec.ntheta
        freq = np.rint(np.fft.fftfreq(n) * n).astype(int)
        keep_m = np.abs(freq) <= self.bands.band_m
        keep_n = np.abs(freq) <= self.bands.band_n
        self._angular_mask = np.outer(keep_m, keep_n)
        self._truncates = not bool(self._angular_mask.all())
        j = np.arange(n)
        self._slice_index = np.mod(j[None, :] - j[:, None], n)
        self._ring_index = np.broadcast_to(j[None, :], (n, n))

    @property
    def lattice_offset(self):
        """Grid index offsets (x_min/Δx, y_min/Δy) of the lower bounds."""
        return self._offset_x, self._offset_y

    # --- planar stage ---

    def plane_spectrum(self, values):
        """Physical 2-D Fourier transform of every slice: ΔxΔy·e^{-ik·t_min}·DFT."""
        values = np.asarray(values)
        spec = self.spec
        if values.shape[:2] != (spec.nx, spec.ny):
            raise SpectrumError(f"Values shape {values.shape} does not fit grid {spec.shape}")
        spectrum = np.fft.fft2(values, axes=(0, 1))
        phase = self._phase.reshape(self._phase.shape + (1,) * (values.ndim - 2))
        return spectrum * (phase * (spec.dx * spec.dy))

    def plane_inverse(self, spectrum):
        """Inverse of plane_spectrum; returns complex samples."""
        spec = self.spec
        phase = self._phase.reshape(self._phase.shape + (1,) * (spectrum.ndim - 2))
        return np.fft.ifft2(spectrum * np.conj(phase) / (spec.dx * spec.dy), axes=(0, 1))

    def sample_orbits(self, plane):
        """Ring samples (n_orbits, ntheta, ...) of a plane spectrum (nx, ny, ...)."""
        spec = self.spec
        trailing = plane.shape[2:]
        flat = plane.reshape(spec.nx * spec.ny, -1)
        samples = np.empty((self.n_orbits, spec.ntheta, flat.shape[1]), dtype=complex)
        samples[self._exact_index] = flat[self._exact_flat]
        if self._spline_weights is not None:
            coeffs = self._spline_coefficients(plane.reshape(spec.nx, spec.ny, -1))
            samples[self._interp_index] = self._spline_weights @ coeffs.reshape(spec.nx * spec.ny, -1)
        return samples.reshape((self.n_orbits, spec.ntheta) + trailing)

    def _spline_coefficients(self, columns):
        order = self.interpolation_order
        if order <= 1:
            return columns
        parts = []
        for part in (columns.real, columns.imag):
            for axis in (0, 1):
                part = ndimage.spline_filter1d(part, order, axis=axis, mode="grid-wrap")
            parts.append(part)
        return parts[0] + 1j * parts[1]

    def rotate_plane(self, plane, steps):
        """Plane spectrum of the slices rotated by steps·Δθ about the origin.

        Returns G with G(k) = F(R(-steps·Δθ)·k) on the kept lattice and zero
        elsewhere, using the same ring sampler as the orbit representation.
        """
        spec = self.spec
        mask = self._kept_mask.reshape(self._kept_mask.shape + (1,) * (plane.ndim - 2))
        samples = self.sample_orbits(np.where(mask, plane, 0.0))
        positions = np.mod(self._hit_pos - steps, spec.ntheta)
        hits = samples[self._hit_orbit, positions].reshape(self._hit_pos.size, -1)
        out = np.zeros((spec.nx * spec.ny, hits.shape[1]), dtype=complex)
        out[self._kept_flat] = self._gather @ hits
        return out.reshape(plane.shape)

    # --- full transform ---

    def analyze(self, values, *, role):
        """Spectrum of a sampled function on the grid.

        Raises:
            SpectrumError: If the values do not match the grid.
        """
        if isinstance(values, DensityGrid):
            if values.spec != self.spec:
                raise SpectrumError(f"Grid mismatch: {values.spec} vs {self.spec}")
            values = values.values
        values = np.asarray(values, dtype=float)
        if values.shape != self.spec.shape:
            raise SpectrumError(f"Values shape {values.shape} does not fit grid {self.spec.shape}")
        if not np.all(np.isfinite(values)):
            raise SpectrumError("Cannot analyse non-finite samples")
        plane = self.plane_spectrum(values)
        plane[~self._kept_mask] = 0.0
        rings = self.sample_orbits(plane)
        # T[o, u, j] = Δθ·A(ψ_j, θ_{j-u})
        blocks = self.spec.dtheta * rings[:, self._ring_index, self._slice_index]
        coeffs = np.fft.ifft(np.fft.fft(blocks, axis=1, norm="ortho"), axis=2, norm="ortho")
        if self._truncates:
            coeffs = coeffs * self._angular_mask
        return Se2Spectrum(coeffs, role, self.spec, self.bands, self.interpolation_order)

    def synthesize_complex(self, spectrum):
        self._require_own(spectrum)
        n = self.spec.ntheta
        blocks = np.fft.fft(np.fft.ifft(spectrum.coeffs, axis=1, norm="ortho"), axis=2, norm="ortho")
        s = np.arange(n)
        rows = np.mod(self._hit_pos[:, None] - s[None, :], n)
        hits = blocks[self._hit_orbit[:, None], rows, self._hit_pos[:, None]]
        plane = np.zeros((self.spec.nx * self.spec.ny, n), dtype=complex)
        plane[self._kept_flat] = (self._gather @ hits) / self.spec.dtheta
        return self.plane_inverse(plane.reshape(self.spec.nx, self.spec.ny, n))

    def synthesize(self, spectrum, *, check_real=True):
        """Sample the function described by `spectrum` on the grid.

        Raises:
            SpectrumError: If check_real is set and the imaginary residue
                exceeds 1e-6 of the largest real sample.
        """
        values = self.synthesize_complex(spectrum)
        if check_real:
            residue = float(np.abs(values.imag).max())
            scale = float(np.abs(values.real).max())
            if residue > _REAL_RESIDUE * scale and residue > 1e-300:
                raise SpectrumError(
                    f"Synthesis left an imaginary residue of {residue:.3g} "
                    f"(max real {scale:.3g})"
                )
        return DensityGrid(self.spec, values.real)

    def convolve(self, ma, mb):
        """Spectrum of p_a ∗ p_b: Mb·Ma per orbit."""
        for spectrum in (ma, mb):
            spectrum.require_role(SpectrumRole.PROB_SPACE)
            self._require_own(spectrum)
        ma.require_compatible(mb)
        return ma.with_coeffs(np.matmul(mb.coeffs, ma.coeffs))

    def basis_function(self, orbit, m, n, x, y, theta):
        """Closed-form synthesis of the unit coefficient at (orbit, m, n).

        U(t, θ) = 1/(2π·|box|) · Σ_j w_j·exp(i(k_j·t + (m - n)ψ_j - mθ)),
        summed over the ring samples of `orbit` that land on the lattice, with
        w_j = 1/(number of ring samples landing on the same point).
        """
        spec = self.spec
        hits = np.flatnonzero(self._hit_orbit == orbit)
        ip, iq = np.unravel_index(self._exact_flat[hits], (spec.nx, spec.ny))
        kx = self._kx[ip, iq]
        ky = self._ky[ip, iq]
        psi = spec.dtheta * self._hit_pos[hits]
        weight = self._hit_weight[hits]
        x, y, theta = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x, y, theta)))
        phase = (
            np.multiply.outer(x, kx)
            + np.multiply.outer(y, ky)
            + (m - n) * psi
            - m * theta[..., None]
        )
        return (weight * np.exp(1j * phase)).sum(axis=-1) / (TWO_PI * spec.area)

    def _require_own(self, spectrum):
        if spectrum.grid != self.spec or spectrum.bands != self.bands:
            raise SpectrumError("Spectrum was produced for a different grid or band set")
        expected = (self.n_orbits, self.spec.ntheta, self.spec.ntheta)
        if spectrum.coeffs.shape != expected:
            raise SpectrumError(f"Spectrum shape {spectrum.coeffs.shape} != {expected}")


def _lattice_offset(lower, step, axis):
    offset = lower / step
    if abs(offset - round(offset)) > 1e-9:
        raise SpectrumError(
            f"The {axis} origin must be a grid sample (lower bound {lower} is "
            f"{offset:g} cells from 0)"
        )
    return int(round(offset))


def _spline_operator(coords, shape, order):
    """Sparse matrix evaluating a periodic B-spline at `coords` (2, N).

    Acts on flattened spline coefficients of an array of `shape`; each row
    holds the (order+1)² tensor-product taps around one coordinate.
    """
    count = coords.shape[1]
    if not count:
        return None
    index_x, weight_x = _axis_taps(coords[0], shape[0], order)
    index_y, weight_y = _axis_taps(coords[1], shape[1], order)
    columns = index_x[:, :, None] * shape[1] + index_y[:, None, :]
    weights = weight_x[:, :, None] * weight_y[:, None, :]
    rows = np.repeat(np.arange(count), columns.shape[1] * columns.shape[2])
    return sparse.csr_matrix(
        (weights.ravel(), (rows, columns.ravel())), shape=(count, shape[0] * shape[1])
    )


def _axis_taps(coords, size, order):
    # Column i is the spline through a unit impulse at i.
    weights = np.stack(
        [
            ndimage.map_coordinates(
                impulse, coords[None, :], order=order, mode="grid-wrap", prefilter=False
            )
            for impulse in np.eye(size)
        ],
        axis=1,
    )
    taps = min(order + 1, size)
    index = np.argpartition(-np.abs(weights), taps - 1, axis=1)[:, :taps]
    return index, np.take_along_axis(weights, index, axis=1)


@lru_cache(maxsize=16)
def get_transform(spec, bands=None, interpolation_order=DEFAULT_INTERPOLATION_ORDER):
    """Shared, cached Se2Transform for a grid and band set."""
    if bands is None:
        bands = Bands.for_grid(spec)
    return Se2Transform(spec, bands, interpolation_order)


def se2_analyze(f, bands=None, *, role=SpectrumRole.LOG_SPACE, interpolation_order=DEFAULT_INTERPOLATION_ORDER):
    if not isinstance(f, DensityGrid):
        raise GridError(f"Expected DensityGrid, got {type(f).__name__}")
    return get_transform(f.spec, bands, interpolation_order).analyze(f, role=role)


def se2_synthesize(spectrum, grid=None, *, check_real=True):
    if grid is not None and grid != spectrum.grid:
        raise SpectrumError(f"Grid mismatch: {grid} vs {spectrum.grid}")
    transform = get_transform(spectrum.grid, spectrum.bands, spectrum.interpolation_order)
    return transform.synthesize(spectrum, check_real=check_real)


def spectral_convolve(ma, mb):
    """F[p_a ∗ p_b] = F[p_b]·F[p_a], orbit by orbit."""
    transform = get_transform(ma.grid, ma.bands, ma.interpolation_order)
    return transform.convolve(ma, mb)


