"""Direct group convolution on the pose grid.

Reference implementation of (a ∗ b)(g) = ∫ a(h)·b(h⁻¹∘g) dh, evaluated one
output sample at a time: every grid pose g is composed with the inverse of
every source pose h and b is read at h⁻¹∘g.  The rotated copies of b come
from the transform's frequency-plane rotation, so the result agrees with the
spectral pipeline to rounding error; cost is O((nx·ny·ntheta)²).
"""

import logging

import numpy as np

from .group import DensityGrid, check_same_grid, compose_arrays, inverse_arrays, make_grid
from .transform import get_transform

logger = logging.getLogger(__name__)


def rotated_copies(transform, values):
    """Table (ntheta, nx, ny, ntheta) of b(R(-θ_h)·t, φ) for every grid turn θ_h."""
    plane = transform.plane_spectrum(values)
    return np.stack(
        [
            transform.plane_inverse(transform.rotate_plane(plane, steps)).real
            for steps in range(transform.spec.ntheta)
        ]
    )


def direct_convolve(a, b, transform=None):
    """Convolve two density grids by direct summation.

    Args:
        a: Left operand (the belief when used for prediction).
        b: Right operand (the relative-motion density).
        transform: Se2Transform whose rotation sampler is used; defaults to
            the shared full-band transform of the grid.

    Returns:
        DensityGrid: The unnormalised convolution samples.
    """
    check_same_grid(a.spec, b.spec)
    spec = a.spec
    if transform is None:
        transform = get_transform(spec)
    offset_x, offset_y = transform.lattice_offset
    table = rotated_copies(transform, b.values)
    grid = make_grid(spec)

    mass = spec.weight * a.values.ravel()
    live = mass != 0.0
    sources = grid.poses[live]
    mass = mass[live]
    inverse_sources = inverse_arrays(sources)
    turn = np.mod(np.rint(sources[:, 2] / spec.dtheta).astype(int), spec.ntheta)
    cos, sin = np.cos(sources[:, 2]), np.sin(sources[:, 2])

    out = np.empty(spec.size)
    for index, pose in enumerate(grid.poses):
        relative = compose_arrays(inverse_sources, pose)
        # t_g - t_h is a lattice displacement; b's rotated copy is stored on it.
        dx = cos * relative[:, 0] - sin * relative[:, 1]
        dy = sin * relative[:, 0] + cos * relative[:, 1]
        ix = np.mod(np.rint(dx / spec.dx).astype(int) - offset_x, spec.nx)
        iy = np.mod(np.rint(dy / spec.dy).astype(int) - offset_y, spec.ny)
        it = np.mod(np.rint(relative[:, 2] / spec.dtheta).astype(int), spec.ntheta)
        out[index] = mass @ table[turn, ix, iy, it]
    logger.debug("Direct convolution over %d sources on %s", mass.size, spec.shape)
    return DensityGrid(spec, out.reshape(spec.shape))
