"""Synthetic scenarios: the range-only landmark world and the banana demo."""

import logging
import math

import numpy as np

from .config import NoiseConfig
from .datasets import DEFAULT_MARGIN, Dataset, MapFrame, PriorSpec, Step
from .group import GridSpec, Pose, compose, make_grid
from .hef import ControlInput
from .measurements import Landmark, LandmarkMap, Measurement, MeasurementKind

logger = logging.getLogger(__name__)

DEFAULT_GRID = GridSpec(50, 50, 32)


class SimulationError(ValueError):
    """Raised for invalid scenario parameters or trajectories leaving the grid."""


def line_landmarks(n_landmarks, half_span):
    """n landmarks equally spaced on [-half_span, half_span] × {0}, ids 0..n-1."""
    if n_landmarks == 1:
        xs = np.zeros(1)
    else:
        xs = np.linspace(-half_span, half_span, n_landmarks)
    return LandmarkMap(tuple(Landmark(i, float(x), 0.0) for i, x in enumerate(xs)))


def arc_control(radius, angle):
    """Body-frame increment that moves along a counter-clockwise circle by `angle`."""
    return ControlInput(radius * math.sin(angle), radius * (1.0 - math.cos(angle)), angle)


def _check_frame(frame, grid, points, margin):
    pose_grid = make_grid(grid)
    for x, y in points:
        bx, by = frame.to_box(x, y)
        if not pose_grid.contains(bx, by, margin - 1e-9):
            raise SimulationError(
                f"Point ({x:.3f}, {y:.3f}) maps to ({bx:.3f}, {by:.3f}), inside the "
                f"{margin:.0%} grid margin"
            )


def simulate_range_world(
    n_landmarks=10,
    n_steps=100,
    noise=None,
    seed=0,
    *,
    radius=0.3,
    landmark_half_span=0.2,
    loop_steps=None,
    prior_sigma=None,
    grid=DEFAULT_GRID,
    frame=None,
    margin=DEFAULT_MARGIN,
):
    """Drive a counter-clockwise circle around a line of landmarks.

    Each step reports the true arc increment corrupted by Gaussian noise and
    one range reading; landmarks take turns in id order.  With `prior_sigma`
    the dataset carries a Gaussian prior whose centre is drawn around the
    true start, so the start is a draw from that prior.

    Args:
        n_landmarks: Landmarks on the line through the origin.
        n_steps: Number of steps to simulate.
        noise: NoiseConfig with odometry and range standard deviations.
        seed: Seed of the numpy Generator driving every random draw.
        radius: Circle radius in map units; the circle is centred on the origin.
        landmark_half_span: Half length of the landmark segment.
        loop_steps: Steps per full circle; defaults to n_steps.
        prior_sigma: Prior standard deviations (x, y, θ) in map units, or None
            to leave the prior to the filter settings.
        grid: Grid the dataset is meant to be filtered on.
        frame: Fixed MapFrame to check against; a fitted frame is used otherwise.
        margin: Box fraction kept free on every side.

    Returns:
        Dataset

    Raises:
        SimulationError: On invalid counts or a trajectory leaving the margin.
    """
    if n_landmarks < 1:
        raise SimulationError(f"n_landmarks must be at least 1, got {n_landmarks}")
    if n_steps < 1:
        raise SimulationError(f"n_steps must be at least 1, got {n_steps}")
    noise = noise or NoiseConfig()
    loop_steps = loop_steps or n_steps
    rng = np.random.default_rng(seed)
    landmark_map = line_landmarks(n_landmarks, landmark_half_span)
    start = Pose(radius, 0.0, math.pi / 2.0)
    u_true = arc_control(radius, 2.0 * math.pi / loop_steps)
    odometry_sigma = np.array([noise.sigma_trans, noise.sigma_trans, noise.sigma_rot])
    prior = None
    if prior_sigma is not None:
        offset = rng.normal(size=3) * np.asarray(prior_sigma, dtype=float)
        center = Pose(start.x + offset[0], start.y + offset[1], start.theta + offset[2])
        prior = PriorSpec("gaussian", center, tuple(prior_sigma))

    steps = []
    gt = start
    for t in range(1, n_steps + 1):
        gt = compose(gt, Pose(u_true.dx, u_true.dy, u_true.dtheta))
        reported = u_true.as_array() + rng.normal(size=3) * odometry_sigma
        landmark = landmark_map.landmarks[(t - 1) % n_landmarks]
        distance = math.hypot(gt.x - landmark.x, gt.y - landmark.y)
        reading = distance + float(rng.normal()) * noise.sigma_range
        z = Measurement(MeasurementKind.RANGE, reading, noise.sigma_range, landmark.id)
        steps.append(Step(t, ControlInput(*reported), (z,), gt))

    dataset = Dataset(
        landmark_map=landmark_map,
        grid=grid,
        start=start,
        steps=tuple(steps),
        seed=seed,
        meta={
            "generator": "range_world",
            "radius": radius,
            "loop_steps": loop_steps,
            "landmark_half_span": landmark_half_span,
            "noise": {
                "sigma_trans": noise.sigma_trans,
                "sigma_rot": noise.sigma_rot,
                "sigma_range": noise.sigma_range,
            },
        },
        prior=prior,
        frame=frame,
    )
    if frame is not None:
        points = [(lm.x, lm.y) for lm in landmark_map.landmarks]
        points.extend((s.gt.x, s.gt.y) for s in steps)
        _check_frame(frame, grid, points, margin)
    logger.info("Simulated %d steps with %d landmarks (seed %s)", n_steps, n_landmarks, seed)
    return dataset


def banana_scenario(
    n_steps=5,
    sigma_rot=0.2,
    *,
    sigma_trans=0.02,
    step_length=0.1,
    center=(-0.25, 0.0, 0.0),
    half_widths=(0.05, 0.05, 0.1),
    grid=DEFAULT_GRID,
    margin=DEFAULT_MARGIN,
):
    """Identical forward steps from a rectangular prior, no measurements.

    Coordinates are box units (identity frame).  The ground-truth track is
    the noise-free path of the prior's centre.

    Raises:
        SimulationError: If the prior or its displaced copy leaves the margin.
    """
    if n_steps < 0:
        raise SimulationError(f"n_steps cannot be negative, got {n_steps}")
    start = Pose(*center)
    u = ControlInput(step_length, 0.0, 0.0)
    frame = MapFrame.identity()
    corners = []
    end = compose(start, Pose(n_steps * step_length, 0.0, 0.0))
    for pose in (start, end):
        for sx in (-1.0, 1.0):
            for sy in (-1.0, 1.0):
                corners.append((pose.x + sx * half_widths[0], pose.y + sy * half_widths[1]))
    _check_frame(frame, grid, corners, margin)
    steps = []
    gt = start
    for t in range(1, n_steps + 1):
        gt = compose(gt, Pose(u.dx, u.dy, u.dtheta))
        steps.append(Step(t, u, (), gt))
    return Dataset(
        landmark_map=LandmarkMap(()),
        grid=grid,
        start=start,
        steps=tuple(steps),
        meta={
            "generator": "banana",
            "sigma_trans": sigma_trans,
            "sigma_rot": sigma_rot,
        },
        prior=PriorSpec("rectangle", start, tuple(half_widths)),
        frame=frame,
    )
