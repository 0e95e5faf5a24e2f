"""Replayable datasets: JSON-lines files, map↔box rescaling and prior shapes.

A dataset file holds one header object followed by one object per step:

    {"format": "hef-dataset", "version": 1, "map": {...}, "grid": {...},
     "start": {"x", "y", "theta"}, "seed": int|null, "meta": {...},
     "prior"?: {...}, "frame"?: {...}}
    {"t": 1, "u": {"dx", "dy", "dtheta"}, "z": [{kind, value, sigma, landmark_id?}],
     "gt": {"x", "y", "theta"}}

Coordinates are map units; filters run on the box the map is rescaled into.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from .group import DensityGrid, GridError, GridSpec, Pose, make_grid, wrap_angle
from .hef import ControlInput, MotionModelError
from .measurements import LandmarkMap, Measurement, MeasurementError, MeasurementKind
from .serialization import atomic_write_text

logger = logging.getLogger(__name__)

FORMAT = "hef-dataset"
VERSION = 1

# Share of the box kept free on each side when fitting a map frame.
DEFAULT_MARGIN = 0.1

_HEADER_REQUIRED = {"format", "version", "map", "grid", "start"}
_HEADER_OPTIONAL = {"seed", "meta", "prior", "frame"}
_STEP_KEYS = {"t", "u", "z", "gt"}


class DatasetError(ValueError):
    """Raised for schema violations; `line` is 1-based when known."""

    def __init__(self, message, *, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass(frozen=True)
class MapFrame:
    """Isotropic affine map: box = (map - c)·scale + box_centre."""

    scale: float
    cx: float
    cy: float
    bx: float = 0.0
    by: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.scale) and self.scale > 0.0):
            raise DatasetError(f"Frame scale must be positive, got {self.scale!r}")

    @classmethod
    def identity(cls):
        return cls(1.0, 0.0, 0.0)

    @classmethod
    def fit(cls, points, spec, margin=DEFAULT_MARGIN):
        """Frame placing every (x, y) point inside the box shrunk by `margin`."""
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        lo = points.min(axis=0)
        hi = points.max(axis=0)
        centre = 0.5 * (lo + hi)
        extent = float((hi - lo).max())
        usable = (1.0 - 2.0 * margin) * min(spec.length_x, spec.length_y)
        scale = usable / extent if extent > 0.0 else 1.0
        return cls(
            scale,
            float(centre[0]),
            float(centre[1]),
            0.5 * (spec.x_min + spec.x_max),
            0.5 * (spec.y_min + spec.y_max),
        )

    def to_box(self, x, y):
        return (x - self.cx) * self.scale + self.bx, (y - self.cy) * self.scale + self.by

    def to_map(self, x, y):
        return (x - self.bx) / self.scale + self.cx, (y - self.by) / self.scale + self.cy

    def pose_to_box(self, pose):
        return Pose(*self.to_box(pose.x, pose.y), pose.theta)

    def pose_to_map(self, pose):
        return Pose(*self.to_map(pose.x, pose.y), pose.theta)

    def control_to_box(self, u):
        return u.scaled(self.scale)

    def measurement_to_box(self, z):
        if z.kind is MeasurementKind.RANGE:
            return Measurement(z.kind, z.value * self.scale, z.sigma * self.scale, z.landmark_id)
        return z

    def to_dict(self):
        return {"scale": self.scale, "cx": self.cx, "cy": self.cy, "bx": self.bx, "by": self.by}

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


@dataclass(frozen=True)
class PriorSpec:
    """Initial belief shape: a Gaussian or a soft-edged rectangle around `center`.

    `spread` holds standard deviations (Gaussian) or half-widths (rectangle)
    for x, y and θ.
    """

    kind: str
    center: Pose
    spread: tuple

    def __post_init__(self):
        if self.kind not in ("gaussian", "rectangle"):
            raise DatasetError(f"Unknown prior kind {self.kind!r}")
        spread = tuple(float(v) for v in self.spread)
        if len(spread) != 3 or not all(math.isfinite(v) and v > 0.0 for v in spread):
            raise DatasetError(f"Prior spread must be three positive numbers, got {self.spread!r}")
        object.__setattr__(self, "spread", spread)

    def to_box(self, frame):
        sx, sy, st = self.spread
        return PriorSpec(self.kind, frame.pose_to_box(self.center), (sx * frame.scale, sy * frame.scale, st))

    def density(self, spec):
        """Normalised prior samples on the grid (box units)."""
        x, y, theta = make_grid(spec).mesh
        offsets = (x - self.center.x, y - self.center.y, wrap_angle(theta - self.center.theta))
        if self.kind == "gaussian":
            log_values = sum(-0.5 * (d / s) ** 2 for d, s in zip(offsets, self.spread))
            values = np.exp(log_values - log_values.max())
        else:
            # Logistic edges one cell wide.
            cells = (spec.dx, spec.dy, spec.dtheta)
            values = np.ones(spec.shape)
            for d, half, cell in zip(offsets, self.spread, cells):
                values = values * expit((half - np.abs(d)) / cell)
        return DensityGrid(spec, values).normalize()

    def to_dict(self):
        return {"kind": self.kind, "center": self.center.to_dict(), "spread": list(self.spread)}

    @classmethod
    def from_dict(cls, data):
        return cls(data["kind"], Pose.from_dict(data["center"]), tuple(data["spread"]))


@dataclass(frozen=True)
class Step:
    t: int
    u: ControlInput
    z: tuple
    gt: Pose

    def to_dict(self):
        return {
            "t": self.t,
            "u": self.u.to_dict(),
            "z": [m.to_dict() for m in self.z],
            "gt": self.gt.to_dict(),
        }


@dataclass(frozen=True, eq=False)
class Dataset:
    landmark_map: LandmarkMap
    grid: GridSpec
    start: Pose
    steps: tuple
    seed: int | None = None
    meta: dict = field(default_factory=dict)
    prior: PriorSpec | None = None
    frame: MapFrame | None = None

    def __len__(self):
        return len(self.steps)

    def fitted_frame(self, margin=DEFAULT_MARGIN):
        """The stored frame, or one fitted to landmarks, start and ground truth."""
        if self.frame is not None:
            return self.frame
        points = [(self.start.x, self.start.y)]
        points.extend((lm.x, lm.y) for lm in self.landmark_map.landmarks)
        points.extend((s.gt.x, s.gt.y) for s in self.steps)
        return MapFrame.fit(points, self.grid, margin)

    def check_inside(self, frame, margin=DEFAULT_MARGIN):
        """Raise DatasetError if a ground-truth pose falls inside the margin band."""
        grid = make_grid(self.grid)
        # Points placed exactly on the margin by MapFrame.fit must pass.
        slack = margin - 1e-9
        for s in self.steps:
            gt = frame.pose_to_box(s.gt)
            if not grid.contains(gt.x, gt.y, slack):
                raise DatasetError(
                    f"Ground truth at t={s.t} ({gt.x:.3f}, {gt.y:.3f}) leaves the "
                    f"{margin:.0%} grid margin"
                )

    def header(self):
        data = {
            "format": FORMAT,
            "version": VERSION,
            "map": self.landmark_map.to_dict(),
            "grid": self.grid.to_dict(),
            "start": self.start.to_dict(),
            "seed": self.seed,
            "meta": self.meta,
        }
        if self.prior is not None:
            data["prior"] = self.prior.to_dict()
        if self.frame is not None:
            data["frame"] = self.frame.to_dict()
        return data


# --- JSON-lines I/O ---


def _reject_constant(name):
    raise ValueError(f"non-finite number {name}")


def _dumps(data):
    return json.dumps(data, allow_nan=False, separators=(",", ":"))


def dataset_to_text(dataset):
    if not dataset.steps:
        raise DatasetError("A dataset needs at least one step")
    lines = [_dumps(dataset.header())]
    lines.extend(_dumps(s.to_dict()) for s in dataset.steps)
    return "\n".join(lines) + "\n"


def save_dataset(dataset, path):
    """Write `dataset` atomically as JSON lines."""
    atomic_write_text(path, dataset_to_text(dataset))
    logger.info("Wrote dataset with %d steps to %s", len(dataset), path)


def _check_keys(data, required, optional, what, line):
    if not isinstance(data, dict):
        raise DatasetError(f"{what} must be a JSON object", line=line)
    missing = required - set(data)
    if missing:
        raise DatasetError(f"{what} is missing {', '.join(sorted(missing))}", line=line)
    unknown = set(data) - required - optional
    if unknown:
        raise DatasetError(f"{what} has unknown fields {', '.join(sorted(unknown))}", line=line)


def _parse_header(data, base_dir):
    _check_keys(data, _HEADER_REQUIRED, _HEADER_OPTIONAL, "Header", 1)
    if data["format"] != FORMAT:
        raise DatasetError(f"Unknown format {data['format']!r}", line=1)
    if data["version"] != VERSION:
        raise DatasetError(f"Unsupported version {data['version']!r}", line=1)
    seed = data.get("seed")
    if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int)):
        raise DatasetError(f"seed must be an integer or null, got {seed!r}", line=1)
    try:
        return {
            "landmark_map": LandmarkMap.from_dict(data["map"], base_dir),
            "grid": GridSpec.from_dict(data["grid"]),
            "start": _parse_pose(data["start"]),
            "seed": seed,
            "meta": data.get("meta") or {},
            "prior": PriorSpec.from_dict(data["prior"]) if "prior" in data else None,
            "frame": MapFrame.from_dict(data["frame"]) if "frame" in data else None,
        }
    except DatasetError as exc:
        raise DatasetError(str(exc), line=1) from exc
    except (MeasurementError, GridError, KeyError, TypeError, ValueError) as exc:
        raise DatasetError(f"Malformed header: {exc}", line=1) from exc


def _parse_pose(data):
    if not isinstance(data, dict) or set(data) != {"x", "y", "theta"}:
        raise ValueError("pose must have exactly x, y, theta")
    return Pose.from_dict(data)


def _parse_step(data, line, expected_t):
    _check_keys(data, _STEP_KEYS, set(), "Step", line)
    t = data["t"]
    if isinstance(t, bool) or not isinstance(t, int) or t != expected_t:
        raise DatasetError(f"Expected t={expected_t}, got {t!r}", line=line)
    try:
        u = data["u"]
        if not isinstance(u, dict) or set(u) != {"dx", "dy", "dtheta"}:
            raise ValueError("u must have exactly dx, dy, dtheta")
        if not isinstance(data["z"], list):
            raise ValueError("z must be a list")
        return Step(
            t,
            ControlInput.from_dict(u),
            tuple(Measurement.from_dict(m) for m in data["z"]),
            _parse_pose(data["gt"]),
        )
    except (MeasurementError, MotionModelError, TypeError, ValueError) as exc:
        raise DatasetError(f"Malformed step: {exc}", line=line) from exc


def parse_dataset(lines, base_dir=None):
    """Build a Dataset from an iterable of JSON lines.

    Raises:
        DatasetError: Naming the offending line.
    """
    header = None
    steps = []
    line_no = 0
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            raise DatasetError("Blank line", line=line_no)
        try:
            data = json.loads(line, parse_constant=_reject_constant)
        except ValueError as exc:
            raise DatasetError(f"Invalid JSON: {exc}", line=line_no) from exc
        if header is None:
            header = _parse_header(data, base_dir)
        else:
            steps.append(_parse_step(data, line_no, len(steps) + 1))
    if header is None:
        raise DatasetError("Empty dataset file", line=1)
    if not steps:
        raise DatasetError("Dataset has no steps", line=line_no + 1)
    return Dataset(steps=tuple(steps), **header)


def load_dataset(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DatasetError(f"Could not read dataset {path}: {exc}") from exc
    return parse_dataset(text.splitlines(), base_dir=path.parent)
