"""Range and bearing likelihood fields, landmark maps and greedy association."""

import enum
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from .distribution import DENSITY_FLOOR, HarmonicExpDist, evaluate, floor_log_field
from .group import DensityGrid, make_grid, wrap_angle
from .serialization import SerializationError, read_array

logger = logging.getLogger(__name__)

# Association scores closer than this (in log units) count as a tie.
_TIE_TOLERANCE = 1e-9


class MeasurementError(ValueError):
    """Raised for malformed measurements, unknown landmarks or bad masks."""


@dataclass(frozen=True)
class Landmark:
    id: int
    x: float
    y: float

    def to_dict(self):
        return {"id": self.id, "x": self.x, "y": self.y}


@dataclass(frozen=True, eq=False)
class LandmarkMap:
    """Landmarks by id plus an optional (nx, ny) free-space mask."""

    landmarks: tuple
    free_space_mask: np.ndarray | None = field(default=None, repr=False)
    mask_path: str | None = None

    def __post_init__(self):
        landmarks = tuple(
            lm if isinstance(lm, Landmark) else Landmark(int(lm[0]), float(lm[1]), float(lm[2]))
            for lm in self.landmarks
        )
        ids = [lm.id for lm in landmarks]
        if len(set(ids)) != len(ids):
            raise MeasurementError(f"Landmark ids must be unique, got {ids}")
        for lm in landmarks:
            if not (math.isfinite(lm.x) and math.isfinite(lm.y)):
                raise MeasurementError(f"Landmark {lm.id} has non-finite coordinates")
        object.__setattr__(self, "landmarks", landmarks)
        if self.free_space_mask is not None:
            mask = np.array(self.free_space_mask, dtype=bool)
            if mask.ndim != 2:
                raise MeasurementError(f"Free-space mask must be 2-D, got shape {mask.shape}")
            mask.setflags(write=False)
            object.__setattr__(self, "free_space_mask", mask)

    def __len__(self):
        return len(self.landmarks)

    @property
    def ids(self):
        return sorted(lm.id for lm in self.landmarks)

    def get(self, landmark_id):
        for lm in self.landmarks:
            if lm.id == landmark_id:
                return lm
        raise MeasurementError(f"Unknown landmark id {landmark_id}")

    def transformed(self, to_box):
        """Map with every landmark passed through `to_box(x, y)`."""
        moved = tuple(Landmark(lm.id, *to_box(lm.x, lm.y)) for lm in self.landmarks)
        return LandmarkMap(moved, self.free_space_mask, self.mask_path)

    def to_dict(self):
        data = {"landmarks": [lm.to_dict() for lm in self.landmarks]}
        if self.mask_path is not None:
            data["mask"] = self.mask_path
        return data

    @classmethod
    def from_dict(cls, data, base_dir=None):
        """Build a map from {landmarks: [{id, x, y}], mask?: path}.

        Raises:
            MeasurementError: On unknown keys, malformed entries or an unreadable mask.
        """
        if not isinstance(data, dict):
            raise MeasurementError("Landmark map must be a JSON object")
        unknown = set(data) - {"landmarks", "mask"}
        if unknown:
            raise MeasurementError(f"Unknown map keys: {', '.join(sorted(unknown))}")
        entries = data.get("landmarks", [])
        landmarks = []
        for position, entry in enumerate(entries):
            if not isinstance(entry, dict) or set(entry) != {"id", "x", "y"}:
                raise MeasurementError(f"Landmark #{position} must have exactly id, x, y")
            if isinstance(entry["id"], bool) or not isinstance(entry["id"], int):
                raise MeasurementError(f"Landmark #{position} id must be an integer")
            landmarks.append(Landmark(entry["id"], float(entry["x"]), float(entry["y"])))
        mask = None
        mask_path = data.get("mask")
        if mask_path is not None:
            path = Path(mask_path)
            if base_dir is not None and not path.is_absolute():
                path = Path(base_dir) / path
            try:
                mask = read_array(path) != 0.0
            except (OSError, SerializationError) as exc:
                raise MeasurementError(f"Could not read free-space mask {path}: {exc}") from exc
        return cls(tuple(landmarks), mask, mask_path)

    @classmethod
    def load(cls, path):
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise MeasurementError(f"Could not read landmark map {path}: {exc}") from exc
        return cls.from_dict(data, base_dir=path.parent)


class MeasurementKind(enum.Enum):
    RANGE = "range"
    BEARING = "bearing"


@dataclass(frozen=True)
class Measurement:
    kind: MeasurementKind
    value: float
    sigma: float
    landmark_id: int | None = None

    def __post_init__(self):
        kind = self.kind
        if not isinstance(kind, MeasurementKind):
            try:
                kind = MeasurementKind(kind)
            except ValueError as exc:
                raise MeasurementError(f"Unknown measurement kind {kind!r}") from exc
            object.__setattr__(self, "kind", kind)
        value = float(self.value)
        sigma = float(self.sigma)
        if not math.isfinite(value):
            raise MeasurementError(f"Measurement value must be finite, got {value!r}")
        if not (math.isfinite(sigma) and sigma > 0.0):
            raise MeasurementError(f"Measurement sigma must be positive, got {sigma!r}")
        if kind is MeasurementKind.BEARING:
            value = wrap_angle(value)
        object.__setattr__(self, "value", value)
        object.__setattr__(self, "sigma", sigma)

    def with_landmark(self, landmark_id):
        return Measurement(self.kind, self.value, self.sigma, landmark_id)

    def to_dict(self):
        data = {"kind": self.kind.value, "value": self.value, "sigma": self.sigma}
        if self.landmark_id is not None:
            data["landmark_id"] = self.landmark_id
        return data

    @classmethod
    def from_dict(cls, data):
        unknown = set(data) - {"kind", "value", "sigma", "landmark_id"}
        if unknown:
            raise MeasurementError(f"Unknown measurement keys: {', '.join(sorted(unknown))}")
        try:
            landmark_id = data.get("landmark_id")
            if landmark_id is not None and (
                isinstance(landmark_id, bool) or not isinstance(landmark_id, int)
            ):
                raise MeasurementError(f"landmark_id must be an integer, got {landmark_id!r}")
            return cls(data["kind"], data["value"], data["sigma"], landmark_id)
        except MeasurementError:
            raise
        except KeyError as exc:
            raise MeasurementError(f"Missing measurement key: {exc.args[0]}") from exc
        except (TypeError, ValueError) as exc:
            raise MeasurementError(f"Malformed measurement: {exc}") from exc


# --- Log-likelihood models ---


def _range_field(landmark, z, x, y):
    distance = np.hypot(x - landmark.x, y - landmark.y)
    return -((distance - z.value) ** 2) / (2.0 * z.sigma**2)


def _bearing_field(landmark, z, x, y, theta):
    expected = np.arctan2(landmark.y - y, landmark.x - x) - theta
    return -(wrap_angle(expected - z.value) ** 2) / (2.0 * z.sigma**2)


def _resolve(landmark_map, z):
    if z.landmark_id is None:
        raise MeasurementError(f"{z.kind.value} measurement has no landmark id; associate it first")
    return landmark_map.get(z.landmark_id)


def _check_mask(landmark_map, spec):
    mask = landmark_map.free_space_mask
    if mask is not None and mask.shape != (spec.nx, spec.ny):
        raise MeasurementError(
            f"Free-space mask shape {mask.shape} is not aligned with grid ({spec.nx}, {spec.ny})"
        )
    return mask


def range_loglik(landmark_map, z, spec):
    """Ring-shaped log-likelihood around the measured landmark, constant in θ.

    Raises:
        MeasurementError: If the landmark id is missing or unknown.
    """
    if z.kind is not MeasurementKind.RANGE:
        raise MeasurementError(f"Expected a range measurement, got {z.kind.value}")
    landmark = _resolve(landmark_map, z)
    grid = make_grid(spec)
    x, y = np.meshgrid(grid.xs, grid.ys, indexing="ij")
    plane = floor_log_field(_range_field(landmark, z, x, y))
    values = np.broadcast_to(plane[:, :, None], spec.shape)
    return DensityGrid(spec, values)


def bearing_loglik(landmark_map, z, spec):
    """Heading-dependent bearing log-likelihood, gated by the free-space mask.

    Raises:
        MeasurementError: If the landmark is unresolved or the mask does not
            match the grid's (nx, ny) plane.
    """
    if z.kind is not MeasurementKind.BEARING:
        raise MeasurementError(f"Expected a bearing measurement, got {z.kind.value}")
    landmark = _resolve(landmark_map, z)
    mask = _check_mask(landmark_map, spec)
    x, y, theta = make_grid(spec).mesh
    raw = _bearing_field(landmark, z, x, y, theta)
    if mask is None:
        return DensityGrid(spec, floor_log_field(raw))
    free = np.broadcast_to(mask[:, :, None], spec.shape)
    if not free.any():
        logger.warning("Free-space mask is all false; bearing likelihood is uniform")
        return DensityGrid(spec, np.zeros(spec.shape))
    floor = raw[free].max() + math.log(DENSITY_FLOOR)
    values = np.where(free, np.maximum(raw, floor), floor)
    return DensityGrid(spec, values)


def measurement_loglik(landmark_map, z, spec):
    if z.kind is MeasurementKind.RANGE:
        return range_loglik(landmark_map, z, spec)
    return bearing_loglik(landmark_map, z, spec)


def pose_loglik(landmark_map, z, poses, spec=None):
    """Log-likelihood of `z` at arbitrary (N, 3) poses.

    Values are floored like the grid fields; when `spec` is given and the map
    carries a free-space mask, poses in occupied cells get the floor value.
    """
    landmark = _resolve(landmark_map, z)
    poses = np.atleast_2d(np.asarray(poses, dtype=float))
    x, y, theta = poses[:, 0], poses[:, 1], poses[:, 2]
    if z.kind is MeasurementKind.RANGE:
        raw = _range_field(landmark, z, x, y)
    else:
        raw = _bearing_field(landmark, z, x, y, theta)
    values = floor_log_field(raw)
    if spec is not None and z.kind is MeasurementKind.BEARING:
        mask = _check_mask(landmark_map, spec)
        if mask is not None:
            ix, iy, _ = make_grid(spec).nearest_index(x, y, theta)
            values = np.where(mask[ix, iy], values, values.max() + math.log(DENSITY_FLOOR))
    return values


# --- Greedy association ---


def _pick_best(scores):
    best_id, best = None, -math.inf
    for landmark_id in sorted(scores):
        score = scores[landmark_id]
        if best_id is None or score > best + _TIE_TOLERANCE:
            best_id, best = landmark_id, score
    return best_id


def _require_landmarks(landmark_map):
    if len(landmark_map) == 0:
        raise MeasurementError("Cannot associate against an empty landmark map")


def associate_greedy(landmark_map, z, bel):
    """Landmark id maximising the expected likelihood of `z` under `bel`.

    Args:
        landmark_map: Candidate landmarks.
        z: Measurement, its landmark_id is ignored.
        bel: HarmonicExpDist or DensityGrid belief.

    Returns:
        int: The chosen id; the lowest id wins ties.

    Raises:
        MeasurementError: If the map is empty.
    """
    _require_landmarks(landmark_map)
    density = evaluate(bel) if isinstance(bel, HarmonicExpDist) else bel
    spec = density.spec
    weights = density.values.ravel()
    scores = {}
    for landmark_id in landmark_map.ids:
        candidate = z.with_landmark(landmark_id)
        log_field = measurement_loglik(landmark_map, candidate, spec).values.ravel()
        scores[landmark_id] = float(logsumexp(log_field, b=weights))
    return _pick_best(scores)


def associate_weighted(landmark_map, z, poses, weights, spec=None):
    """Greedy association under a weighted set of poses (particles or a point)."""
    _require_landmarks(landmark_map)
    weights = np.asarray(weights, dtype=float)
    scores = {}
    for landmark_id in landmark_map.ids:
        log_lik = pose_loglik(landmark_map, z.with_landmark(landmark_id), poses, spec)
        scores[landmark_id] = float(logsumexp(log_lik, b=weights))
    return _pick_best(scores)


def resolve_measurements(landmark_map, measurements, associate):
    """Fill missing landmark ids with `associate(z)`; known ids pass through."""
    resolved = []
    for z in measurements:
        if z.landmark_id is None:
            landmark_id = associate(z)
            logger.debug("Associated %s measurement %.4f with landmark %d", z.kind.value, z.value, landmark_id)
            z = z.with_landmark(landmark_id)
        resolved.append(z)
    return resolved


def total_loglik(landmark_map, measurements, spec):
    """Sum of the measurement fields; zeros when there are none."""
    total = np.zeros(spec.shape)
    for z in measurements:
        total += measurement_loglik(landmark_map, z, spec).values
    return DensityGrid(spec, total)
