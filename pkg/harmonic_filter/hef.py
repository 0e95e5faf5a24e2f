"""The harmonic exponential Bayes filter.

Prediction convolves the belief with the relative-motion density in
PROB_SPACE; updates add the natural parameters of the measurement
log-likelihoods to the predicted belief.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from .distribution import (
    DENSITY_FLOOR,
    DistributionError,
    HarmonicExpDist,
    convolve,
    entropy,
    evaluate,
    fit_from_log_density,
    mean_pose,
    mode_pose,
)
from .group import DensityGrid, make_grid, wrap_angle
from .measurements import associate_greedy, resolve_measurements, total_loglik
from .metrics import nll_at
from .transform import DEFAULT_INTERPOLATION_ORDER, SpectrumError, SpectrumRole

logger = logging.getLogger(__name__)

# Motion kernels must keep this many standard deviations inside the box.
_MOTION_SUPPORT_SIGMAS = 3.0


class FilterError(RuntimeError):
    """Raised when a filter step cannot be carried out."""

    def __init__(self, message, *, step=None):
        super().__init__(message)
        self.step = step


class MotionModelError(ValueError):
    """Raised for invalid motion parameters or motions the grid cannot hold."""


@dataclass(frozen=True)
class DiffDriveModel:
    sigma_trans: float
    sigma_rot: float

    def __post_init__(self):
        for name in ("sigma_trans", "sigma_rot"):
            value = float(getattr(self, name))
            if not (math.isfinite(value) and value > 0.0):
                raise MotionModelError(f"{name} must be positive, got {value!r}")
            object.__setattr__(self, name, value)

    def scaled(self, factor):
        """Same model with the translational noise expressed in other units."""
        return DiffDriveModel(self.sigma_trans * factor, self.sigma_rot)


@dataclass(frozen=True)
class ControlInput:
    """Commanded relative motion in the body frame."""

    dx: float
    dy: float
    dtheta: float

    def __post_init__(self):
        for name in ("dx", "dy", "dtheta"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise MotionModelError(f"Control {name} must be finite, got {value!r}")
            object.__setattr__(self, name, value)

    def as_array(self):
        return np.array([self.dx, self.dy, self.dtheta])

    def scaled(self, factor):
        return ControlInput(self.dx * factor, self.dy * factor, self.dtheta)

    def to_dict(self):
        return {"dx": self.dx, "dy": self.dy, "dtheta": self.dtheta}

    @classmethod
    def from_dict(cls, data):
        return cls(data["dx"], data["dy"], data["dtheta"])


def motion_log_density(model, u, spec):
    """Floored Gaussian log-density over relative poses, centred on u.

    Raises:
        MotionModelError: If u plus 3σ does not fit inside the box.
    """
    reach = _MOTION_SUPPORT_SIGMAS * model.sigma_trans
    for axis, shift, lower, upper in (
        ("x", u.dx, spec.x_min, spec.x_max),
        ("y", u.dy, spec.y_min, spec.y_max),
    ):
        if shift - reach <= lower or shift + reach >= upper:
            raise MotionModelError(
                f"Motion {axis}={shift:g} ± {reach:g} leaves the grid [{lower:g}, {upper:g}]"
            )
    x, y, theta = make_grid(spec).mesh
    values = -((x - u.dx) ** 2 + (y - u.dy) ** 2) / (2.0 * model.sigma_trans**2)
    values = values - wrap_angle(theta - u.dtheta) ** 2 / (2.0 * model.sigma_rot**2)
    values = np.maximum(values, values.max() + math.log(DENSITY_FLOOR))
    return DensityGrid(spec, values)


def motion_density(model, u, spec, bands=None, interpolation_order=DEFAULT_INTERPOLATION_ORDER):
    """p(x_{t-1}⁻¹ ∘ x_t | u) as a harmonic exponential distribution."""
    return fit_from_log_density(motion_log_density(model, u, spec), bands, interpolation_order)


def predict(bel_prev, motion):
    """Predicted belief; its spectrum is F[p_u]·F[bel_prev] per orbit.

    Raises:
        FilterError: On grid or band mismatch.
    """
    try:
        return convolve(bel_prev, motion)
    except DistributionError as exc:
        raise FilterError(f"Prediction failed: {exc}") from exc


def update(bel_pred, log_lik):
    """Posterior with natural parameters η_pred + F[log_lik].

    Raises:
        FilterError: If the likelihood is non-finite or on another grid.
    """
    if log_lik.spec != bel_pred.grid:
        raise FilterError(f"Likelihood grid {log_lik.spec} does not match belief grid {bel_pred.grid}")
    if not np.all(np.isfinite(log_lik.values)):
        raise FilterError("Log-likelihood has non-finite samples")
    try:
        eta_lik = bel_pred.transform.analyze(log_lik, role=SpectrumRole.LOG_SPACE)
        return HarmonicExpDist.from_eta(bel_pred.eta + eta_lik)
    except SpectrumError as exc:
        raise FilterError(f"Update failed: {exc}") from exc


@dataclass(frozen=True)
class StepDiagnostics:
    t: int
    mode: object
    mean: object
    log_z: float
    entropy: float
    nll_gt: float | None = None
    orientation_defined: bool = True

    def to_dict(self):
        data = {
            "t": self.t,
            "mode": self.mode.to_dict(),
            "mean": self.mean.to_dict(),
            "log_z": self.log_z,
            "entropy": self.entropy,
        }
        if self.nll_gt is not None:
            data["nll_gt"] = self.nll_gt
        if not self.orientation_defined:
            data["orientation_defined"] = False
        return data


def diagnose(t, belief, gt=None):
    estimate = mean_pose(belief)
    density = evaluate(belief)
    return StepDiagnostics(
        t=t,
        mode=mode_pose(belief),
        mean=estimate.pose,
        log_z=belief.log_z,
        entropy=entropy(density),
        nll_gt=None if gt is None else nll_at(density, gt),
        orientation_defined=estimate.orientation_defined,
    )


def step(bel_prev, u, measurements, *, model, landmark_map=None):
    """One predict/update cycle.

    Measurements without a landmark id are associated greedily under the
    predicted belief; every field is summed before the single update.

    Returns:
        HarmonicExpDist: The posterior belief.
    """
    motion = motion_density(
        model, u, bel_prev.grid, bel_prev.bands, bel_prev.eta.interpolation_order
    )
    bel_pred = predict(bel_prev, motion)
    if not measurements:
        return bel_pred
    if landmark_map is None:
        raise FilterError("Measurements given without a landmark map")
    resolved = resolve_measurements(
        landmark_map, measurements, lambda z: associate_greedy(landmark_map, z, bel_pred)
    )
    return update(bel_pred, total_loglik(landmark_map, resolved, bel_pred.grid))


class HarmonicFilter:
    """Stateful wrapper: one belief evolving step by step, with diagnostics."""

    name = "hef"

    def __init__(self, prior, model, landmark_map=None):
        self.belief = prior
        self.model = model
        self.landmark_map = landmark_map
        self.t = 0
        self.history = []

    @property
    def grid(self):
        return self.belief.grid

    def step(self, u, measurements=(), gt=None):
        """Advance the belief by one control and its measurements.

        Raises:
            FilterError: Annotated with the step index on any failure.
        """
        t = self.t + 1
        try:
            self.belief = step(
                self.belief, u, list(measurements), model=self.model, landmark_map=self.landmark_map
            )
        except (FilterError, ValueError) as exc:
            raise FilterError(f"Step {t}: {exc}", step=t) from exc
        self.t = t
        diagnostics = diagnose(t, self.belief, gt)
        self.history.append(diagnostics)
        logger.debug(
            "hef t=%d log_z=%.4f entropy=%.4f mode=(%.3f, %.3f, %.3f)",
            t,
            diagnostics.log_z,
            diagnostics.entropy,
            diagnostics.mode.x,
            diagnostics.mode.y,
            diagnostics.mode.theta,
        )
        return diagnostics

    def mode(self):
        return mode_pose(self.belief)

    def mean(self):
        return mean_pose(self.belief).pose

    def density(self):
        return evaluate(self.belief)
