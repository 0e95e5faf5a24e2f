"""Absolute trajectory error and ground-truth negative log-likelihood."""

import math
from dataclasses import dataclass

import numpy as np

from .distribution import DENSITY_FLOOR
from .group import make_grid

# Beliefs fed to the metrics must integrate to one within this tolerance.
_NORMALIZATION_TOLERANCE = 1e-6


class MetricsError(ValueError):
    """Raised for mismatched run logs, datasets and beliefs."""


@dataclass(frozen=True)
class StepEstimate:
    """Point estimates of one filter step, in box units."""

    t: int
    mode: object
    mean: object


@dataclass(frozen=True)
class MetricsReport:
    ate_mode: float
    ate_mode_std: float
    ate_mean: float
    ate_mean_std: float
    nll: float
    nll_std: float
    steps: int

    def __post_init__(self):
        if self.ate_mode < 0.0 or self.ate_mean < 0.0:
            raise MetricsError("Trajectory errors cannot be negative")

    def to_dict(self):
        return {
            "ate_mode": self.ate_mode,
            "ate_mode_std": self.ate_mode_std,
            "ate_mean": self.ate_mean,
            "ate_mean_std": self.ate_mean_std,
            "nll": self.nll,
            "nll_std": self.nll_std,
            "steps": self.steps,
        }


def nll_at(density, pose):
    """-log of the density at the grid sample nearest `pose`, floored at ε."""
    index = make_grid(density.spec).nearest_index(pose.x, pose.y, pose.theta)
    return -math.log(max(float(density.values[index]), DENSITY_FLOOR))


def compute_metrics(run_log, dataset, beliefs, frame=None):
    """ATE (map units) for both estimators and the NLL of ground truth.

    Args:
        run_log: StepEstimate per step, in box units.
        dataset: The dataset in map units.
        beliefs: Normalised DensityGrid per step, in box units.
        frame: MapFrame between the two; identity when None.

    Returns:
        MetricsReport

    Raises:
        MetricsError: On length mismatch or unnormalised beliefs.
    """
    if not (len(run_log) == len(dataset.steps) == len(beliefs)):
        raise MetricsError(
            f"Length mismatch: {len(run_log)} estimates, {len(dataset.steps)} steps, "
            f"{len(beliefs)} beliefs"
        )
    if not run_log:
        raise MetricsError("Cannot score an empty run")
    mode_errors = []
    mean_errors = []
    nlls = []
    for estimate, step, belief in zip(run_log, dataset.steps, beliefs):
        if abs(belief.integral() - 1.0) > _NORMALIZATION_TOLERANCE:
            raise MetricsError(f"Belief at t={step.t} integrates to {belief.integral():.6g}")
        gt = step.gt
        for errors, pose in ((mode_errors, estimate.mode), (mean_errors, estimate.mean)):
            if frame is not None:
                pose = frame.pose_to_map(pose)
            errors.append(math.hypot(pose.x - gt.x, pose.y - gt.y))
        gt_box = gt if frame is None else frame.pose_to_box(gt)
        nlls.append(nll_at(belief, gt_box))
    return MetricsReport(
        ate_mode=float(np.mean(mode_errors)),
        ate_mode_std=float(np.std(mode_errors)),
        ate_mean=float(np.mean(mean_errors)),
        ate_mean_std=float(np.std(mean_errors)),
        nll=float(np.mean(nlls)),
        nll_std=float(np.std(nlls)),
        steps=len(run_log),
    )


def summarize(reports):
    """Mean and standard deviation of each headline metric across reports."""
    if not reports:
        raise MetricsError("No reports to summarise")
    summary = {}
    for name in ("ate_mode", "ate_mean", "nll"):
        values = np.array([getattr(r, name) for r in reports])
        summary[f"{name}_mean"] = float(values.mean())
        summary[f"{name}_std"] = float(values.std())
    return summary
