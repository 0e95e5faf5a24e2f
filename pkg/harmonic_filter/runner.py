"""Experiment orchestration: filters over datasets, noise sweeps, the banana demo.

Filters run in box coordinates; run logs and metrics are reported in map
units through the dataset's MapFrame.
"""

import csv
import io
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .baselines import (
    EkfFilter,
    HistogramFilter,
    ParticleFilter,
    moment_matched,
    particles_density,
    pf_step,
    sample_from_density,
)
from .datasets import DEFAULT_MARGIN, PriorSpec
from .distribution import (
    DistributionError,
    estimate_from_density,
    fit_from_density,
    mode_of_density,
    planar_marginal,
    total_variation,
)
from .hef import DiffDriveModel, FilterError, HarmonicFilter
from .measurements import Measurement, MeasurementKind
from .metrics import StepEstimate, compute_metrics, nll_at, summarize
from .serialization import atomic_write_text, write_grid
from .simulation import banana_scenario, simulate_range_world
from .transform import Bands

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BoxStep:
    t: int
    u: object
    z: tuple
    gt: object


def _measurement_for_filter(z, params):
    sigma = z.sigma
    if z.kind is MeasurementKind.RANGE and params.sigma_range is not None:
        sigma = params.sigma_range
    elif z.kind is MeasurementKind.BEARING and params.sigma_bearing is not None:
        sigma = params.sigma_bearing
    return Measurement(z.kind, z.value, sigma, z.landmark_id)


def box_steps(dataset, frame, params):
    """Controls, measurements and ground truth converted into box units.

    Measurement noise is replaced by the filter's own σ when configured, and
    readings from ignored landmarks are dropped.
    """
    ignored = set(params.ignore_landmarks)
    steps = []
    for s in dataset.steps:
        z = tuple(
            frame.measurement_to_box(_measurement_for_filter(m, params))
            for m in s.z
            if m.landmark_id is None or m.landmark_id not in ignored
        )
        steps.append(BoxStep(s.t, frame.control_to_box(s.u), z, frame.pose_to_box(s.gt)))
    return steps


def prior_density(dataset, frame, params):
    prior = dataset.prior or PriorSpec("gaussian", dataset.start, params.prior_sigma)
    return prior.to_box(frame).density(dataset.grid)


def make_bands(grid, params):
    return Bands.for_grid(grid, params.n_lambda, params.band_m, params.band_n)


def build_filter(name, prior, model, landmark_map, params, rng):
    """Instantiate filter `name` from a prior density grid (box units)."""
    grid = prior.spec
    if name == "hef":
        belief = fit_from_density(prior, make_bands(grid, params), params.interpolation_order)
        return HarmonicFilter(belief, model, landmark_map)
    if name == "ekf":
        return EkfFilter(moment_matched(prior), model, landmark_map, grid)
    if name == "histf":
        return HistogramFilter(prior, model, landmark_map)
    if name == "pf":
        particles = sample_from_density(prior, params.particles, rng)
        return ParticleFilter(particles, model, landmark_map, grid, rng)
    raise ValueError(f"Unknown filter {name!r}")


@dataclass
class FilterRun:
    name: str
    seed: int | None
    records: list = field(default_factory=list)
    report: object = None
    params: object = None


def run_filter(name, dataset, params, *, seed=0, margin=DEFAULT_MARGIN, dump_dir=None):
    """Run one filter over a dataset and score it.

    Returns:
        FilterRun: Per-step records (map units) and the metrics report.

    Raises:
        FilterError: With the failing step index.
    """
    frame = dataset.fitted_frame(margin)
    dataset.check_inside(frame, margin)
    rng = np.random.default_rng(seed)
    landmark_map = dataset.landmark_map.transformed(frame.to_box)
    model = params.model().scaled(frame.scale)
    prior = prior_density(dataset, frame, params)
    filt = build_filter(name, prior, model, landmark_map, params, rng)
    if dump_dir is not None:
        write_grid(Path(dump_dir) / f"{name}_seed{seed}_t0.hef", prior)

    run = FilterRun(name, seed, params=params)
    estimates = []
    beliefs = []
    for s in box_steps(dataset, frame, params):
        try:
            filt.step(s.u, s.z, s.gt)
            density = filt.density()
            mode = filt.mode()
            mean = filt.mean()
        except FilterError as exc:
            if exc.step is None:
                raise FilterError(f"Step {s.t}: {exc}", step=s.t) from exc
            raise
        except (ValueError, RuntimeError) as exc:
            raise FilterError(f"{name} failed at step {s.t}: {exc}", step=s.t) from exc
        estimates.append(StepEstimate(s.t, mode, mean))
        beliefs.append(density)
        record = {
            "t": s.t,
            "mode": frame.pose_to_map(mode).to_dict(),
            "mean": frame.pose_to_map(mean).to_dict(),
            "nll_gt": nll_at(density, s.gt),
        }
        if isinstance(filt, HarmonicFilter):
            diagnostics = filt.history[-1]
            record["log_z"] = diagnostics.log_z
            record["entropy"] = diagnostics.entropy
        run.records.append(record)
        if dump_dir is not None:
            write_grid(Path(dump_dir) / f"{name}_seed{seed}_t{s.t}.hef", density)
    run.report = compute_metrics(estimates, dataset, beliefs, frame)
    logger.info(
        "%s seed=%s: ate_mode=%.4f ate_mean=%.4f nll=%.3f",
        name,
        seed,
        run.report.ate_mode,
        run.report.ate_mean,
        run.report.nll,
    )
    return run


def simulate_from_config(config, seed):
    sim = config.simulation
    return simulate_range_world(
        sim.n_landmarks,
        sim.n_steps,
        sim.noise,
        seed,
        radius=sim.radius,
        landmark_half_span=sim.landmark_half_span,
        loop_steps=sim.loop_steps,
        prior_sigma=sim.prior_sigma,
        grid=config.grid,
        margin=config.margin,
    )


def run_experiment(datasets, filters, params, *, threads=1, margin=DEFAULT_MARGIN, dump_dir=None):
    """Every (filter, seed) pair, in that order, over up to `threads` workers.

    Args:
        datasets: Mapping seed -> Dataset.
    """
    jobs = [(name, seed) for name in filters for seed in datasets]

    def work(job):
        name, seed = job
        logger.info("Running %s on seed %s", name, seed)
        return run_filter(name, datasets[seed], params, seed=seed, margin=margin, dump_dir=dump_dir)

    if threads <= 1:
        return [work(job) for job in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(work, jobs))


@dataclass(frozen=True)
class SweepRow:
    filter: str
    sigma_trans: float
    sigma_rot: float
    nll: float


def noise_sweep(datasets, filters, params, sweep, *, threads=1, margin=DEFAULT_MARGIN):
    """Grid search over motion noise; picks the lowest mean NLL per filter.

    Returns:
        tuple: (list[SweepRow], dict filter -> best SweepRow)
    """
    rows = []
    for sigma_trans in sweep.sigma_trans:
        for sigma_rot in sweep.sigma_rot:
            candidate = params.with_noise(sigma_trans, sigma_rot)
            for name in filters:
                try:
                    runs = run_experiment(
                        datasets, [name], candidate, threads=threads, margin=margin
                    )
                    nll = float(np.mean([r.report.nll for r in runs]))
                except (FilterError, DistributionError, ValueError, RuntimeError) as exc:
                    logger.warning(
                        "Sweep candidate %s σt=%g σr=%g failed: %s", name, sigma_trans, sigma_rot, exc
                    )
                    nll = math.inf
                rows.append(SweepRow(name, sigma_trans, sigma_rot, nll))
    best = {}
    for row in rows:
        if row.filter not in best or row.nll < best[row.filter].nll:
            best[row.filter] = row
    return rows, best


# --- Banana demo ---


@dataclass
class BananaResult:
    rows: list
    beliefs: dict


def _estimate_row(name, t, density, oracle):
    estimate = estimate_from_density(density)
    mode = mode_of_density(density)
    return {
        "filter": name,
        "t": t,
        "tv_full": total_variation(density, oracle),
        "tv_xy": 0.5
        * density.spec.dx
        * density.spec.dy
        * float(np.abs(planar_marginal(density) - planar_marginal(oracle)).sum()),
        "mode_x": mode.x,
        "mode_y": mode.y,
        "mode_theta": mode.theta,
        "mean_x": estimate.pose.x,
        "mean_y": estimate.pose.y,
        "mean_theta": estimate.pose.theta,
    }


def run_banana(config, filters=None, *, seed=0, params=None, dump_dir=None):
    """Propagate the rectangular prior through every filter and a particle oracle.

    Returns:
        BananaResult: Per (filter, t) rows with total variation against the
        oracle, and the density grids for t = 0..n_steps.
    """
    banana = config.banana
    params = params or config.filter_params
    filters = filters or config.filters
    dataset = banana_scenario(
        banana.n_steps,
        banana.sigma_rot,
        sigma_trans=banana.sigma_trans,
        step_length=banana.step_length,
        center=banana.center,
        half_widths=banana.half_widths,
        grid=config.grid,
        margin=config.margin,
    )
    model = DiffDriveModel(banana.sigma_trans, banana.sigma_rot)
    prior = dataset.prior.density(dataset.grid)
    rng = np.random.default_rng(seed)

    oracle_set = sample_from_density(prior, banana.oracle_particles, rng)
    oracle = [particles_density(oracle_set, dataset.grid)]
    for s in dataset.steps:
        oracle_set = pf_step(oracle_set, s.u, [], rng, model=model).particles
        oracle.append(particles_density(oracle_set, dataset.grid))

    beliefs = {"oracle": oracle}
    banana_params = replace(params, particles=banana.particles)
    for name in filters:
        filt = build_filter(name, prior, model, dataset.landmark_map, banana_params, rng)
        densities = [filt.density()]
        for s in dataset.steps:
            filt.step(s.u, ())
            densities.append(filt.density())
        beliefs[name] = densities
        logger.info("banana %s: final TV %.3f", name, total_variation(densities[-1], oracle[-1]))

    rows = []
    for name in filters:
        for t, density in enumerate(beliefs[name]):
            rows.append(_estimate_row(name, t, density, oracle[t]))
    if dump_dir is not None:
        for name, densities in beliefs.items():
            for t, density in enumerate(densities):
                write_grid(Path(dump_dir) / f"{name}_t{t}.hef", density)
    return BananaResult(rows, beliefs)


# --- Output files ---


def csv_text(header, rows):
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_csv_value(row[key]) for key in header])
    return buffer.getvalue()


def _csv_value(value):
    if isinstance(value, float):
        return repr(value)
    return value


def write_csv(path, header, rows):
    atomic_write_text(path, csv_text(header, rows))


def write_run_log(path, run, dataset):
    header = {
        "filter": run.name,
        "seed": run.seed,
        "grid": dataset.grid.to_dict(),
        "dataset_seed": dataset.seed,
        "steps": len(run.records),
    }
    lines = [json.dumps(header, allow_nan=False)]
    lines.extend(json.dumps(record, allow_nan=False) for record in run.records)
    atomic_write_text(path, "\n".join(lines) + "\n")


SUMMARY_COLUMNS = ("filter", "seed", "ate_mode", "ate_mean", "nll")
AGGREGATE_COLUMNS = (
    "filter",
    "ate_mode_mean",
    "ate_mode_std",
    "ate_mean_mean",
    "ate_mean_std",
    "nll_mean",
    "nll_std",
)


def summary_rows(runs):
    return [
        {
            "filter": r.name,
            "seed": r.seed,
            "ate_mode": r.report.ate_mode,
            "ate_mean": r.report.ate_mean,
            "nll": r.report.nll,
        }
        for r in runs
    ]


def aggregate_rows(runs):
    rows = []
    for name in dict.fromkeys(r.name for r in runs):
        stats = summarize([r.report for r in runs if r.name == name])
        rows.append({"filter": name, **stats})
    return rows


def write_outputs(out_dir, runs, datasets):
    """runs/<filter>_seed<k>.jsonl, summary.csv and aggregate.csv under out_dir."""
    out_dir = Path(out_dir)
    for run in runs:
        write_run_log(out_dir / "runs" / f"{run.name}_seed{run.seed}.jsonl", run, datasets[run.seed])
    write_csv(out_dir / "summary.csv", SUMMARY_COLUMNS, summary_rows(runs))
    write_csv(out_dir / "aggregate.csv", AGGREGATE_COLUMNS, aggregate_rows(runs))
