"""Run configuration: versioned JSON defaults merged with an optional user file.

Every value is range-checked before any compute starts; failures raise
ConfigError naming the dotted field, e.g. ``simulation.n_landmarks``.
"""

import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

from .group import GridError, GridSpec
from .hef import DiffDriveModel
from .transform import DEFAULT_INTERPOLATION_ORDER

CONFIG_VERSION = 1
FILTER_NAMES = ("hef", "ekf", "histf", "pf")


class ConfigError(ValueError):
    """Raised for invalid configuration; `field` is the dotted key."""

    def __init__(self, message, *, field=None):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field


@dataclass(frozen=True)
class NoiseConfig:
    sigma_trans: float = 0.02
    sigma_rot: float = 0.25
    sigma_range: float = 0.06


@dataclass(frozen=True)
class SimulationConfig:
    n_landmarks: int = 10
    n_steps: int = 100
    loop_steps: int | None = 50
    radius: float = 0.3
    landmark_half_span: float = 0.2
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    prior_sigma: tuple | None = (0.02, 0.02, 0.6)


@dataclass(frozen=True)
class FilterParams:
    """Filter-side settings; noise in map units."""

    n_lambda: int | None = None
    band_m: int | None = None
    band_n: int | None = None
    interpolation_order: int = DEFAULT_INTERPOLATION_ORDER
    particles: int = 80000
    sigma_trans: float = 0.02
    sigma_rot: float = 0.25
    sigma_range: float | None = 0.06
    sigma_bearing: float | None = None
    prior_sigma: tuple = (0.02, 0.02, 0.6)
    ignore_landmarks: tuple = ()

    def model(self):
        return DiffDriveModel(self.sigma_trans, self.sigma_rot)

    def with_noise(self, sigma_trans, sigma_rot):
        return replace(self, sigma_trans=sigma_trans, sigma_rot=sigma_rot)


@dataclass(frozen=True)
class SweepConfig:
    sigma_trans: tuple = (0.01, 0.02, 0.04)
    sigma_rot: tuple = (0.125, 0.25, 0.5)


@dataclass(frozen=True)
class BananaConfig:
    n_steps: int = 5
    step_length: float = 0.1
    sigma_trans: float = 0.02
    sigma_rot: float = 0.2
    center: tuple = (-0.25, 0.0, 0.0)
    half_widths: tuple = (0.05, 0.05, 0.1)
    particles: int = 80000
    oracle_particles: int = 1_000_000


@dataclass(frozen=True)
class FidelityConfig:
    param_counts: tuple = (8, 16, 32, 64)
    kappas: tuple = (1.0, 2.0, 4.0, 8.0)
    means: tuple = (0.0, 1.0)
    quadrature_points: int = 4096


@dataclass(frozen=True)
class BenchConfig:
    sizes: tuple = ((10, 10, 8), (20, 20, 8), (40, 40, 8))
    repetitions: int = 3


@dataclass(frozen=True)
class RunConfig:
    grid: GridSpec
    filters: tuple
    filter_params: FilterParams
    simulation: SimulationConfig
    sweep: SweepConfig
    banana: BananaConfig
    fidelity: FidelityConfig
    bench: BenchConfig
    seed: int = 0
    seeds: int = 10
    dataset: Path | None = None
    output_dir: Path | None = None
    margin: float = 0.1


# --- Loading ---


def default_data():
    text = resources.files("harmonic_filter").joinpath("defaults.json").read_text()
    return json.loads(text)


def _merge(base, override, prefix=""):
    merged = dict(base)
    for key, value in override.items():
        name = f"{prefix}{key}"
        if key not in base:
            raise ConfigError("unknown key", field=name)
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError("expected an object", field=name)
            merged[key] = _merge(base[key], value, f"{name}.")
        else:
            merged[key] = value
    return merged


def _number(value, name, *, positive=False, minimum=None, maximum=None, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {value!r}", field=name)
    if integer and not isinstance(value, int):
        raise ConfigError(f"expected an integer, got {value!r}", field=name)
    if not math.isfinite(value):
        raise ConfigError("must be finite", field=name)
    if positive and not value > 0:
        raise ConfigError(f"must be positive, got {value!r}", field=name)
    if minimum is not None and value < minimum:
        raise ConfigError(f"must be at least {minimum}, got {value!r}", field=name)
    if maximum is not None and value > maximum:
        raise ConfigError(f"must be at most {maximum}, got {value!r}", field=name)
    return value


def _optional(value, name, **checks):
    return None if value is None else _number(value, name, **checks)


def _sequence(value, name, length=None, **checks):
    if not isinstance(value, list):
        raise ConfigError(f"expected a list, got {value!r}", field=name)
    if length is not None and len(value) != length:
        raise ConfigError(f"expected {length} entries, got {len(value)}", field=name)
    return tuple(_number(v, f"{name}[{i}]", **checks) for i, v in enumerate(value))


def _grid(data):
    for key in ("nx", "ny", "ntheta"):
        _number(data.get(key), f"grid.{key}", integer=True, minimum=2)
    _sequence(data.get("bounds"), "grid.bounds", length=4)
    try:
        return GridSpec.from_dict(data)
    except GridError as exc:
        raise ConfigError(str(exc), field="grid") from exc


def _filter_params(data, interpolation_order, grid):
    p = "filter."
    half = grid.ntheta // 2
    params = FilterParams(
        n_lambda=_optional(data["n_lambda"], p + "n_lambda", integer=True, minimum=1,
                           maximum=min(grid.nx, grid.ny) // 2),
        band_m=_optional(data["band_m"], p + "band_m", integer=True, minimum=0, maximum=half),
        band_n=_optional(data["band_n"], p + "band_n", integer=True, minimum=0, maximum=half),
        interpolation_order=_number(
            interpolation_order if data["interpolation_order"] is None else data["interpolation_order"],
            p + "interpolation_order", integer=True, minimum=1, maximum=5,
        ),
        particles=_number(data["particles"], p + "particles", integer=True, minimum=1),
        sigma_trans=_number(data["sigma_trans"], p + "sigma_trans", positive=True),
        sigma_rot=_number(data["sigma_rot"], p + "sigma_rot", positive=True),
        sigma_range=_optional(data["sigma_range"], p + "sigma_range", positive=True),
        sigma_bearing=_optional(data["sigma_bearing"], p + "sigma_bearing", positive=True),
        prior_sigma=_sequence(data["prior_sigma"], p + "prior_sigma", length=3, positive=True),
        ignore_landmarks=_sequence(data["ignore_landmarks"], p + "ignore_landmarks", integer=True),
    )
    return params


def _simulation(data):
    p = "simulation."
    noise = data["noise"]
    return SimulationConfig(
        n_landmarks=_number(data["n_landmarks"], p + "n_landmarks", integer=True, minimum=1),
        n_steps=_number(data["n_steps"], p + "n_steps", integer=True, minimum=1),
        loop_steps=_optional(data["loop_steps"], p + "loop_steps", integer=True, minimum=1),
        radius=_number(data["radius"], p + "radius", positive=True),
        landmark_half_span=_number(data["landmark_half_span"], p + "landmark_half_span", minimum=0.0),
        noise=NoiseConfig(
            sigma_trans=_number(noise["sigma_trans"], p + "noise.sigma_trans", minimum=0.0),
            sigma_rot=_number(noise["sigma_rot"], p + "noise.sigma_rot", minimum=0.0),
            sigma_range=_number(noise["sigma_range"], p + "noise.sigma_range", positive=True),
        ),
        prior_sigma=(
            None
            if data["prior_sigma"] is None
            else _sequence(data["prior_sigma"], p + "prior_sigma", length=3, positive=True)
        ),
    )


def _banana(data):
    p = "banana."
    return BananaConfig(
        n_steps=_number(data["n_steps"], p + "n_steps", integer=True, minimum=0),
        step_length=_number(data["step_length"], p + "step_length"),
        sigma_trans=_number(data["sigma_trans"], p + "sigma_trans", positive=True),
        sigma_rot=_number(data["sigma_rot"], p + "sigma_rot", positive=True),
        center=_sequence(data["center"], p + "center", length=3),
        half_widths=_sequence(data["half_widths"], p + "half_widths", length=3, positive=True),
        particles=_number(data["particles"], p + "particles", integer=True, minimum=1),
        oracle_particles=_number(data["oracle_particles"], p + "oracle_particles", integer=True, minimum=1),
    )


def _fidelity(data):
    p = "fidelity."
    counts = _sequence(data["param_counts"], p + "param_counts", integer=True, minimum=2)
    points = _number(data["quadrature_points"], p + "quadrature_points", integer=True, minimum=4096)
    if counts and max(counts) > points:
        raise ConfigError("parameter counts cannot exceed the quadrature points", field=p + "param_counts")
    return FidelityConfig(
        param_counts=counts,
        kappas=_sequence(data["kappas"], p + "kappas", positive=True),
        means=_sequence(data["means"], p + "means"),
        quadrature_points=points,
    )


def _bench(data):
    p = "bench."
    if not isinstance(data["sizes"], list) or not data["sizes"]:
        raise ConfigError("expected a non-empty list", field=p + "sizes")
    sizes = tuple(
        _sequence(size, f"{p}sizes[{i}]", length=3, integer=True, minimum=2)
        for i, size in enumerate(data["sizes"])
    )
    return BenchConfig(
        sizes=sizes,
        repetitions=_number(data["repetitions"], p + "repetitions", integer=True, minimum=1),
    )


def build_config(data, *, interpolation_order=DEFAULT_INTERPOLATION_ORDER, base_dir=None):
    """Validate merged configuration data into a RunConfig."""
    if data.get("version") != CONFIG_VERSION:
        raise ConfigError(f"unsupported version {data.get('version')!r}", field="version")
    grid = _grid(data["grid"])
    filters = data["filters"]
    if not isinstance(filters, list) or not filters:
        raise ConfigError("expected a non-empty list", field="filters")
    for name in filters:
        if name not in FILTER_NAMES:
            raise ConfigError(f"unknown filter {name!r} (choose from {', '.join(FILTER_NAMES)})", field="filters")
    dataset = data["dataset"]
    if dataset is not None:
        dataset = Path(dataset)
        if base_dir is not None and not dataset.is_absolute():
            dataset = Path(base_dir) / dataset
        if not dataset.exists():
            raise ConfigError(f"{dataset} does not exist", field="dataset")
    sweep = data["sweep"]
    return RunConfig(
        grid=grid,
        filters=tuple(dict.fromkeys(filters)),
        filter_params=_filter_params(data["filter"], interpolation_order, grid),
        simulation=_simulation(data["simulation"]),
        sweep=SweepConfig(
            sigma_trans=_sequence(sweep["sigma_trans"], "sweep.sigma_trans", positive=True),
            sigma_rot=_sequence(sweep["sigma_rot"], "sweep.sigma_rot", positive=True),
        ),
        banana=_banana(data["banana"]),
        fidelity=_fidelity(data["fidelity"]),
        bench=_bench(data["bench"]),
        seed=_number(data["seed"], "seed", integer=True, minimum=0),
        seeds=_number(data["seeds"], "seeds", integer=True, minimum=1),
        dataset=dataset,
        output_dir=None if data["output_dir"] is None else Path(data["output_dir"]),
        margin=_number(data["margin"], "margin", minimum=0.0, maximum=0.45),
    )


def load_config(path=None, *, overrides=None, interpolation_order=DEFAULT_INTERPOLATION_ORDER):
    """Defaults, then the JSON file at `path`, then `overrides` (a dict).

    Raises:
        ConfigError: On unreadable files, unknown keys or out-of-range values.
    """
    data = default_data()
    base_dir = None
    if path is not None:
        path = Path(path)
        try:
            user = json.loads(path.read_text())
        except OSError as exc:
            raise ConfigError(f"Could not read config {path}: {exc}", field="config") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"Invalid JSON in {path}: {exc}", field="config") from exc
        if not isinstance(user, dict):
            raise ConfigError("Config must be a JSON object", field="config")
        data = _merge(data, user)
        base_dir = path.parent
    if overrides:
        data = _merge(data, overrides)
    return build_config(data, interpolation_order=interpolation_order, base_dir=base_dir)
