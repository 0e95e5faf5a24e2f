"""Shared plumbing for the harmonic_filter management commands."""

import json
import logging
import sys
from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from ..analysis import AnalysisError, BenchmarkMismatchError
from ..baselines import BaselineError
from ..config import FILTER_NAMES, ConfigError, load_config
from ..datasets import DatasetError
from ..distribution import DistributionError
from ..group import GridError
from ..hef import FilterError, MotionModelError
from ..measurements import MeasurementError
from ..metrics import MetricsError
from ..serialization import SerializationError
from ..simulation import SimulationError
from ..transform import SpectrumError

logger = logging.getLogger(__name__)

EXIT_CONFIG = 2
EXIT_RUNTIME = 3

_INPUT_ERRORS = (ConfigError, DatasetError)
_RUNTIME_ERRORS = (
    AnalysisError,
    BaselineError,
    BenchmarkMismatchError,
    DistributionError,
    FilterError,
    GridError,
    MeasurementError,
    MetricsError,
    MotionModelError,
    SerializationError,
    SimulationError,
    SpectrumError,
    FloatingPointError,
    OSError,
)


def parse_list(value, name):
    items = [item.strip() for item in value.split(",") if item.strip()]
    if not items:
        raise ConfigError("expected a comma-separated list", field=name)
    return items


def parse_filters(value):
    names = parse_list(value, "filters")
    for name in names:
        if name not in FILTER_NAMES:
            raise ConfigError(
                f"unknown filter {name!r} (choose from {', '.join(FILTER_NAMES)})", field="filters"
            )
    return names


def parse_ids(value, name):
    ids = []
    for item in parse_list(value, name):
        try:
            ids.append(int(item))
        except ValueError as exc:
            raise ConfigError(f"{item!r} is not an integer id", field=name) from exc
    return ids


def error_payload(exc, exit_code):
    payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": exit_code}
    for key in ("field", "line", "step"):
        value = getattr(exc, key, None)
        if value is not None:
            payload[key] = value
    return payload


class HefCommand(BaseCommand):
    """Adds --config, --out and --json-errors, and maps library errors to exit codes.

    Subclasses implement `run(config, out_dir, **options)`.
    """

    def add_arguments(self, parser):
        parser.add_argument("--config", help="JSON run configuration merged over the defaults")
        parser.add_argument("--out", help="Output directory (default: HEF_OUTPUT_DIR)")
        parser.add_argument(
            "--json-errors",
            action="store_true",
            help="Report failures as one JSON object on stderr",
        )
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        pass

    def config_overrides(self, options):
        return None

    def load_config(self, options):
        return load_config(
            options.get("config"),
            overrides=self.config_overrides(options),
            interpolation_order=settings.HEF_INTERPOLATION_ORDER,
        )

    def output_dir(self, config, options):
        out = options.get("out") or config.output_dir or settings.HEF_OUTPUT_DIR
        return Path(out)

    def handle(self, *args, **options):
        try:
            config = self.load_config(options)
            return self.run(config, self.output_dir(config, options), **options)
        except CommandError:
            raise
        except _INPUT_ERRORS as exc:
            raise self.failure(exc, EXIT_CONFIG, options) from exc
        except _RUNTIME_ERRORS as exc:
            raise self.failure(exc, EXIT_RUNTIME, options) from exc

    def failure(self, exc, exit_code, options):
        logger.debug("Command failed", exc_info=exc)
        if options.get("json_errors"):
            self.stderr.write(json.dumps(error_payload(exc, exit_code)), style_func=lambda text: text)
            if getattr(self, "_called_from_command_line", False):
                sys.exit(exit_code)
        return CommandError(str(exc), returncode=exit_code)

    def usage_error(self, message, options, *, field=None):
        """Exit-code-2 failure for argument problems found after parsing."""
        return self.failure(ConfigError(message, field=field), EXIT_CONFIG, options)

    def run(self, config, out_dir, **options):
        raise NotImplementedError
