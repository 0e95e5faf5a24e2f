import json
import tempfile
from pathlib import Path

from django.test import SimpleTestCase

from harmonic_filter.config import ConfigError, FilterParams, load_config
from harmonic_filter.group import GridSpec


class DefaultsTests(SimpleTestCase):
    def test_defaults_load(self):
        config = load_config()
        self.assertEqual(config.grid, GridSpec(50, 50, 32))
        self.assertEqual(config.filters, ("hef", "ekf", "histf", "pf"))
        self.assertEqual(config.simulation.n_landmarks, 10)
        self.assertEqual(config.filter_params.prior_sigma, (0.02, 0.02, 0.6))
        self.assertEqual(config.simulation.prior_sigma, config.filter_params.prior_sigma)
        self.assertEqual(config.simulation.noise.sigma_rot, config.filter_params.sigma_rot)
        self.assertIsNone(config.dataset)

    def test_interpolation_order_falls_back_to_argument(self):
        self.assertEqual(load_config(interpolation_order=1).filter_params.interpolation_order, 1)

    def test_model_uses_filter_noise(self):
        model = FilterParams(sigma_trans=0.05, sigma_rot=0.3).model()
        self.assertEqual((model.sigma_trans, model.sigma_rot), (0.05, 0.3))

    def test_with_noise_keeps_other_fields(self):
        params = FilterParams(particles=10).with_noise(0.1, 0.2)
        self.assertEqual(params.particles, 10)
        self.assertEqual(params.sigma_trans, 0.1)


class OverrideTests(SimpleTestCase):
    def test_nested_override(self):
        config = load_config(overrides={"simulation": {"noise": {"sigma_range": 0.05}}})
        self.assertEqual(config.simulation.noise.sigma_range, 0.05)
        self.assertEqual(config.simulation.noise.sigma_trans, 0.02)

    def test_duplicate_filters_collapse(self):
        config = load_config(overrides={"filters": ["pf", "hef", "pf"]})
        self.assertEqual(config.filters, ("pf", "hef"))

    def test_unknown_key_names_dotted_field(self):
        with self.assertRaises(ConfigError) as ctx:
            load_config(overrides={"simulation": {"n_robots": 2}})
        self.assertEqual(ctx.exception.field, "simulation.n_robots")

    def test_section_must_be_an_object(self):
        with self.assertRaises(ConfigError) as ctx:
            load_config(overrides={"banana": 3})
        self.assertEqual(ctx.exception.field, "banana")

    def test_zero_landmarks(self):
        with self.assertRaises(ConfigError) as ctx:
            load_config(overrides={"simulation": {"n_landmarks": 0}})
        self.assertEqual(ctx.exception.field, "simulation.n_landmarks")
        self.assertIn("simulation.n_landmarks", str(ctx.exception))

    def test_unknown_filter(self):
        with self.assertRaisesMessage(ConfigError, "kalman"):
            load_config(overrides={"filters": ["kalman"]})

    def test_bool_is_not_a_number(self):
        with self.assertRaises(ConfigError) as ctx:
            load_config(overrides={"seeds": True})
        self.assertEqual(ctx.exception.field, "seeds")

    def test_band_above_grid_limit(self):
        with self.assertRaises(ConfigError) as ctx:
            load_config(overrides={"filter": {"band_m": 17}})
        self.assertEqual(ctx.exception.field, "filter.band_m")

    def test_prior_sigma_needs_three_entries(self):
        with self.assertRaises(ConfigError) as ctx:
            load_config(overrides={"filter": {"prior_sigma": [0.1, 0.1]}})
        self.assertEqual(ctx.exception.field, "filter.prior_sigma")

    def test_simulation_prior_can_be_disabled(self):
        config = load_config(overrides={"simulation": {"prior_sigma": None}})
        self.assertIsNone(config.simulation.prior_sigma)

    def test_simulation_prior_must_be_positive(self):
        with self.assertRaises(ConfigError) as ctx:
            load_config(overrides={"simulation": {"prior_sigma": [0.1, 0.0, 0.1]}})
        self.assertEqual(ctx.exception.field, "simulation.prior_sigma[1]")

    def test_fidelity_counts_cannot_exceed_quadrature(self):
        with self.assertRaises(ConfigError):
            load_config(overrides={"fidelity": {"param_counts": [8192]}})

    def test_missing_dataset(self):
        with self.assertRaises(ConfigError) as ctx:
            load_config(overrides={"dataset": "/nonexistent/data.jsonl"})
        self.assertEqual(ctx.exception.field, "dataset")

    def test_margin_range(self):
        with self.assertRaises(ConfigError):
            load_config(overrides={"margin": 0.5})


class FileTests(SimpleTestCase):
    def test_file_then_overrides(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "config.json"
            path.write_text(json.dumps({"seed": 4, "seeds": 2}))
            config = load_config(path, overrides={"seeds": 3})
        self.assertEqual(config.seed, 4)
        self.assertEqual(config.seeds, 3)

    def test_relative_dataset_resolves_against_config_dir(self):
        with tempfile.TemporaryDirectory() as tmp:
            (Path(tmp) / "data.jsonl").write_text("")
            path = Path(tmp) / "config.json"
            path.write_text(json.dumps({"dataset": "data.jsonl"}))
            config = load_config(path)
        self.assertEqual(config.dataset, Path(tmp) / "data.jsonl")

    def test_invalid_json(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "config.json"
            path.write_text("{")
            with self.assertRaises(ConfigError) as ctx:
                load_config(path)
        self.assertEqual(ctx.exception.field, "config")

    def test_missing_file(self):
        with self.assertRaisesMessage(ConfigError, "Could not read config"):
            load_config("/nonexistent/config.json")

    def test_top_level_must_be_object(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "config.json"
            path.write_text("[]")
            with self.assertRaises(ConfigError):
                load_config(path)
