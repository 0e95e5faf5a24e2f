import csv
import json
import shutil
import tempfile
from io import StringIO
from pathlib import Path

from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from harmonic_filter.config import ConfigError
from harmonic_filter.datasets import DatasetError
from harmonic_filter.management.base import EXIT_CONFIG, EXIT_RUNTIME, error_payload, parse_filters, parse_ids

from .conftest import small_run_overrides


class CommandTestCase(SimpleTestCase):
    def setUp(self):
        self.tmp = Path(tempfile.mkdtemp())
        self.addCleanup(shutil.rmtree, self.tmp)
        self.out = self.tmp / "out"

    def write_config(self, **extra):
        data = small_run_overrides()
        for key, value in extra.items():
            if isinstance(value, dict) and isinstance(data.get(key), dict):
                data[key] = {**data[key], **value}
            else:
                data[key] = value
        path = self.tmp / "config.json"
        path.write_text(json.dumps(data))
        return path

    def call(self, name, **options):
        stdout = StringIO()
        stderr = StringIO()
        call_command(name, stdout=stdout, stderr=stderr, **options)
        return stdout.getvalue()

    def failing_call(self, name, **options):
        stderr = StringIO()
        with self.assertRaises(CommandError) as ctx:
            call_command(name, stdout=StringIO(), stderr=stderr, json_errors=True, **options)
        return ctx.exception, json.loads(stderr.getvalue())


class ParsingTests(SimpleTestCase):
    def test_parse_filters(self):
        self.assertEqual(parse_filters("hef, pf"), ["hef", "pf"])
        with self.assertRaises(ConfigError):
            parse_filters("hef,kalman")
        with self.assertRaises(ConfigError):
            parse_filters(" , ")

    def test_parse_ids(self):
        self.assertEqual(parse_ids("3,1", "ignore_landmarks"), [3, 1])
        with self.assertRaises(ConfigError) as ctx:
            parse_ids("a", "ignore_landmarks")
        self.assertEqual(ctx.exception.field, "ignore_landmarks")

    def test_error_payload_carries_line(self):
        payload = error_payload(DatasetError("bad", line=4), EXIT_CONFIG)
        self.assertEqual(payload, {"error": "DatasetError", "message": "line 4: bad", "exit_code": 2, "line": 4})


class SimulateCommandTests(CommandTestCase):
    def test_writes_one_file_per_seed(self):
        output = self.call("simulate", config=str(self.write_config()), out=str(self.out), seeds=2)
        self.assertTrue((self.out / "dataset_seed0.jsonl").exists())
        self.assertTrue((self.out / "dataset_seed1.jsonl").exists())
        self.assertIn("dataset_seed1.jsonl", output)

    def test_same_seed_same_bytes(self):
        config = str(self.write_config())
        self.call("simulate", config=config, out=str(self.out), seed=7)
        first = (self.out / "dataset_seed7.jsonl").read_bytes()
        self.call("simulate", config=config, out=str(self.out), seed=7, force=True)
        self.assertEqual((self.out / "dataset_seed7.jsonl").read_bytes(), first)

    def test_refuses_to_overwrite(self):
        config = str(self.write_config())
        self.call("simulate", config=config, out=str(self.out), seed=0)
        exc, payload = self.failing_call("simulate", config=config, out=str(self.out), seed=0)
        self.assertEqual(exc.returncode, EXIT_CONFIG)
        self.assertEqual(payload["field"], "out")

    def test_zero_landmarks_is_a_config_error(self):
        config = self.write_config(simulation={"n_landmarks": 0})
        exc, payload = self.failing_call("simulate", config=str(config), out=str(self.out))
        self.assertEqual(exc.returncode, EXIT_CONFIG)
        self.assertEqual(payload["error"], "ConfigError")
        self.assertEqual(payload["field"], "simulation.n_landmarks")
        self.assertFalse(self.out.exists())

    def test_plain_errors_without_json(self):
        config = self.write_config(simulation={"n_landmarks": 0})
        stderr = StringIO()
        with self.assertRaises(CommandError) as ctx:
            call_command("simulate", config=str(config), out=str(self.out), stderr=stderr)
        self.assertEqual(ctx.exception.returncode, EXIT_CONFIG)
        self.assertEqual(stderr.getvalue(), "")


class RunCommandTests(CommandTestCase):
    def test_run_writes_logs_and_summaries(self):
        output = self.call(
            "run", config=str(self.write_config()), out=str(self.out), filters="hef,ekf", seeds=1
        )
        self.assertTrue((self.out / "runs" / "hef_seed0.jsonl").exists())
        self.assertTrue((self.out / "runs" / "ekf_seed0.jsonl").exists())
        with open(self.out / "summary.csv", newline="") as handle:
            rows = list(csv.DictReader(handle))
        self.assertEqual([row["filter"] for row in rows], ["hef", "ekf"])
        self.assertIn("ATE(mode)", output)

    def test_run_on_a_saved_dataset(self):
        config = str(self.write_config())
        self.call("simulate", config=config, out=str(self.tmp), seed=0)
        self.call(
            "run",
            config=config,
            out=str(self.out),
            dataset=str(self.tmp / "dataset_seed0.jsonl"),
            filters="histf",
            seed=3,
            dump_beliefs=True,
        )
        self.assertTrue((self.out / "runs" / "histf_seed3.jsonl").exists())
        self.assertTrue((self.out / "beliefs" / "histf_seed3_t4.hef").exists())

    def test_sweep_marks_selected_setting(self):
        self.call("run", config=str(self.write_config()), out=str(self.out), filters="ekf", seeds=1, sweep=True)
        with open(self.out / "sweep.csv", newline="") as handle:
            rows = list(csv.DictReader(handle))
        self.assertEqual(len(rows), 2)
        self.assertEqual(sum(int(row["selected"]) for row in rows), 1)

    def test_ignore_landmarks(self):
        self.call(
            "run",
            config=str(self.write_config()),
            out=str(self.out),
            filters="ekf",
            seeds=1,
            ignore_landmarks="0,1,2",
        )
        self.assertTrue((self.out / "summary.csv").exists())

    def test_broken_dataset_reports_the_line(self):
        path = self.tmp / "broken.jsonl"
        path.write_text("{}\n")
        exc, payload = self.failing_call(
            "run", config=str(self.write_config()), out=str(self.out), dataset=str(path), filters="ekf"
        )
        self.assertEqual(exc.returncode, EXIT_CONFIG)
        self.assertEqual(payload["error"], "DatasetError")
        self.assertEqual(payload["line"], 1)

    def test_filter_failure_exits_with_runtime_code(self):
        config = self.write_config(filter={"sigma_trans": 1.0})
        exc, payload = self.failing_call("run", config=str(config), out=str(self.out), filters="hef", seed=0)
        self.assertEqual(exc.returncode, EXIT_RUNTIME)
        self.assertEqual(payload["error"], "FilterError")
        self.assertEqual(payload["step"], 1)

    def test_unknown_filter_option(self):
        exc, payload = self.failing_call("run", config=str(self.write_config()), out=str(self.out), filters="ukf")
        self.assertEqual(exc.returncode, EXIT_CONFIG)
        self.assertEqual(payload["field"], "filters")


class AnalysisCommandTests(CommandTestCase):
    def test_demo_banana(self):
        self.call("demo_banana", config=str(self.write_config()), out=str(self.out), filters="hef,histf")
        lines = (self.out / "banana.csv").read_text().splitlines()
        self.assertTrue(lines[0].startswith("filter,t,tv_full,tv_xy"))
        self.assertEqual(len(lines), 1 + 2 * 3)
        self.assertTrue((self.out / "beliefs" / "oracle_t2.hef").exists())

    def test_analyze_kl(self):
        self.call("analyze_kl", config=str(self.write_config()), out=str(self.out))
        with open(self.out / "fidelity.csv", newline="") as handle:
            rows = list(csv.DictReader(handle))
        self.assertEqual([(r["method"], r["params"]) for r in rows], [
            ("histogram", "8"), ("hed", "8"), ("histogram", "16"), ("hed", "16"),
        ])

    def test_bench_conv(self):
        output = self.call("bench_conv", config=str(self.write_config()), out=str(self.out), repetitions=1)
        lines = (self.out / "bench.csv").read_text().splitlines()
        self.assertEqual(lines[0], "method,nx,ny,ntheta,seconds")
        self.assertEqual(len(lines), 3)
        self.assertIn("8x8x4", output)

    def test_bench_conv_rejects_zero_repetitions(self):
        exc, payload = self.failing_call("bench_conv", config=str(self.write_config()), out=str(self.out), repetitions=0)
        self.assertEqual(exc.returncode, EXIT_CONFIG)
        self.assertEqual(payload["field"], "bench.repetitions")
