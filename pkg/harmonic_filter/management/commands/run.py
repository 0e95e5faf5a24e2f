from django.conf import settings

from harmonic_filter.datasets import load_dataset
from harmonic_filter.management.base import HefCommand, parse_filters, parse_ids
from harmonic_filter.runner import (
    noise_sweep,
    run_experiment,
    simulate_from_config,
    write_csv,
    write_outputs,
)

SWEEP_COLUMNS = ("filter", "sigma_trans", "sigma_rot", "nll", "selected")


class Command(HefCommand):
    help = "Run filters over datasets and write run logs and metric summaries"

    def add_command_arguments(self, parser):
        parser.add_argument("--dataset", help="JSONL dataset; simulated from the config when omitted")
        parser.add_argument("--filters", help="Comma-separated subset of hef,ekf,histf,pf")
        seeds = parser.add_mutually_exclusive_group()
        seeds.add_argument("--seed", type=int, help="Run a single seed")
        seeds.add_argument("--seeds", type=int, help="Run seeds 0..N-1")
        parser.add_argument(
            "--sweep",
            action="store_true",
            help="Grid-search motion noise per filter and run with the lowest-NLL setting",
        )
        parser.add_argument(
            "--dump-beliefs", action="store_true", help="Write every belief grid as HEF1"
        )
        parser.add_argument(
            "--ignore-landmarks", help="Comma-separated landmark ids whose readings are dropped"
        )

    def config_overrides(self, options):
        overrides = {}
        if options.get("dataset"):
            overrides["dataset"] = options["dataset"]
        if options.get("filters"):
            overrides["filters"] = parse_filters(options["filters"])
        if options.get("ignore_landmarks"):
            overrides["filter"] = {
                "ignore_landmarks": parse_ids(options["ignore_landmarks"], "ignore_landmarks")
            }
        return overrides

    def seeds(self, config, options):
        if options.get("seed") is not None:
            return [options["seed"]]
        count = config.seeds if options.get("seeds") is None else options["seeds"]
        if count < 1:
            raise self.usage_error("must be at least 1", options, field="seeds")
        return list(range(count))

    def run(self, config, out_dir, **options):
        seeds = self.seeds(config, options)
        if config.dataset is not None:
            dataset = load_dataset(config.dataset)
            datasets = {seed: dataset for seed in seeds}
        else:
            datasets = {seed: simulate_from_config(config, seed) for seed in seeds}
        threads = settings.HEF_THREADS
        params = config.filter_params

        if options.get("sweep"):
            rows, best = noise_sweep(
                datasets, config.filters, params, config.sweep, threads=threads, margin=config.margin
            )
            write_csv(
                out_dir / "sweep.csv",
                SWEEP_COLUMNS,
                [
                    {
                        "filter": row.filter,
                        "sigma_trans": row.sigma_trans,
                        "sigma_rot": row.sigma_rot,
                        "nll": row.nll,
                        "selected": int(best.get(row.filter) == row),
                    }
                    for row in rows
                ],
            )
            runs = []
            for name in config.filters:
                chosen = best[name]
                self.stdout.write(
                    f"{name}: sigma_trans={chosen.sigma_trans:g} sigma_rot={chosen.sigma_rot:g} "
                    f"nll={chosen.nll:.3f}"
                )
                runs.extend(
                    run_experiment(
                        datasets,
                        [name],
                        params.with_noise(chosen.sigma_trans, chosen.sigma_rot),
                        threads=threads,
                        margin=config.margin,
                        dump_dir=self.dump_dir(out_dir, options),
                    )
                )
        else:
            runs = run_experiment(
                datasets,
                config.filters,
                params,
                threads=threads,
                margin=config.margin,
                dump_dir=self.dump_dir(out_dir, options),
            )

        write_outputs(out_dir, runs, datasets)
        for run in runs:
            report = run.report
            self.stdout.write(
                f"{run.name} seed {run.seed}: ATE(mode)={report.ate_mode:.4f} "
                f"ATE(mean)={report.ate_mean:.4f} NLL={report.nll:.3f}"
            )
        self.stdout.write(f"Wrote {len(runs)} run logs to {out_dir / 'runs'}")

    def dump_dir(self, out_dir, options):
        return out_dir / "beliefs" if options.get("dump_beliefs") else None
