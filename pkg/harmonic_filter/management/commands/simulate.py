from harmonic_filter.datasets import save_dataset
from harmonic_filter.management.base import HefCommand
from harmonic_filter.runner import simulate_from_config


def dataset_name(seed):
    return f"dataset_seed{seed}.jsonl"


class Command(HefCommand):
    help = "Simulate the range-only landmark world and write JSONL datasets"

    def add_command_arguments(self, parser):
        seeds = parser.add_mutually_exclusive_group()
        seeds.add_argument("--seed", type=int, help="Simulate a single seed")
        seeds.add_argument("--seeds", type=int, help="Simulate seeds 0..N-1")
        parser.add_argument(
            "--force", action="store_true", help="Overwrite existing dataset files"
        )

    def run(self, config, out_dir, **options):
        if options.get("seeds") is not None:
            if options["seeds"] < 1:
                raise self.usage_error("must be at least 1", options, field="seeds")
            seeds = list(range(options["seeds"]))
        else:
            seed = options.get("seed")
            seeds = [config.seed if seed is None else seed]
        paths = [out_dir / dataset_name(seed) for seed in seeds]
        if not options.get("force"):
            existing = [str(path) for path in paths if path.exists()]
            if existing:
                raise self.usage_error(
                    f"{', '.join(existing)} already exists; pass --force to overwrite",
                    options,
                    field="out",
                )
        for seed, path in zip(seeds, paths):
            dataset = simulate_from_config(config, seed)
            save_dataset(dataset, path)
            self.stdout.write(f"Wrote {path} ({len(dataset)} steps, seed {seed})")
