from harmonic_filter.analysis import bench_convolution, speedups
from harmonic_filter.management.base import HefCommand
from harmonic_filter.runner import write_csv

BENCH_COLUMNS = ("method", "nx", "ny", "ntheta", "seconds")


class Command(HefCommand):
    help = "Time direct against spectral SE(2) convolution"

    def add_command_arguments(self, parser):
        parser.add_argument("--repetitions", type=int, help="Timed runs per method and size")
        parser.add_argument("--seed", type=int, help="Seed for the random test densities")

    def config_overrides(self, options):
        if options.get("repetitions") is not None:
            return {"bench": {"repetitions": options["repetitions"]}}
        return None

    def run(self, config, out_dir, **options):
        seed = config.seed if options.get("seed") is None else options["seed"]
        rows = bench_convolution(config.bench.sizes, config.bench.repetitions, seed)
        write_csv(
            out_dir / "bench.csv",
            BENCH_COLUMNS,
            [
                {
                    "method": r.method,
                    "nx": r.size[0],
                    "ny": r.size[1],
                    "ntheta": r.size[2],
                    "seconds": r.seconds,
                }
                for r in rows
            ],
        )
        for size, ratio in speedups(rows).items():
            self.stdout.write(f"{'x'.join(map(str, size))}: spectral is {ratio:.1f}x faster")
        self.stdout.write(f"Wrote {out_dir / 'bench.csv'}")
