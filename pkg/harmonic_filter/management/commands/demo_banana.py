from harmonic_filter.management.base import HefCommand, parse_filters
from harmonic_filter.runner import run_banana, write_csv

BANANA_COLUMNS = (
    "filter",
    "t",
    "tv_full",
    "tv_xy",
    "mode_x",
    "mode_y",
    "mode_theta",
    "mean_x",
    "mean_y",
    "mean_theta",
)


class Command(HefCommand):
    help = "Propagate a rectangular prior through every filter and compare with a particle oracle"

    def add_command_arguments(self, parser):
        parser.add_argument("--filters", help="Comma-separated subset of hef,ekf,histf,pf")
        parser.add_argument("--seed", type=int, help="Seed for particle sampling")

    def config_overrides(self, options):
        if options.get("filters"):
            return {"filters": parse_filters(options["filters"])}
        return None

    def run(self, config, out_dir, **options):
        seed = config.seed if options.get("seed") is None else options["seed"]
        result = run_banana(config, seed=seed, dump_dir=out_dir / "beliefs")
        write_csv(out_dir / "banana.csv", BANANA_COLUMNS, result.rows)
        last = config.banana.n_steps
        for row in result.rows:
            if row["t"] == last:
                self.stdout.write(
                    f"{row['filter']}: TV={row['tv_full']:.3f} TV(xy)={row['tv_xy']:.3f} at t={last}"
                )
        self.stdout.write(f"Wrote {out_dir / 'banana.csv'}")
