from harmonic_filter.analysis import VonMisesMixture, fidelity_sweep
from harmonic_filter.management.base import HefCommand
from harmonic_filter.runner import write_csv

FIDELITY_COLUMNS = ("method", "params", "kappa", "kl")


class Command(HefCommand):
    help = "KL divergence of histogram and harmonic fits to a von Mises mixture"

    def run(self, config, out_dir, **options):
        fidelity = config.fidelity
        mix = VonMisesMixture.equal(fidelity.means, fidelity.kappas[0])
        rows = fidelity_sweep(mix, fidelity.param_counts, fidelity.kappas, fidelity.quadrature_points)
        write_csv(
            out_dir / "fidelity.csv",
            FIDELITY_COLUMNS,
            [{"method": r.method, "params": r.params, "kappa": r.kappa, "kl": r.kl} for r in rows],
        )
        for r in rows:
            self.stdout.write(f"{r.method:9s} P={r.params:<3d} kappa={r.kappa:<4g} KL={r.kl:.3e}")
        self.stdout.write(f"Wrote {out_dir / 'fidelity.csv'}")
