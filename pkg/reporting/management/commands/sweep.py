from experiments.sweep import intensity_sweep

from ...csv_io import write_audit_csv, write_sweep_csv
from ...plots import render_sweep
from ..base import LabCommand


class Command(LabCommand):
    help = "Sweep the source intensity at the maximum: kappa table CSV plus kappa-vs-intensity SVG"

    def add_command_arguments(self, parser):
        parser.add_argument(
            "--no-measure",
            action="store_true",
            help="kappa^det only, no simulated kappa",
        )

    def run(self, config, /, **options):
        measure = not options["no_measure"]
        sweep = config.sweep
        rows = intensity_sweep(
            config.interferometer_config(),
            config.sweep_scale_factors(),
            config.detector_model(),
            config.sweep_phase(),
            sweep["n_runs"],
            sweep["leg_duration_s"],
            config.seed,
            measure=measure,
            statistics=config.statistics(),
            noise=config.noise(),
            violation_strength=config.measurement["violation_strength"],
            threads=config.threads,
        )
        output = config.output_path()
        table_path = output / "sweep.csv"
        write_sweep_csv(rows, table_path)
        render_sweep(table_path, output / "sweep.svg")
        self.written(table_path)
        self.written(output / "sweep.svg")
        if measure:
            for index, row in enumerate(rows):
                path = output / f"sweep_audit_{index}.csv"
                write_audit_csv(row.estimate.legs, path)
                self.written(path)
        for row in rows:
            measured = ""
            if measure:
                corrected = row.corrected
                measured = (
                    f"  kappa_exp = {row.kappa_exp:.5f} +- {row.kappa_stderr:.5f}"
                    f"  kappa_corrected = {corrected.kappa:.5f}"
                    f" ({corrected.significance:.2f} sigma)"
                )
            self.stdout.write(
                f"r_abc_det_cps = {row.r_abc_det:.0f}  kappa_det = {row.kappa_det:.5f}{measured}"
            )
