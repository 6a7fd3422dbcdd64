import math

from experiments.scan import scan_phase_space
from experiments.types import SCAN_FIELDS

from ...csv_io import write_grid_csv
from ...plots import render_contour
from ..base import LabCommand


class Command(LabCommand):
    help = "Raster the phase plates: grid CSV plus one contour SVG per field"

    def add_command_arguments(self, parser):
        parser.add_argument(
            "--field",
            action="append",
            choices=SCAN_FIELDS,
            help="field to draw; repeat for several (default: intensity and kappa)",
        )
        parser.add_argument(
            "--no-measure",
            action="store_true",
            help="analytic surfaces only, no simulated kappa",
        )

    def run(self, config, /, **options):
        measure = not options["no_measure"]
        result = scan_phase_space(
            config.scan_spec(),
            config.interferometer_config(),
            config.detector_model(),
            measure=measure,
            statistics=config.statistics(),
            noise=config.noise(),
            violation_strength=config.measurement["violation_strength"],
            threads=config.threads,
        )
        output = config.output_path()
        grid_path = output / "scan_grid.csv"
        write_grid_csv(result, grid_path)
        self.written(grid_path)

        fields = options["field"] or (
            ["r_abc_det_cps", "kappa_det_pred", "kappa_mean"]
            if measure
            else ["r_abc_det_cps", "kappa_det_pred"]
        )
        for field in fields:
            path = output / f"scan_{field}.svg"
            render_contour(grid_path, field, path)
            self.written(path)
        self.report(
            argmax_phi_a_pi=f"{result.argmax.phi_A / math.pi:.4f}",
            argmax_phi_c_pi=f"{result.argmax.phi_C / math.pi:.4f}",
            refined_phi_a_pi=f"{result.refined_max.phi_A / math.pi:.6f}",
            refined_phi_c_pi=f"{result.refined_max.phi_C / math.pi:.6f}",
        )
