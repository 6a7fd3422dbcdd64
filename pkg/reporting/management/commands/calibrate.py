import warnings

from calibration.estimator import estimate_parameters
from calibration.io import format_report, read_quadruples, write_report, write_result_csv
from threepath.exceptions import IllConditionedWarning

from ..base import LabCommand


class Command(LabCommand):
    help = "Estimate dead time and dark rate from a quadruple CSV"

    def add_command_arguments(self, parser):
        parser.add_argument("quadruples", help="CSV with dark_cps,a_cps,b_cps,ab_cps,duration_s")
        parser.add_argument(
            "--counting-duration-s", type=float, help="override the per-row leg duration"
        )
        parser.add_argument("--resamples", type=int, help="bootstrap resamples")

    def run(self, config, /, **options):
        data = read_quadruples(options["quadruples"])
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", IllConditionedWarning)
            result = estimate_parameters(
                data,
                options["counting_duration_s"],
                resamples=options["resamples"],
                seed=config.seed,
                threads=config.threads,
            )
        for warning in caught:
            self.stderr.write(self.style.WARNING(f"warning: {warning.message}"))

        output = config.output_path()
        write_report(result, output / "calibration_report.txt")
        write_result_csv(result, output / "calibration_result.csv")
        self.stdout.write(format_report(result), ending="")
        self.written(output / "calibration_report.txt")
        self.written(output / "calibration_result.csv")
