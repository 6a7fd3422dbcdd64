import numpy as np

from calibration.estimator import synthesize_quadruples
from calibration.io import write_quadruples

from ..base import LabCommand

# Combined incident rates spanning the calibration range of the counter.
DEFAULT_RATES = tuple(float(rate) for rate in np.geomspace(1e4, 3e6, 12))


def _float_list(text: str) -> tuple[float, ...]:
    return tuple(float(item) for item in text.split(",") if item.strip())


class Command(LabCommand):
    help = "Generate a quadruple calibration dataset with the photon simulator"

    def add_command_arguments(self, parser):
        parser.add_argument(
            "--rates-cps",
            type=_float_list,
            default=DEFAULT_RATES,
            help="comma separated combined incident rates",
        )
        parser.add_argument("--duration-s", type=float, default=10.0)
        parser.add_argument("--split", type=float, default=0.5, help="share of beam A")
        parser.add_argument("--repeats", action="store_true", help="add repeated A/B legs")
        parser.add_argument("--noiseless", action="store_true", help="analytic rates, no counting noise")
        parser.add_argument("--output", help="CSV path (default: <out>/quadruples.csv)")

    def run(self, config, /, **options):
        data = synthesize_quadruples(
            config.detector_model(),
            options["rates_cps"],
            options["duration_s"],
            config.seed,
            split=options["split"],
            noiseless=options["noiseless"],
            repeats=options["repeats"],
        )
        path = options["output"] or config.output_path() / "quadruples.csv"
        write_quadruples(data, path)
        self.written(path)
