from experiments.protocol import predict_kappa_det, predicted_kappa, scale_for_detected_rate
from threepath.exceptions import InvalidConfigError

from ..base import LabCommand


def _clean(value: float) -> float:
    # No "-0.000000" for a vanishing prediction.
    return round(value, 12) + 0.0


class Command(LabCommand):
    help = "Predict kappa^det from detector nonlinearity alone (no simulation)"

    def add_command_arguments(self, parser):
        parser.add_argument("--det-a-cps", type=float, help="measured single-path rate A")
        parser.add_argument("--det-b-cps", type=float, help="measured single-path rate B")
        parser.add_argument("--det-c-cps", type=float, help="measured single-path rate C")
        parser.add_argument(
            "--target-abc-cps",
            type=float,
            help="scale the single-path rates so the detected R_ABC reaches this value",
        )

    def run(self, config, /, **options):
        detector = config.detector_model()
        interferometer = config.interferometer_config()
        phase = interferometer.phase
        singles = [options["det_a_cps"], options["det_b_cps"], options["det_c_cps"]]
        if any(value is not None for value in singles):
            if None in singles:
                raise InvalidConfigError("give all of --det-a-cps, --det-b-cps, --det-c-cps")
            self.report(kappa_det=f"{_clean(predict_kappa_det(singles, detector, phase)):.6f}")
            return
        scale = 1.0
        if options["target_abc_cps"] is not None:
            scale = scale_for_detected_rate(
                interferometer, detector, phase, options["target_abc_cps"]
            )
        value = predicted_kappa(interferometer.scaled(scale), detector)
        self.report(scale=f"{scale:.6g}", kappa_det=f"{_clean(value):.6f}")
