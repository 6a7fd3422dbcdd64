from experiments.protocol import measure_kappa, predicted_kappa
from photonsim.simulation import SamplingMethod

from ...csv_io import write_audit_csv
from ..base import LabCommand


class Command(LabCommand):
    help = "Measure kappa at one phase point with the randomized eight-leg protocol"

    def add_command_arguments(self, parser):
        parser.add_argument("--runs", type=int, help="number of runs (default: [measurement] n_runs)")
        parser.add_argument(
            "--method",
            choices=[method.value for method in SamplingMethod],
            default=SamplingMethod.AUTO.value,
        )

    def run(self, config, /, **options):
        interferometer = config.interferometer_config()
        detector = config.detector_model()
        measurement = config.measurement
        estimate = measure_kappa(
            interferometer,
            detector,
            interferometer.phase,
            options["runs"] or measurement["n_runs"],
            measurement["leg_duration_s"],
            config.seed,
            randomize=measurement["randomize_order"],
            statistics=config.statistics(),
            noise=config.noise(),
            violation_strength=measurement["violation_strength"],
            threads=config.threads,
            method=SamplingMethod(options["method"]),
        )
        corrected = estimate.corrected(predicted_kappa(interferometer, detector))
        path = config.output_path() / "kappa_audit.csv"
        write_audit_csv(estimate.legs, path)
        self.report(
            kappa_mean=f"{estimate.kappa_mean:.6g}",
            kappa_stderr=f"{estimate.kappa_stderr:.6g}",
            kappa_det_pred=f"{corrected.kappa_det:.6g}",
            kappa_corrected=f"{corrected.kappa:.6g}",
            kappa_significance=f"{corrected.significance:.3g}",
            epsilon_mean_cps=f"{estimate.epsilon_mean:.6g}",
            delta_mean_cps=f"{estimate.delta_mean:.6g}",
            n_runs=estimate.n_runs,
        )
        self.written(path)
