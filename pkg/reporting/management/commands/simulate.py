import contextlib

from optics.formulas import incident_rate
from optics.types import PathSet
from photonsim.seeding import derive_seed
from photonsim.simulation import SamplingMethod, leg_rate, simulate_stream
from photonsim.types import SimulationRun

from ..base import LabCommand


class Command(LabCommand):
    help = "Simulate one shutter combination and print its CountRecord"

    def add_command_arguments(self, parser):
        parser.add_argument("--paths", default="ABC", help="open paths, e.g. A, AB, ABC or 0")
        parser.add_argument("--duration-s", type=float, help="counting window (default: leg duration)")
        parser.add_argument(
            "--method",
            choices=[method.value for method in SamplingMethod],
            default=SamplingMethod.AUTO.value,
        )
        parser.add_argument("--dump-events", help="write detected timestamps, one per line")

    def run(self, config, /, **options):
        paths = PathSet.from_label(options["paths"])
        seed = derive_seed(config.seed, 0, paths.value)
        duration = options["duration_s"] or config.measurement["leg_duration_s"]
        simulation = SimulationRun(
            incident_rate=leg_rate(
                incident_rate(config.interferometer_config(), paths), config.noise(), seed
            ),
            detector=config.detector_model(),
            duration=duration,
            rng_seed=seed,
            statistics=config.statistics(),
        )
        with contextlib.ExitStack() as stack:
            sink = None
            if options["dump_events"]:
                sink = stack.enter_context(open(options["dump_events"], "w", encoding="utf-8"))
            record = simulate_stream(
                simulation,
                method=SamplingMethod(options["method"]),
                path_set=paths,
                event_sink=sink,
            )
        self.report(
            combination=paths.label,
            detected_count=record.detected_count,
            duration_s=f"{record.duration:.10g}",
            rate_cps=f"{record.rate:.10g}",
            seed=record.rng_seed,
        )
        if options["dump_events"]:
            self.written(options["dump_events"])
