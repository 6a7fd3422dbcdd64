import logging
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from threepath.exceptions import LabError

from ..config import RunConfig

# --verbosity 0..3 to the root log level.
LOG_LEVELS = {0: logging.WARNING, 1: logging.WARNING, 2: logging.INFO, 3: logging.DEBUG}

# Command-line flag dest -> (section, key) of the RunConfig it overrides.
OVERRIDES = {
    "seed": ("run", "seed"),
    "out": ("run", "output_dir"),
    "threads": ("run", "threads"),
    "tau_ns": ("detector", "dead_time_ns"),
    "dark_cps": ("detector", "dark_rate_cps"),
    "rate_a_cps": ("interferometer", "rate_a_cps"),
    "rate_b_cps": ("interferometer", "rate_b_cps"),
    "rate_c_cps": ("interferometer", "rate_c_cps"),
    "phi_a_pi": ("interferometer", "phi_a_pi"),
    "phi_c_pi": ("interferometer", "phi_c_pi"),
}


class LabCommand(BaseCommand):
    """
    Base of every laboratory subcommand.

    Loads the RunConfig named by ``--config``, applies the flag overrides
    and hands the validated config to ``run``. Laboratory errors leave as
    CommandError with return code 2.
    """

    requires_system_checks: list = []

    def add_arguments(self, parser):
        parser.add_argument("--config", help="RunConfig INI file")
        parser.add_argument("--seed", help="base seed (unsigned 64-bit)")
        parser.add_argument("--out", help="output directory")
        parser.add_argument("--threads", help="worker threads")
        parser.add_argument("--tau-ns", help="detector dead time (ns)")
        parser.add_argument("--dark-cps", help="detector dark rate (cps)")
        parser.add_argument("--rate-a-cps", help="incident rate of path A (cps)")
        parser.add_argument("--rate-b-cps", help="incident rate of path B (cps)")
        parser.add_argument("--rate-c-cps", help="incident rate of path C (cps)")
        parser.add_argument("--phi-a-pi", help="phase of path A (units of pi)")
        parser.add_argument("--phi-c-pi", help="phase of path C (units of pi)")
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        pass

    def handle(self, *args, **options):
        overrides = {
            target: options[dest]
            for dest, target in OVERRIDES.items()
            if options.get(dest) is not None
        }
        try:
            config = RunConfig.load(options["config"], overrides)
            level = LOG_LEVELS[max(options["verbosity"], config.verbosity)]
            logging.getLogger().setLevel(level)
            self.run(config, **options)
        except LabError as e:
            raise CommandError(str(e), returncode=2) from e
        except OSError as e:
            raise CommandError(f"{e.filename}: {e.strerror}", returncode=2) from e

    def run(self, config: RunConfig, /, **options):
        raise NotImplementedError("subclasses of LabCommand must provide a run() method")

    def report(self, **values):
        """Print ``key = value`` lines."""
        for key, value in values.items():
            self.stdout.write(f"{key} = {value}")

    def written(self, path: Path):
        self.stdout.write(self.style.SUCCESS(f"wrote {path}"))
