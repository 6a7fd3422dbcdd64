"""
``python -m threepath <subcommand>``: the laboratory's command line.

Each subcommand is a management command of the reporting app. Exit codes:
0 on success, 1 on a usage error, 2 when the laboratory reports an error.
Errors go to standard error behind an ``error:`` prefix.
"""

import os
import sys

import django

SUBCOMMANDS = {
    "simulate": "simulate one shutter combination",
    "calibrate": "estimate dead time and dark rate from quadruples",
    "quadruples": "generate a calibration dataset",
    "scan": "phase-space raster with contour graphics",
    "sweep": "intensity sweep at the maximum (kappa table CSV)",
    "kappa": "measure kappa at one phase point",
    "predict": "kappa^det from detector nonlinearity, no simulation",
}


def usage() -> str:
    lines = ["usage: threepath <subcommand> [options]", "", "subcommands:"]
    lines += [f"  {name:<11} {text}" for name, text in SUBCOMMANDS.items()]
    lines += ["", "threepath <subcommand> --help shows the options of one subcommand."]
    return "\n".join(lines) + "\n"


def cli_dispatch(argv=None, stdout=None, stderr=None) -> int:
    os.environ.setdefault("DJANGO_SETTINGS_MODULE", "threepath.settings")
    django.setup()

    from django.core.management import load_command_class
    from django.core.management.base import CommandError

    from threepath.exceptions import LabError

    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0] in ("-h", "--help"):
        stdout.write(usage())
        return 0
    if not argv or argv[0] not in SUBCOMMANDS:
        problem = "missing subcommand" if not argv else f"unknown subcommand {argv[0]!r}"
        stderr.write(f"error: {problem}\n{usage()}")
        return 1

    name, arguments = argv[0], argv[1:]
    command = load_command_class("reporting", name)
    parser = command.create_parser("threepath", name)
    try:
        options = parser.parse_args(arguments)
    except CommandError as e:
        stderr.write(f"error: {str(e).removeprefix('Error: ')}\n{parser.format_usage()}")
        return 1
    except SystemExit as e:
        # --help
        return 0 if not e.code else 1

    cmd_options = vars(options)
    args = cmd_options.pop("args", ())
    try:
        command.execute(*args, stdout=stdout, stderr=stderr, **cmd_options)
    except (CommandError, LabError) as e:
        stderr.write(f"error: {e}\n")
        return 2
    return 0


def main():
    sys.exit(cli_dispatch())
