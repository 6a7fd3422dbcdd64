import tempfile
from io import StringIO

from django.conf import settings
from django.test import SimpleTestCase

from .cli import SUBCOMMANDS, cli_dispatch
from .exceptions import ConvergenceError, LabError, SaturationError


class CliDispatchTest(SimpleTestCase):
    def setUp(self):
        self.stdout = StringIO()
        self.stderr = StringIO()
        self.directory = tempfile.TemporaryDirectory()
        self.addCleanup(self.directory.cleanup)

    def dispatch(self, *argv) -> int:
        return cli_dispatch(list(argv), stdout=self.stdout, stderr=self.stderr)

    def test_predict_succeeds(self):
        """Test that a successful subcommand exits 0 and prints its result"""
        code = self.dispatch("predict", "--tau-ns", "0", "--out", self.directory.name)
        self.assertEqual(code, 0)
        self.assertIn("kappa_det = 0.000000", self.stdout.getvalue())

    def test_unknown_subcommand(self):
        """Test that an unknown subcommand is a usage error"""
        self.assertEqual(self.dispatch("interfere"), 1)
        self.assertTrue(self.stderr.getvalue().startswith("error: unknown subcommand"))
        self.assertIn("usage:", self.stderr.getvalue())

    def test_missing_subcommand(self):
        """Test that no arguments is a usage error"""
        self.assertEqual(self.dispatch(), 1)
        self.assertIn("error: missing subcommand", self.stderr.getvalue())

    def test_unknown_flag(self):
        """Test that an unknown flag is a usage error"""
        self.assertEqual(self.dispatch("predict", "--bogus-flag", "3"), 1)
        self.assertTrue(self.stderr.getvalue().startswith("error: "))

    def test_runtime_error(self):
        """Test that a laboratory error exits 2 with an error: prefix"""
        code = self.dispatch("predict", "--config", f"{self.directory.name}/missing.ini")
        self.assertEqual(code, 2)
        self.assertTrue(self.stderr.getvalue().startswith("error: cannot read config"))

    def test_invalid_override(self):
        """Test that an invalid override value exits 2 before any run"""
        code = self.dispatch("kappa", "--tau-ns", "-4", "--out", self.directory.name)
        self.assertEqual(code, 2)
        self.assertIn("[detector] dead_time_ns", self.stderr.getvalue())

    def test_help(self):
        """Test that --help lists every subcommand and exits 0"""
        self.assertEqual(self.dispatch("--help"), 0)
        for name in SUBCOMMANDS:
            self.assertIn(name, self.stdout.getvalue())


class SettingsTest(SimpleTestCase):
    """Test Django settings configuration"""

    def test_installed_apps(self):
        """Test that every laboratory app is installed"""
        for app in ("threepath", "optics", "photonsim", "calibration", "experiments", "reporting"):
            self.assertIn(app, settings.INSTALLED_APPS)

    def test_no_database(self):
        """Test that the laboratory runs without a database"""
        engine = settings.DATABASES.get("default", {}).get("ENGINE", "django.db.backends.dummy")
        self.assertEqual(engine, "django.db.backends.dummy")

    def test_laboratory_settings(self):
        """Test that the laboratory settings have usable values"""
        self.assertGreater(settings.THREEPATH_MAX_EXPECTED_EVENTS, 0)
        self.assertGreater(settings.THREEPATH_EVENT_CHUNK, 0)
        self.assertGreaterEqual(settings.THREEPATH_THREADS, 1)
        self.assertTrue(settings.THREEPATH_VERIFY_DEAD_TIME)


class ExceptionsTest(SimpleTestCase):
    def test_hierarchy(self):
        """Test that laboratory errors share one base and keep their builtin kinds"""
        self.assertTrue(issubclass(SaturationError, LabError))
        self.assertTrue(issubclass(SaturationError, ValueError))
        self.assertTrue(issubclass(ConvergenceError, RuntimeError))

    def test_convergence_diagnostics(self):
        """Test that ConvergenceError keeps its diagnostics"""
        error = ConvergenceError("no fit", diagnostics={"status": -1})
        self.assertEqual(error.diagnostics, {"status": -1})
        self.assertEqual(ConvergenceError("no fit").diagnostics, {})
