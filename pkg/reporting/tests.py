import math
import tempfile
from io import StringIO
from pathlib import Path

import numpy as np

from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, override_settings

from experiments.presets import (
    PLATE_ORIGIN,
    REFERENCE_CONFIG,
    REFERENCE_DETECTOR,
    REFERENCE_SWEEP,
    reference_scan,
)
from experiments.protocol import measure_kappa
from experiments.scan import phase_grid_from_angles, scan_phase_space
from experiments.types import ScanSpec, SweepRow
from optics.types import PhasePlateGeometry, PhasePoint
from photonsim.types import SourceMode
from threepath.exceptions import DataFormatError, InvalidConfigError

from .config import RunConfig
from .csv_io import (
    read_audit_csv,
    read_grid_csv,
    read_sweep_csv,
    write_audit_csv,
    write_grid_csv,
    write_sweep_csv,
)
from .plots import render_contour, render_sweep

GRID_HEADER = "phi_A,phi_C,r_abc_det_cps,kappa_mean,kappa_stderr,kappa_det_pred\n"


def parse_report(text: str) -> dict[str, str]:
    values = {}
    for line in text.splitlines():
        key, separator, value = line.partition(" = ")
        if separator:
            values[key.strip()] = value.strip()
    return values


class TempDirectoryMixin:
    def setUp(self):
        super().setUp()
        self.directory = tempfile.TemporaryDirectory()
        self.addCleanup(self.directory.cleanup)
        self.path = Path(self.directory.name)

    def write_text(self, name: str, text: str) -> Path:
        path = self.path / name
        path.write_text(text, encoding="utf-8")
        return path


class RunConfigTest(TempDirectoryMixin, SimpleTestCase):
    def test_defaults_are_reference_parameters(self):
        """Test that an empty config gives the reference detector and rates"""
        config = RunConfig.load()
        detector = config.detector_model()
        self.assertAlmostEqual(detector.dead_time_tau, 47e-9)
        self.assertEqual(detector.dark_rate_R0, 284.0)
        self.assertEqual(config.interferometer_config(), REFERENCE_CONFIG)
        self.assertEqual(config.sweep["target_rates_cps"], tuple(row.r_abc_det for row in REFERENCE_SWEEP))
        self.assertIsNone(config.plates)

    def test_units_are_converted(self):
        """Test that file units become SI units in the domain types"""
        path = self.write_text(
            "run.ini",
            "[detector]\ndead_time_ns = 20\n[interferometer]\nphi_a_pi = 0.5\n"
            "[source]\nstatistics = regular_emitter\nperiod_ns = 100\n",
        )
        config = RunConfig.load(path)
        self.assertAlmostEqual(config.detector_model().dead_time_tau, 20e-9)
        self.assertAlmostEqual(config.interferometer_config().phase.phi_A, math.pi / 2)
        statistics = config.statistics()
        self.assertIs(statistics.mode, SourceMode.REGULAR_EMITTER)
        self.assertAlmostEqual(statistics.period, 100e-9)

    def test_round_trip(self):
        """Test that re-parsing to_ini output gives an equal config"""
        path = self.write_text(
            "run.ini",
            "[run]\nseed = 18446744073709551615\nthreads = 3\n"
            "[interferometer]\nrate_a_cps = 1234.5678\nphi_c_pi = 0.19\nvisibility_bc = 0.97\n"
            "[source]\nintensity_noise = 0.02\nstatistics = regular_emitter\nperiod_ns = 50\n"
            "[measurement]\nrandomize_order = no\nviolation_strength = 0.1\n"
            "[sweep]\nscale_factors = 1, 2.5, 10\n"
            "[plates]\nthickness_mm = 1.1\nangle_a_stop_deg = 12\n",
        )
        config = RunConfig.load(path)
        again = RunConfig.load(self.write_text("again.ini", config.to_ini()))
        self.assertEqual(again, config)
        self.assertEqual(again.to_ini(), config.to_ini())

    def test_overrides_apply_before_validation(self):
        """Test that command-line overrides replace file values"""
        path = self.write_text("run.ini", "[detector]\ndead_time_ns = 47\n")
        config = RunConfig.load(path, {("detector", "dead_time_ns"): "0", ("run", "seed"): "9"})
        self.assertTrue(config.detector_model().is_linear)
        self.assertEqual(config.seed, 9)

    def test_unknown_key_is_rejected(self):
        """Test that a misspelt key fails and is named with its section"""
        path = self.write_text("run.ini", "[detector]\ndead_time = 47\n")
        with self.assertRaisesMessage(InvalidConfigError, "[detector] dead_time: unknown key"):
            RunConfig.load(path)

    def test_unknown_section_is_rejected(self):
        """Test that an unknown section fails"""
        path = self.write_text("run.ini", "[laser]\npower_mw = 3\n")
        with self.assertRaisesMessage(InvalidConfigError, "laser"):
            RunConfig.load(path)

    def test_every_field_error_is_listed(self):
        """Test that all invalid fields are reported together"""
        path = self.write_text(
            "run.ini", "[detector]\nefficiency = 0\ndark_rate_cps = -1\n[run]\nthreads = 0\n"
        )
        with self.assertRaises(InvalidConfigError) as caught:
            RunConfig.load(path)
        message = str(caught.exception)
        self.assertIn("[detector] efficiency", message)
        self.assertIn("[detector] dark_rate_cps", message)
        self.assertIn("[run] threads", message)

    def test_invalid_values(self):
        """Test that physically invalid values fail before any run"""
        cases = {
            "[source]\nstatistics = regular_emitter\n": "period_ns",
            "[interferometer]\nvisibility_ab = 1.5\n": "visibility_ab",
            "[measurement]\nleg_duration_s = 0\n": "leg duration",
            "[measurement]\nrandomize_order = maybe\n": "not a boolean",
            "[scan]\nphi_a_start_pi = 2\nphi_a_stop_pi = 1\n": "phi_a_stop_pi",
            "[sweep]\ntarget_rates_cps = 1e4, x\n": "comma separated",
            "[sweep]\ntarget_rates_cps = 1e4\nscale_factors = 2\n": "exactly one",
            "[plates]\nangle_c_start_deg = 5\nangle_c_stop_deg = 4\n": "angle_c_stop_deg",
            "[run]\nseed = -1\n": "[run] seed",
        }
        for text, fragment in cases.items():
            with self.subTest(text=text):
                path = self.write_text("run.ini", text)
                with self.assertRaisesMessage(InvalidConfigError, fragment):
                    RunConfig.load(path)

    def test_missing_file(self):
        """Test that an unreadable config file is a config error"""
        with self.assertRaisesMessage(InvalidConfigError, "cannot read config"):
            RunConfig.load(self.path / "missing.ini")

    def test_scale_factors_replace_default_targets(self):
        """Test that naming scale factors alone is enough for a sweep"""
        path = self.write_text("run.ini", "[sweep]\nscale_factors = 1, 2\n")
        config = RunConfig.load(path)
        self.assertIsNone(config.sweep["target_rates_cps"])
        self.assertEqual(config.sweep_scale_factors(), [1.0, 2.0])

    def test_target_rates_become_scale_factors(self):
        """Test that target rates are solved for scale factors"""
        factors = RunConfig.load().sweep_scale_factors()
        self.assertEqual(len(factors), 4)
        self.assertTrue(all(later > earlier for earlier, later in zip(factors, factors[1:])))

    def test_scan_grid_in_phase(self):
        """Test that the scan section spans the configured phases"""
        spec = RunConfig.load().scan_spec()
        self.assertEqual(spec.shape, (41, 41))
        self.assertAlmostEqual(spec.grid_A[-1], 2 * math.pi)
        self.assertAlmostEqual(spec.origin.phi_A, PLATE_ORIGIN.phi_A)
        self.assertAlmostEqual(spec.origin.phi_C, PLATE_ORIGIN.phi_C)

    def test_scan_grid_from_plate_angles(self):
        """Test that a plates section turns the scan grid into plate angles"""
        path = self.write_text(
            "run.ini",
            "[scan]\nphi_a_points = 5\nphi_c_points = 3\n"
            "[plates]\nangle_a_start_deg = 1\nangle_a_stop_deg = 9\n",
        )
        config = RunConfig.load(path)
        spec = config.scan_spec()
        geometry = PhasePlateGeometry()
        expected = phase_grid_from_angles(np.radians([1.0, 3.0, 5.0, 7.0, 9.0]), geometry)
        np.testing.assert_allclose(spec.grid_A, expected)
        self.assertEqual(spec.shape, (5, 3))

    def test_output_directory_is_created(self):
        """Test that the output directory is created on demand"""
        target = self.path / "nested" / "out"
        config = RunConfig.load(overrides={("run", "output_dir"): str(target)})
        self.assertEqual(config.output_path(), target)
        self.assertTrue(target.is_dir())

    @override_settings(THREEPATH_OUTPUT_DIR="/tmp/threepath-default-output")  # nosec B108
    def test_output_directory_default(self):
        """Test that an empty output_dir falls back to the setting"""
        self.assertEqual(RunConfig.load().output_path(), Path("/tmp/threepath-default-output"))

    def test_output_directory_that_is_a_file(self):
        """Test that an output path blocked by a file is a config error"""
        blocker = self.write_text("blocker", "")
        config = RunConfig.load(overrides={("run", "output_dir"): str(blocker / "out")})
        with self.assertRaises(InvalidConfigError):
            config.output_path()


def small_scan() -> ScanSpec:
    grid = tuple(k * math.pi / 4 for k in range(5))
    return ScanSpec(grid_A=grid, grid_C=grid[:4], runs_per_point=2, leg_duration=1e-2)


class GridCsvTest(TempDirectoryMixin, SimpleTestCase):
    def test_written_grid_reads_back(self):
        """Test that a scan grid CSV is re-ingested with its shape and values"""
        scan = scan_phase_space(small_scan(), REFERENCE_CONFIG, REFERENCE_DETECTOR, measure=False)
        path = self.path / "grid.csv"
        write_grid_csv(scan, path)
        grid = read_grid_csv(path)
        self.assertEqual(grid.field("r_abc_det_cps").shape, (5, 4))
        np.testing.assert_allclose(grid.grid_A, scan.spec.grid_A, rtol=1e-9)
        np.testing.assert_allclose(grid.grid_C, scan.spec.grid_C, rtol=1e-9)
        np.testing.assert_allclose(
            grid.field("r_abc_det_cps"), scan.values("r_abc_det_cps"), rtol=1e-9
        )
        self.assertTrue(np.all(np.isnan(grid.field("kappa_mean"))))

    def test_missing_values_are_empty_cells(self):
        """Test that unmeasured values are written as empty cells"""
        scan = scan_phase_space(small_scan(), REFERENCE_CONFIG, REFERENCE_DETECTOR, measure=False)
        path = self.path / "grid.csv"
        write_grid_csv(scan, path)
        first_row = path.read_text().splitlines()[1].split(",")
        self.assertEqual(first_row[3:5], ["", ""])

    def test_measured_grid_is_byte_identical(self):
        """Test that the same scan seed writes the same bytes, serial or parallel"""
        outputs = []
        for threads in (1, 4):
            scan = scan_phase_space(small_scan(), REFERENCE_CONFIG, REFERENCE_DETECTOR, threads=threads)
            path = self.path / f"grid-{threads}.csv"
            write_grid_csv(scan, path)
            outputs.append(path.read_bytes())
        self.assertEqual(outputs[0], outputs[1])

    def test_ragged_grid_names_line(self):
        """Test that a grid with a missing point names the offending line"""
        path = self.write_text(
            "grid.csv",
            GRID_HEADER + "0,0,1,,,0\n0,1,1,,,0\n1,0,1,,,0\n2,0,1,,,0\n2,1,1,,,0\n",
        )
        with self.assertRaisesMessage(DataFormatError, "line 5"):
            read_grid_csv(path)

    def test_incomplete_last_row(self):
        """Test that a truncated last grid row is rejected"""
        path = self.write_text("grid.csv", GRID_HEADER + "0,0,1,,,0\n0,1,1,,,0\n1,0,1,,,0\n")
        with self.assertRaisesMessage(DataFormatError, "incomplete last grid row"):
            read_grid_csv(path)

    def test_misordered_rows(self):
        """Test that decreasing phi_A rows are rejected"""
        path = self.write_text(
            "grid.csv", GRID_HEADER + "1,0,1,,,0\n1,1,1,,,0\n0,0,1,,,0\n0,1,1,,,0\n"
        )
        with self.assertRaisesMessage(DataFormatError, "line 4"):
            read_grid_csv(path)

    def test_non_numeric_cell(self):
        """Test that a non-numeric value names its line"""
        path = self.write_text("grid.csv", GRID_HEADER + "0,0,1,,,0\n0,1,bright,,,0\n")
        with self.assertRaisesMessage(DataFormatError, "line 3"):
            read_grid_csv(path)

    def test_wrong_header(self):
        """Test that a file with other columns is rejected"""
        path = self.write_text("grid.csv", "a,b\n1,2\n")
        with self.assertRaisesMessage(DataFormatError, "expected columns"):
            read_grid_csv(path)


class SweepAndAuditCsvTest(TempDirectoryMixin, SimpleTestCase):
    def test_sweep_table_reads_back(self):
        """Test that a kappa table CSV is re-ingested with empty measured columns"""
        rows = [SweepRow(1.0, 35925.0, -0.0011), SweepRow(2.0, 111288.0, -0.0033)]
        path = self.path / "sweep.csv"
        write_sweep_csv(rows, path)
        table = read_sweep_csv(path)
        self.assertEqual(list(table["r_abc_det_cps"]), [35925.0, 111288.0])
        self.assertAlmostEqual(table["kappa_det"].iloc[1], -0.0033)
        self.assertTrue(table["kappa_exp"].isna().all())

    def test_audit_legs_read_back(self):
        """Test that audit rows keep combinations and 64-bit seeds"""
        estimate = measure_kappa(
            REFERENCE_CONFIG, REFERENCE_DETECTOR, PhasePoint(), 2, 1e-3, (1 << 64) - 1
        )
        path = self.path / "audit.csv"
        write_audit_csv(estimate.legs, path)
        self.assertEqual(read_audit_csv(path), list(estimate.legs))
        self.assertEqual(len(path.read_text().splitlines()), 17)

    def test_audit_bad_combination(self):
        """Test that an unknown combination label names its line"""
        path = self.write_text(
            "audit.csv",
            "run_index,combination,order_position,count,duration_s,seed\n0,AB,0,5,1,7\n0,AD,1,5,1,8\n",
        )
        with self.assertRaisesMessage(DataFormatError, "line 3"):
            read_audit_csv(path)


class PlotsTest(TempDirectoryMixin, SimpleTestCase):
    def reference_grid(self) -> Path:
        scan = scan_phase_space(reference_scan(), REFERENCE_CONFIG, REFERENCE_DETECTOR, measure=False)
        path = self.path / "reference.csv"
        write_grid_csv(scan, path)
        return path

    def test_constant_field_has_no_contours(self):
        """Test that a constant field is drawn without contour levels"""
        path = self.write_text(
            "flat.csv", GRID_HEADER + "0,0,5,,,0\n0,1,5,,,0\n1,0,5,,,0\n1,1,5,,,0\n"
        )
        drawn = render_contour(path, "kappa_det_pred", self.path / "flat.svg")
        self.assertEqual(drawn.levels, ())
        self.assertIn("<svg", (self.path / "flat.svg").read_text())

    def test_intensity_maximum_is_marked_near_plate_origin(self):
        """Test that the cross sits within one grid cell of the plate maximum"""
        drawn = render_contour(self.reference_grid(), "r_abc_det_cps", self.path / "intensity.svg")
        cell = 2 * math.pi / 40
        self.assertLessEqual(abs(drawn.argmax.phi_A - PLATE_ORIGIN.phi_A), cell)
        self.assertLessEqual(abs(drawn.argmax.phi_C - PLATE_ORIGIN.phi_C), cell)
        self.assertGreater(len(drawn.levels), 2)

    def test_kappa_det_is_negative_where_bright(self):
        """Test that the kappa^det levels drawn in the constructive region are negative"""
        path = self.reference_grid()
        drawn = render_contour(path, "kappa_det_pred", self.path / "kappa.svg")
        grid = read_grid_csv(path)
        intensity = grid.field("r_abc_det_cps")
        kappa = grid.field("kappa_det_pred")
        bright = intensity > 0.5 * intensity.max()
        self.assertTrue(np.all(kappa[bright] < 0.0))
        bright_levels = [level for level in drawn.levels if level >= kappa[bright].min()]
        self.assertTrue(bright_levels)
        self.assertLess(min(drawn.levels), 0.0)

    def test_svg_is_byte_identical(self):
        """Test that rendering twice writes the same bytes"""
        path = self.reference_grid()
        render_contour(path, "kappa_det_pred", self.path / "one.svg")
        render_contour(path, "kappa_det_pred", self.path / "two.svg")
        self.assertEqual(
            (self.path / "one.svg").read_bytes(), (self.path / "two.svg").read_bytes()
        )

    def test_unknown_field(self):
        """Test that an unknown field name is rejected"""
        with self.assertRaises(InvalidConfigError):
            render_contour(self.reference_grid(), "visibility", self.path / "x.svg")

    def test_sweep_graphic(self):
        """Test that the sweep graphic is written as SVG"""
        rows = [SweepRow(1.0, 35925.0, -0.0011), SweepRow(2.0, 111288.0, -0.0033)]
        table = self.path / "sweep.csv"
        write_sweep_csv(rows, table)
        render_sweep(table, self.path / "sweep.svg")
        self.assertTrue((self.path / "sweep.svg").read_text().lstrip().startswith("<?xml"))


class CommandsTest(TempDirectoryMixin, SimpleTestCase):
    def call(self, name, *args) -> dict[str, str]:
        out = StringIO()
        call_command(name, *args, "--out", str(self.path), stdout=out, stderr=StringIO())
        self.output = out.getvalue()
        return parse_report(self.output)

    def test_predict_linear_detector(self):
        """Test that a dead-time-free detector predicts kappa^det = 0"""
        report = self.call("predict", "--tau-ns", "0")
        self.assertEqual(report["kappa_det"], "0.000000")

    def test_predict_brightest_reference_row(self):
        """Test that predict reproduces the brightest reference row"""
        report = self.call("predict", "--target-abc-cps", "451121")
        self.assertAlmostEqual(float(report["kappa_det"]), -0.0134, delta=0.001)

    def test_predict_from_detected_singles(self):
        """Test that predict accepts measured single-path rates"""
        report = self.call("predict", "--det-a-cps", "2080", "--det-b-cps", "5760", "--det-c-cps", "1990")
        self.assertLess(float(report["kappa_det"]), 0.0)

    def test_predict_needs_all_singles(self):
        """Test that a partial set of single-path rates is a runtime error"""
        with self.assertRaises(CommandError) as caught:
            self.call("predict", "--det-a-cps", "2080")
        self.assertEqual(caught.exception.returncode, 2)

    def test_sweep_matches_reference_table(self):
        """Test that the sweep CSV kappa^det column matches the reference table"""
        self.call("sweep", "--no-measure")
        table = read_sweep_csv(self.path / "sweep.csv")
        for expected, value in zip(REFERENCE_SWEEP, table["kappa_det"]):
            self.assertAlmostEqual(value, expected.kappa_det, delta=0.001)
        self.assertTrue((self.path / "sweep.svg").exists())

    def test_simulate_dumps_events(self):
        """Test that the event dump has one line per detected count"""
        dump = self.path / "events.txt"
        report = self.call("simulate", "--paths", "AB", "--duration-s", "0.01", "--dump-events", str(dump))
        self.assertEqual(report["combination"], "AB")
        self.assertEqual(len(dump.read_text().splitlines()), int(report["detected_count"]))

    def test_kappa_audit_is_independent_of_threads(self):
        """Test that the kappa audit CSV is byte-identical serial and parallel"""
        outputs = []
        for threads in ("1", "4"):
            report = self.call("kappa", "--runs", "4", "--threads", threads, "--seed", "11")
            outputs.append((self.path / "kappa_audit.csv").read_bytes())
            self.assertEqual(report["n_runs"], "4")
        self.assertEqual(outputs[0], outputs[1])
        self.assertEqual(len(outputs[0].splitlines()), 33)

    def test_scan_writes_grid_and_graphics(self):
        """Test that scan writes the grid CSV and one SVG per field"""
        config = self.write_text(
            "scan.ini", "[scan]\nphi_a_points = 5\nphi_c_points = 5\nruns_per_point = 2\nleg_duration_s = 0.01\n"
        )
        self.call("scan", "--config", str(config))
        self.assertEqual(read_grid_csv(self.path / "scan_grid.csv").field("kappa_mean").shape, (5, 5))
        for field in ("r_abc_det_cps", "kappa_det_pred", "kappa_mean"):
            self.assertTrue((self.path / f"scan_{field}.svg").exists())

    def test_calibrate_closed_loop(self):
        """Test that calibrating generated quadruples recovers the dead time"""
        self.call("quadruples", "--seed", "3")
        report = self.call(
            "calibrate", str(self.path / "quadruples.csv"), "--resamples", "50", "--seed", "3"
        )
        tau, stderr = float(report["tau_ns"]), float(report["tau_stderr_ns"])
        self.assertLess(abs(tau - 47.0), 3 * stderr)
        self.assertTrue((self.path / "calibration_result.csv").exists())

    def test_calibrate_single_resample(self):
        """Test that a bootstrap of one resample is a runtime error, not a NaN report"""
        self.call("quadruples", "--seed", "3", "--noiseless")
        with self.assertRaises(CommandError) as caught:
            self.call("calibrate", str(self.path / "quadruples.csv"), "--resamples", "1")
        self.assertEqual(caught.exception.returncode, 2)
        self.assertIn("bootstrap resamples", str(caught.exception))
        self.assertFalse((self.path / "calibration_report.txt").exists())

    def test_kappa_reports_corrected_value(self):
        """Test that kappa reports the measured value with kappa^det subtracted"""
        report = self.call("kappa", "--runs", "4", "--seed", "5")
        expected = float(report["kappa_mean"]) - float(report["kappa_det_pred"])
        self.assertAlmostEqual(float(report["kappa_corrected"]), expected, delta=1e-5)
        self.assertIn("kappa_significance", report)

    def test_calibrate_malformed_csv(self):
        """Test that a malformed quadruple file is a runtime error naming the line"""
        path = self.write_text(
            "bad.csv", "dark_cps,a_cps,b_cps,ab_cps,duration_s\n284,1e4,1e4,2e4,1\n284,x,1,1,1\n"
        )
        with self.assertRaisesMessage(CommandError, "line 3"):
            self.call("calibrate", str(path))
