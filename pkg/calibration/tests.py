import math
import tempfile
import warnings
from pathlib import Path
from unittest import mock

import numpy as np
import pytest

from django.test import SimpleTestCase, override_settings

from optics.types import DetectorModel
from threepath.exceptions import (
    ConvergenceError,
    DataFormatError,
    IllConditionedWarning,
    InvalidConfigError,
)

from . import estimator
from .estimator import (
    check_drift,
    estimate_parameters,
    nonlinearity_defect,
    synthesize_quadruples,
)
from .factories import REFERENCE_DETECTOR, QuadrupleMeasurementFactory
from .io import (
    format_report,
    read_quadruples,
    read_result_csv,
    write_quadruples,
    write_result_csv,
)
from .types import CalibrationResult, QuadrupleMeasurement

RATE_LADDER = np.geomspace(1e4, 1e6, 10)


class NonlinearityDefectTest(SimpleTestCase):
    def test_zero_at_generating_parameters(self):
        """Test that a noiseless quadruple has no defect at the true parameters"""
        for combined in (1e4, 1e5, 1e6):
            q = QuadrupleMeasurementFactory(combined=combined)
            defect = nonlinearity_defect(q, 47e-9, 284.0)
            self.assertLess(abs(defect), 1e-9 * combined)

    def test_positive_without_dead_time_correction(self):
        """Test that ignoring the dead time leaves a positive shortfall"""
        q = QuadrupleMeasurementFactory(combined=5e5)
        self.assertGreater(nonlinearity_defect(q, 0.0, 284.0), 0.0)

    def test_dark_only_quadruple(self):
        """Test that a fully blocked quadruple has no defect for any parameters"""
        q = QuadrupleMeasurement(284.0, 284.0, 284.0, 284.0, 10.0)
        for tau, r0 in ((0.0, 0.0), (47e-9, 284.0), (1e-6, 1000.0)):
            self.assertAlmostEqual(nonlinearity_defect(q, tau, r0), 0.0, places=6)

    def test_independent_of_dark_rate(self):
        """Test that r0 cancels from the defect"""
        q = QuadrupleMeasurementFactory(combined=3e5)
        self.assertAlmostEqual(
            nonlinearity_defect(q, 40e-9, 0.0), nonlinearity_defect(q, 40e-9, 900.0), places=6
        )


class QuadrupleMeasurementTest(SimpleTestCase):
    def test_negative_rate_rejected(self):
        """Test that negative rates are rejected"""
        with self.assertRaises(InvalidConfigError):
            QuadrupleMeasurement(-1.0, 10.0, 10.0, 15.0, 1.0)

    def test_superadditive_combined_rate_rejected(self):
        """Test that a combined rate far above the sum is rejected"""
        with self.assertRaises(InvalidConfigError):
            QuadrupleMeasurement(0.0, 1e4, 1e4, 3e4, 10.0)

    def test_zero_duration_rejected(self):
        """Test that legs need a positive duration"""
        with self.assertRaises(InvalidConfigError):
            QuadrupleMeasurement(0.0, 1.0, 1.0, 1.0, 0.0)


class CalibrationResultTest(SimpleTestCase):
    def test_nan_stderr_rejected(self):
        """Test that a NaN standard error is not a valid result"""
        for tau_stderr, r0_stderr in ((math.nan, 1.0), (1e-9, math.nan), (-1e-9, 1.0)):
            with self.subTest(tau_stderr=tau_stderr, r0_stderr=r0_stderr):
                with self.assertRaises(InvalidConfigError):
                    CalibrationResult(47e-9, tau_stderr, 284.0, r0_stderr, (), 10)

    def test_nan_tau_rejected(self):
        """Test that a NaN dead time is not a valid result"""
        with self.assertRaises(InvalidConfigError):
            CalibrationResult(math.nan, 1e-9, 284.0, 1.0, (), 10)


@override_settings(THREEPATH_BOOTSTRAP_RESAMPLES=200)
class EstimateParametersTest(SimpleTestCase):
    def test_noiseless_recovery(self):
        """Test exact recovery from analytic quadruples"""
        data = synthesize_quadruples(REFERENCE_DETECTOR, RATE_LADDER, 10.0, 1, noiseless=True)
        result = estimate_parameters(data)
        self.assertAlmostEqual(result.tau_hat / 47e-9, 1.0, delta=1e-9)
        self.assertAlmostEqual(result.r0_hat / 284.0, 1.0, delta=1e-9)
        self.assertEqual(result.n_quadruples, 10)
        self.assertEqual(len(result.residuals), 10)

    def test_closed_loop_recovery(self):
        """Test recovery of 47 ns and 284 cps from simulated quadruples"""
        data = synthesize_quadruples(REFERENCE_DETECTOR, RATE_LADDER, 10.0, 2024)
        result = estimate_parameters(data, seed=7)
        self.assertLess(abs(result.tau_hat - 47e-9), 3 * result.tau_stderr)
        self.assertLess(abs(result.r0_hat - 284.0), 3 * result.r0_stderr)
        # Of order the quoted 2 ns at comparable statistics.
        self.assertGreater(result.tau_stderr, 0.4e-9)
        self.assertLess(result.tau_stderr, 10e-9)

    def test_null_detector(self):
        """Test that data without dead time gives tau consistent with zero"""
        detector = DetectorModel(dead_time_tau=0.0, dark_rate_R0=284.0)
        data = synthesize_quadruples(detector, RATE_LADDER, 10.0, 5)
        result = estimate_parameters(data, seed=3)
        self.assertLessEqual(result.tau_hat, 3 * result.tau_stderr + 1e-15)

    def test_bootstrap_is_deterministic(self):
        """Test that equal seeds give equal standard errors"""
        data = synthesize_quadruples(REFERENCE_DETECTOR, RATE_LADDER, 10.0, 8)
        first = estimate_parameters(data, seed=11, resamples=50)
        second = estimate_parameters(data, seed=11, resamples=50, threads=4)
        self.assertEqual(first, second)

    def test_objective_has_unique_minimum(self):
        """Test by grid evaluation that the generating point minimizes the defects"""
        data = synthesize_quadruples(REFERENCE_DETECTOR, RATE_LADDER, 10.0, 1, noiseless=True)

        def objective(tau):
            return sum(nonlinearity_defect(q, tau, 284.0) ** 2 for q in data)

        grid = np.linspace(37e-9, 57e-9, 41)
        values = [objective(tau) for tau in grid]
        self.assertEqual(int(np.argmin(values)), 20)
        self.assertTrue(all(value > values[20] for i, value in enumerate(values) if i != 20))

    def test_too_few_quadruples(self):
        """Test that fewer than three quadruples are refused"""
        data = synthesize_quadruples(REFERENCE_DETECTOR, [1e4, 1e6], 10.0, 1, noiseless=True)
        with self.assertRaises(InvalidConfigError):
            estimate_parameters(data)

    def test_too_few_resamples(self):
        """Test that fewer than two bootstrap resamples are refused, zero included"""
        data = synthesize_quadruples(REFERENCE_DETECTOR, RATE_LADDER, 10.0, 1, noiseless=True)
        for resamples in (1, 0, -5):
            with self.subTest(resamples=resamples):
                with self.assertRaisesMessage(InvalidConfigError, "bootstrap resamples"):
                    estimate_parameters(data, resamples=resamples)

    def test_two_resamples_give_finite_errors(self):
        """Test the smallest bootstrap gives finite standard errors"""
        data = synthesize_quadruples(REFERENCE_DETECTOR, RATE_LADDER, 10.0, 4)
        result = estimate_parameters(data, resamples=2, seed=1)
        self.assertTrue(math.isfinite(result.tau_stderr))
        self.assertTrue(math.isfinite(result.r0_stderr))
        self.assertEqual(result.bootstrap_resamples, 2)

    @override_settings(THREEPATH_BOOTSTRAP_RESAMPLES=30)
    def test_default_resamples_from_settings(self):
        """Test that leaving resamples out uses the configured bootstrap size"""
        data = synthesize_quadruples(REFERENCE_DETECTOR, RATE_LADDER, 10.0, 1, noiseless=True)
        self.assertEqual(estimate_parameters(data).bootstrap_resamples, 30)

    def test_narrow_span_warns(self):
        """Test the ill-conditioning warning below one decade"""
        data = synthesize_quadruples(
            REFERENCE_DETECTOR, [1e5, 2e5, 4e5], 10.0, 1, noiseless=True
        )
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            estimate_parameters(data, resamples=20)
        self.assertTrue(any(issubclass(w.category, IllConditionedWarning) for w in caught))

    def test_counting_duration_override(self):
        """Test that the counting duration replaces the per-leg duration"""
        data = synthesize_quadruples(REFERENCE_DETECTOR, RATE_LADDER, 1.0, 1, noiseless=True)
        result = estimate_parameters(data, counting_duration=10.0, resamples=20)
        self.assertAlmostEqual(result.tau_hat / 47e-9, 1.0, delta=1e-9)

    def test_failed_bootstrap_raises(self):
        """Test that a failing minimizer surfaces as a convergence error"""
        data = synthesize_quadruples(REFERENCE_DETECTOR, RATE_LADDER, 10.0, 1, noiseless=True)
        original = estimator._fit
        calls = []

        def failing_fit(*args, **kwargs):
            calls.append(1)
            if len(calls) > 1:
                raise ConvergenceError("no convergence", diagnostics={"status": 0})
            return original(*args, **kwargs)

        with mock.patch.object(estimator, "_fit", side_effect=failing_fit):
            with self.assertRaises(ConvergenceError) as raised:
                estimate_parameters(data, resamples=20)
        self.assertEqual(raised.exception.diagnostics["failed"], 20)


class DriftCheckTest(SimpleTestCase):
    def test_stable_repeats_pass(self):
        """Test that simulated repeats without drift are not flagged"""
        data = synthesize_quadruples(REFERENCE_DETECTOR, RATE_LADDER, 10.0, 4, repeats=True)
        self.assertEqual(check_drift(data), ())

    def test_drifting_quadruple_flagged(self):
        """Test that a repeated leg 10% off is flagged"""
        q = QuadrupleMeasurement(284.0, 1e5, 1e5, 1.9e5, 10.0, 1.1e5, 1e5)
        self.assertEqual(check_drift([QuadrupleMeasurementFactory(), q]), (1,))


class CalibrationFilesTest(SimpleTestCase):
    def setUp(self):
        self.directory = tempfile.TemporaryDirectory()
        self.path = Path(self.directory.name)

    def tearDown(self):
        self.directory.cleanup()

    def test_quadruple_csv_round_trip(self):
        """Test that written quadruples read back"""
        data = synthesize_quadruples(REFERENCE_DETECTOR, RATE_LADDER, 10.0, 4, repeats=True)
        write_quadruples(data, self.path / "q.csv")
        loaded = read_quadruples(self.path / "q.csv")
        self.assertEqual(len(loaded), len(data))
        for original, read in zip(data, loaded):
            self.assertTrue(math.isclose(original.rate_ab, read.rate_ab, rel_tol=1e-9))
            self.assertTrue(math.isclose(original.rate_a_repeat, read.rate_a_repeat, rel_tol=1e-9))

    def test_header(self):
        """Test the column layout of the quadruple CSV"""
        write_quadruples([QuadrupleMeasurementFactory()], self.path / "q.csv")
        header = (self.path / "q.csv").read_text().splitlines()[0]
        self.assertEqual(header, "dark_cps,a_cps,b_cps,ab_cps,duration_s")

    def test_malformed_row_named(self):
        """Test that a bad value names its line"""
        (self.path / "bad.csv").write_text(
            "dark_cps,a_cps,b_cps,ab_cps,duration_s\n"
            "284,1000,1000,1700,10\n"
            "284,abc,1000,1700,10\n"
        )
        with self.assertRaisesRegex(DataFormatError, "line 3"):
            read_quadruples(self.path / "bad.csv")

    def test_missing_column(self):
        """Test that a missing column is reported"""
        (self.path / "bad.csv").write_text("dark_cps,a_cps,b_cps\n1,2,3\n")
        with self.assertRaisesRegex(DataFormatError, "ab_cps"):
            read_quadruples(self.path / "bad.csv")

    def test_report_and_result_csv(self):
        """Test the flat report and the machine-readable result"""
        result = CalibrationResult(
            tau_hat=47e-9,
            tau_stderr=2e-9,
            r0_hat=284.0,
            r0_stderr=3.0,
            residuals=(0.5, -0.25),
            n_quadruples=2,
            bootstrap_resamples=1000,
        )
        report = format_report(result)
        self.assertIn("tau_ns = 47.0000", report)
        self.assertIn("residual_1_cps = -0.25", report)
        write_result_csv(result, self.path / "result.csv")
        loaded = read_result_csv(self.path / "result.csv")
        self.assertAlmostEqual(loaded["tau_s"], 47e-9)
        self.assertEqual(loaded["n_quadruples"], 2)


@pytest.mark.slow
class CalibrationCoverageTest(SimpleTestCase):
    def test_two_sigma_coverage(self):
        """Test that the 2-sigma bootstrap interval covers the true tau in >= 90% of repetitions"""
        covered = 0
        for repetition in range(200):
            data = synthesize_quadruples(REFERENCE_DETECTOR, RATE_LADDER, 10.0, repetition)
            result = estimate_parameters(data, seed=repetition, resamples=200)
            covered += abs(result.tau_hat - 47e-9) <= 2 * result.tau_stderr
        self.assertGreaterEqual(covered, 180)
