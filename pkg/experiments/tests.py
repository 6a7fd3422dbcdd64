import math

import numpy as np
import pytest

from django.test import SimpleTestCase

from optics.factories import InterferometerConfigFactory, LinearDetectorFactory
from optics.formulas import (
    delta,
    detected_inputs,
    detector_forward,
    incident_rate,
    incident_rates,
    kappa,
    plate_angle_to_phase,
)
from optics.types import (
    DetectorModel,
    InterferometerConfig,
    PathSet,
    PhasePlateGeometry,
    PhasePoint,
    SumRuleInputs,
)
from photonsim.seeding import make_rng
from photonsim.types import SourceNoise, SourceStatistics
from photonsim.violation import inject_violation, violation_strength_for_kappa
from threepath.exceptions import (
    DegenerateNormalizationError,
    InvalidConfigError,
    SaturationError,
)

from .presets import (
    KAPPA_BOUND,
    MAXIMUM_PHASE,
    PLATE_ORIGIN,
    REFERENCE_CONFIG,
    REFERENCE_DETECTOR,
    REFERENCE_SWEEP,
    SWEEP_LEG_DURATION,
    SWEEP_NOISE,
    SWEEP_RUNS,
    SWEEP_TARGETS,
    reference_scan,
)
from .protocol import (
    combination_order,
    detected_singles,
    measure_kappa,
    predict_kappa_det,
    predicted_kappa,
    scale_for_detected_rate,
)
from .scan import phase_grid_from_angles, scan_phase_space
from .sweep import intensity_sweep, scale_factors_for_targets
from .types import CorrectedKappa, KappaEstimate, ScanSpec

ABC = PathSet.A | PathSet.B | PathSet.C


def sweep_config(target: float) -> InterferometerConfig:
    factor = scale_for_detected_rate(REFERENCE_CONFIG, REFERENCE_DETECTOR, MAXIMUM_PHASE, target)
    return REFERENCE_CONFIG.scaled(factor)


def sweep_prediction(target: float) -> float:
    config = sweep_config(target)
    singles = detected_singles(config, REFERENCE_DETECTOR)
    return predict_kappa_det(singles, REFERENCE_DETECTOR, MAXIMUM_PHASE)


class PredictKappaDetTest(SimpleTestCase):
    def test_linear_detector_is_null(self):
        """Test that a linear detector predicts no deviation"""
        for phase in (PhasePoint(), PhasePoint(0.4, 2.1), PhasePoint(3.0, -1.0)):
            value = predict_kappa_det((2080.0, 5760.0, 1990.0), LinearDetectorFactory(), phase)
            self.assertAlmostEqual(value, 0.0, places=12)

    def test_reference_sweep_column(self):
        """Test kappa^det at every reference intensity"""
        for row in REFERENCE_SWEEP:
            with self.subTest(rate=row.r_abc_det):
                self.assertAlmostEqual(
                    sweep_prediction(row.r_abc_det), row.kappa_det, delta=0.001
                )

    def test_highest_and_lowest_rows(self):
        """Test the tighter tolerances at 451,121 and 35,925 cps"""
        self.assertAlmostEqual(sweep_prediction(451_121.0), -0.0134, delta=0.0005)
        self.assertAlmostEqual(sweep_prediction(35_925.0), -0.0011, delta=0.0002)

    def test_first_order_scaling(self):
        """Test that kappa^det grows linearly with the detected intensity"""
        slopes = [sweep_prediction(target) / target for target in SWEEP_TARGETS]
        self.assertLess(max(slopes) / min(slopes), 1.05)
        self.assertGreater(max(slopes) / min(slopes), 1 / 1.05)

    def test_reconstructed_scale_hits_target(self):
        """Test that the reconstructed scale gives the requested detected R_ABC"""
        for target in SWEEP_TARGETS:
            config = sweep_config(target)
            detected = detector_forward(incident_rate(config, ABC), REFERENCE_DETECTOR)
            self.assertAlmostEqual(detected / target, 1.0, places=10)

    def test_saturated_single_rate(self):
        """Test that a single-path rate at 1/tau is refused"""
        with self.assertRaises(SaturationError):
            predict_kappa_det((1 / 47e-9, 1e3, 1e3), REFERENCE_DETECTOR, PhasePoint())


class CombinationOrderTest(SimpleTestCase):
    def test_fixed_order(self):
        """Test that the fixed order lists the combinations by bitmask"""
        self.assertEqual(combination_order(1, 0, randomize=False), PathSet.combinations())

    def test_randomized_order_is_a_permutation(self):
        """Test that each run visits all eight combinations once"""
        for run in range(20):
            order = combination_order(1, run)
            self.assertEqual(sorted(p.value for p in order), list(range(8)))

    def test_randomized_order_is_reproducible(self):
        """Test that the order depends only on seed and run index"""
        self.assertEqual(combination_order(5, 3), combination_order(5, 3))
        orders = {combination_order(5, run) for run in range(20)}
        self.assertGreater(len(orders), 1)


class MeasureKappaTest(SimpleTestCase):
    def setUp(self):
        self.config = InterferometerConfigFactory().scaled(10.0)
        self.phase = PhasePoint(0.3, -0.5)

    def test_linear_detector_null(self):
        """Test that Born rates through a linear detector give kappa consistent with 0"""
        estimate = measure_kappa(
            self.config, LinearDetectorFactory(), self.phase, 200, 1.0, 42
        )
        self.assertLess(abs(estimate.kappa_mean), 3 * estimate.kappa_stderr)
        self.assertEqual(estimate.n_runs, 200)

    def test_audit_legs(self):
        """Test that every leg is recorded with its order position"""
        estimate = measure_kappa(self.config, REFERENCE_DETECTOR, self.phase, 3, 0.1, 9)
        self.assertEqual(len(estimate.legs), 24)
        for run in range(3):
            legs = [leg for leg in estimate.legs if leg.run_index == run]
            self.assertEqual([leg.order_position for leg in legs], list(range(8)))
            self.assertEqual({leg.combination for leg in legs}, set(PathSet.combinations()))

    def test_thread_count_does_not_change_result(self):
        """Test serial and parallel runs give identical estimates"""
        serial = measure_kappa(self.config, REFERENCE_DETECTOR, self.phase, 20, 0.2, 4, threads=1)
        parallel = measure_kappa(self.config, REFERENCE_DETECTOR, self.phase, 20, 0.2, 4, threads=4)
        self.assertEqual(serial, parallel)

    def test_shuffle_invariance(self):
        """Test that the randomized order does not change kappa without drift"""
        kwargs = dict(n_runs=30, leg_duration=0.2, seed=17)
        fixed = measure_kappa(
            self.config, REFERENCE_DETECTOR, self.phase, randomize=False, **kwargs
        )
        shuffled = measure_kappa(self.config, REFERENCE_DETECTOR, self.phase, **kwargs)
        self.assertEqual(fixed.kappa_mean, shuffled.kappa_mean)

    def test_drift_depends_on_order(self):
        """Test that a drifting source makes the leg order matter"""
        kwargs = dict(n_runs=30, leg_duration=0.2, seed=17, noise=SourceNoise(drift_per_leg=0.01))
        fixed = measure_kappa(
            self.config, REFERENCE_DETECTOR, self.phase, randomize=False, **kwargs
        )
        shuffled = measure_kappa(self.config, REFERENCE_DETECTOR, self.phase, **kwargs)
        self.assertNotEqual(fixed.kappa_mean, shuffled.kappa_mean)

    def test_single_run_has_zero_stderr(self):
        """Test the standard error of a single run"""
        estimate = measure_kappa(self.config, REFERENCE_DETECTOR, self.phase, 1, 0.1, 1)
        self.assertEqual(estimate.kappa_stderr, 0.0)

    def test_degenerate_delta(self):
        """Test that a run with delta = 0 is an error"""
        dark = InterferometerConfig(0.0, 0.0, 0.0)
        with self.assertRaises(DegenerateNormalizationError):
            measure_kappa(dark, LinearDetectorFactory(), PhasePoint(), 2, 0.1, 1)

    def test_invalid_runs(self):
        """Test that n_runs must be positive"""
        with self.assertRaises(InvalidConfigError):
            measure_kappa(self.config, REFERENCE_DETECTOR, self.phase, 0, 1.0, 1)

    def test_injected_violation_recovered(self):
        """Test that an injected violation is measured at its analytic value"""
        config = self.config.at_phase(PhasePoint())
        strength = violation_strength_for_kappa(config, 0.02)
        estimate = measure_kappa(
            config,
            LinearDetectorFactory(),
            PhasePoint(),
            200,
            1.0,
            3,
            violation_strength=strength,
        )
        self.assertLess(abs(estimate.kappa_mean - 0.02), 3 * estimate.kappa_stderr)
        self.assertGreater(estimate.kappa_mean, 3 * estimate.kappa_stderr)

    def test_regular_emitter_null(self):
        """Test that a regular emitter with period above tau shows no nonlinearity at any intensity"""
        detector = DetectorModel(dead_time_tau=47e-9, dark_rate_R0=0.0)
        statistics = SourceStatistics.regular_emitter(100e-9)
        cases = [(rate, MAXIMUM_PHASE) for rate in (*SWEEP_TARGETS, 4e6)]
        cases.append((4e6, PhasePoint(0.7, 2.0)))
        for index, (rate, phase) in enumerate(cases):
            config = REFERENCE_CONFIG.scaled(rate / incident_rate(REFERENCE_CONFIG, ABC))
            # about 4000 three-path counts per leg at every intensity
            estimate = measure_kappa(
                config, detector, phase, 20, 4e3 / rate, 8 + index, statistics=statistics
            )
            with self.subTest(rate=rate, phase=phase):
                self.assertLess(abs(estimate.kappa_mean), 3 * estimate.kappa_stderr)


class BornNullSuiteTest(SimpleTestCase):
    def random_configs(self, count, seed):
        rng = make_rng(seed)
        configs = []
        while len(configs) < count:
            rates = rng.uniform(1e4, 1e5, size=3)
            phases = rng.uniform(0.0, 2 * math.pi, size=2)
            config = InterferometerConfig(*rates, PhasePoint(*phases))
            normalization = delta(SumRuleInputs.from_mapping(incident_rates(config)))
            if normalization > 0.2 * rates.sum():
                configs.append(config)
        return configs

    def test_small_null_suite(self):
        """Test the stochastic null on ten random configurations"""
        passed = 0
        for index, config in enumerate(self.random_configs(10, 1)):
            estimate = measure_kappa(
                config, LinearDetectorFactory(), config.phase, 100, 0.1, index
            )
            passed += abs(estimate.kappa_mean) < 3 * estimate.kappa_stderr
        self.assertGreaterEqual(passed, 9)

    @pytest.mark.slow
    def test_full_null_suite(self):
        """Test the stochastic null on 100 random configurations"""
        passed = 0
        for index, config in enumerate(self.random_configs(100, 2)):
            estimate = measure_kappa(
                config, LinearDetectorFactory(), config.phase, 200, 0.1, index
            )
            passed += abs(estimate.kappa_mean) < 3 * estimate.kappa_stderr
        self.assertGreaterEqual(passed, 99)


class ScanPhaseSpaceTest(SimpleTestCase):
    def test_argmax_at_plate_origin(self):
        """Test the three-path maximum lands within a grid cell of (1.7 pi, 0.19 pi)"""
        spec = reference_scan()
        scan = scan_phase_space(spec, REFERENCE_CONFIG, REFERENCE_DETECTOR, measure=False)
        cell = spec.grid_A[1] - spec.grid_A[0]
        self.assertLessEqual(abs(scan.argmax.phi_A - 1.7 * math.pi), cell)
        self.assertLessEqual(abs(scan.argmax.phi_C - 0.19 * math.pi), cell)
        self.assertAlmostEqual(scan.refined_max.phi_A, 1.7 * math.pi, places=5)
        self.assertAlmostEqual(scan.refined_max.phi_C, 0.19 * math.pi, places=5)

    def test_kappa_det_surface_vanishes_without_dead_time(self):
        """Test that the predicted surface is zero for tau = 0"""
        detector = DetectorModel(dead_time_tau=0.0, dark_rate_R0=284.0)
        scan = scan_phase_space(reference_scan(9), REFERENCE_CONFIG, detector, measure=False)
        values = scan.values("kappa_det_pred")
        self.assertTrue(np.all(np.abs(values[np.isfinite(values)]) < 1e-9))

    def test_kappa_det_negative_at_constructive_region(self):
        """Test that kappa^det is negative around the maximum"""
        scan = scan_phase_space(reference_scan(41), REFERENCE_CONFIG, REFERENCE_DETECTOR, measure=False)
        intensity = scan.values("r_abc_det_cps")
        prediction = scan.values("kappa_det_pred")
        bright = intensity > 0.8 * intensity.max()
        self.assertTrue(np.all(prediction[bright] < 0.0))

    def test_periodicity(self):
        """Test that phases 2 pi apart give the same surfaces"""
        grid = (0.0, 0.5, 2 * math.pi, 2 * math.pi + 0.5)
        spec = ScanSpec(grid, grid, origin=PLATE_ORIGIN)
        scan = scan_phase_space(spec, REFERENCE_CONFIG, REFERENCE_DETECTOR, measure=False)
        intensity = scan.values("r_abc_det_cps")
        np.testing.assert_allclose(intensity[:2, :2], intensity[2:, 2:], rtol=1e-12)
        np.testing.assert_allclose(intensity[:2, :], intensity[2:, :], rtol=1e-12)

    def test_degenerate_points_recorded_as_missing(self):
        """Test that points without delta are kept with missing values"""
        config = InterferometerConfig(2080.0, 0.0, 0.0)
        scan = scan_phase_space(reference_scan(5), config, REFERENCE_DETECTOR, measure=False)
        self.assertEqual(len(scan.points), 25)
        self.assertTrue(all(point.kappa_det_pred is None for point in scan.points))

    def test_measured_scan(self):
        """Test a small stochastic scan and its determinism"""
        spec = ScanSpec((0.0, 1.0, 2.0), (0.5, 1.5), runs_per_point=5, leg_duration=0.1, base_seed=3)
        first = scan_phase_space(spec, REFERENCE_CONFIG.scaled(10.0), REFERENCE_DETECTOR)
        second = scan_phase_space(spec, REFERENCE_CONFIG.scaled(10.0), REFERENCE_DETECTOR, threads=3)
        self.assertEqual(first, second)
        self.assertTrue(all(point.estimate is not None for point in first.points))
        self.assertEqual(first.values("kappa_mean").shape, (3, 2))

    def test_unknown_field(self):
        """Test that an unknown field name is refused"""
        scan = scan_phase_space(reference_scan(3), REFERENCE_CONFIG, REFERENCE_DETECTOR, measure=False)
        with self.assertRaises(InvalidConfigError):
            scan.values("kappa")

    def test_spec_validation(self):
        """Test that grids must be nonempty and strictly increasing"""
        with self.assertRaises(InvalidConfigError):
            ScanSpec((), (0.0,))
        with self.assertRaises(InvalidConfigError):
            ScanSpec((0.0, 0.0), (0.0,))
        with self.assertRaises(InvalidConfigError):
            ScanSpec((0.0,), (0.0,), runs_per_point=0)

    def test_phase_grid_from_angles(self):
        """Test that plate angles map through the plate formula"""
        geometry = PhasePlateGeometry()
        angles = np.radians([0.0, 2.0, 4.0, 6.0])
        grid = phase_grid_from_angles(angles, geometry)
        self.assertEqual(grid[1], plate_angle_to_phase(angles[1], geometry))
        self.assertTrue(all(b > a for a, b in zip(grid, grid[1:])))


class IntensitySweepTest(SimpleTestCase):
    def test_reference_shaped_sweep(self):
        """Test the analytic sweep over the reference intensities"""
        factors = scale_factors_for_targets(
            REFERENCE_CONFIG, REFERENCE_DETECTOR, MAXIMUM_PHASE, SWEEP_TARGETS
        )
        rows = intensity_sweep(
            REFERENCE_CONFIG, factors, REFERENCE_DETECTOR, MAXIMUM_PHASE, 1, 1.0, 0, measure=False
        )
        for row, reference in zip(rows, REFERENCE_SWEEP):
            self.assertAlmostEqual(row.r_abc_det / reference.r_abc_det, 1.0, places=9)
            self.assertAlmostEqual(row.kappa_det, reference.kappa_det, delta=0.001)
            self.assertIsNone(row.kappa_exp)

    def test_monotone_decreasing(self):
        """Test that kappa^det falls with intensity"""
        rows = intensity_sweep(
            REFERENCE_CONFIG,
            np.geomspace(0.1, 30.0, 15),
            REFERENCE_DETECTOR,
            MAXIMUM_PHASE,
            1,
            1.0,
            0,
            measure=False,
        )
        values = [row.kappa_det for row in rows]
        self.assertTrue(all(b < a for a, b in zip(values, values[1:])))

    def test_linear_limit(self):
        """Test that kappa^det vanishes as the scale goes to zero"""
        rows = intensity_sweep(
            REFERENCE_CONFIG, [1e-6], REFERENCE_DETECTOR, MAXIMUM_PHASE, 1, 1.0, 0, measure=False
        )
        self.assertLess(abs(rows[0].kappa_det), 1e-6)

    def test_saturated_target(self):
        """Test that a detected target rate at 1/tau is refused"""
        with self.assertRaises(SaturationError):
            scale_factors_for_targets(
                REFERENCE_CONFIG, REFERENCE_DETECTOR, MAXIMUM_PHASE, [1e5, 1 / 47e-9]
            )

    def test_invalid_scale(self):
        """Test that non-positive scale factors are refused"""
        with self.assertRaises(InvalidConfigError):
            intensity_sweep(REFERENCE_CONFIG, [0.0], REFERENCE_DETECTOR, MAXIMUM_PHASE, 1, 1.0, 0)

    def test_measured_sweep(self):
        """Test prediction and measurement agree on a short sweep"""
        rows = intensity_sweep(
            REFERENCE_CONFIG, [10.0, 20.0], REFERENCE_DETECTOR, MAXIMUM_PHASE, 100, 1.0, 5
        )
        for row in rows:
            self.assertLess(abs(row.kappa_exp - row.kappa_det), 3 * row.kappa_stderr)


class DetectorCorrectionTest(SimpleTestCase):
    def analytic_kappa(self, config, strength):
        """Expected measured kappa of a violated source behind the reference detector"""
        return kappa(detected_inputs(inject_violation(config, strength), REFERENCE_DETECTOR))

    def test_corrected_estimate(self):
        """Test that the correction subtracts kappa^det and keeps the standard error"""
        estimate = KappaEstimate(
            kappa_mean=-0.008,
            kappa_stderr=0.001,
            epsilon_mean=-100.0,
            delta_mean=12500.0,
            n_runs=10,
            phase=PhasePoint(),
        )
        corrected = estimate.corrected(-0.013)
        self.assertAlmostEqual(corrected.kappa, 0.005)
        self.assertEqual(corrected.stderr, 0.001)
        self.assertAlmostEqual(corrected.significance, 5.0)

    def test_significance_without_spread(self):
        """Test the significance of a corrected kappa with zero standard error"""
        self.assertEqual(CorrectedKappa(0.0, 0.0, -0.01).significance, 0.0)
        self.assertEqual(CorrectedKappa(0.002, 0.0, -0.01).significance, math.inf)
        self.assertEqual(CorrectedKappa(-0.002, 0.0, -0.01).significance, -math.inf)

    def test_violation_recovered_behind_dead_time(self):
        """Test that subtracting kappa^det uncovers a violation hidden by the detector"""
        config = sweep_config(451_121.0)
        strength = violation_strength_for_kappa(config, 0.005)
        raw = self.analytic_kappa(config, strength)
        self.assertLess(raw, 0.0)
        self.assertAlmostEqual(raw - predicted_kappa(config, REFERENCE_DETECTOR), 0.005, delta=5e-4)

    def test_sweep_rows_carry_correction(self):
        """Test that measured sweep rows report kappa_exp - kappa^det"""
        strength = violation_strength_for_kappa(REFERENCE_CONFIG, 0.02)
        rows = intensity_sweep(
            REFERENCE_CONFIG,
            [10.0],
            REFERENCE_DETECTOR,
            MAXIMUM_PHASE,
            20,
            0.2,
            5,
            violation_strength=strength,
        )
        corrected = rows[0].corrected
        self.assertAlmostEqual(corrected.kappa, rows[0].kappa_exp - rows[0].kappa_det)
        self.assertEqual(corrected.stderr, rows[0].kappa_stderr)
        self.assertGreater(corrected.kappa, rows[0].kappa_exp)

    def test_unmeasured_row_has_no_correction(self):
        """Test that a prediction-only sweep row has no corrected kappa"""
        rows = intensity_sweep(
            REFERENCE_CONFIG, [1.0], REFERENCE_DETECTOR, MAXIMUM_PHASE, 1, 1.0, 0, measure=False
        )
        self.assertIsNone(rows[0].corrected)


@pytest.mark.slow
class ReferenceSweepConsistencyTest(SimpleTestCase):
    def test_measured_matches_prediction(self):
        """Test 1000-run measurements at every reference intensity"""
        factors = scale_factors_for_targets(
            REFERENCE_CONFIG, REFERENCE_DETECTOR, MAXIMUM_PHASE, SWEEP_TARGETS
        )
        rows = intensity_sweep(
            REFERENCE_CONFIG,
            factors,
            REFERENCE_DETECTOR,
            MAXIMUM_PHASE,
            SWEEP_RUNS,
            SWEEP_LEG_DURATION,
            2013,
            noise=SWEEP_NOISE,
        )
        for row, reference in zip(rows, REFERENCE_SWEEP):
            with self.subTest(rate=reference.r_abc_det):
                self.assertLess(abs(row.kappa_exp - row.kappa_det), 3 * row.kappa_stderr)
                self.assertLess(row.kappa_stderr, 3 * reference.kappa_stderr)
                self.assertGreater(row.kappa_stderr, reference.kappa_stderr / 3)

    def test_violation_detected(self):
        """Test that an injected kappa of 0.005 is seen above 3 sigma"""
        config = sweep_config(451_121.0)
        strength = violation_strength_for_kappa(config, 0.005)
        estimate = measure_kappa(
            config,
            LinearDetectorFactory(),
            MAXIMUM_PHASE,
            SWEEP_RUNS,
            SWEEP_LEG_DURATION,
            6,
            violation_strength=strength,
        )
        self.assertGreater(estimate.kappa_mean, 3 * estimate.kappa_stderr)
        self.assertLess(abs(estimate.kappa_mean - 0.005), 3 * estimate.kappa_stderr)
        self.assertGreater(estimate.kappa_mean - 3 * estimate.kappa_stderr, KAPPA_BOUND / 2)

    def test_violation_behind_dead_time(self):
        """Test that a kappa of 0.005 shows up after correction at the brightest intensity"""
        config = sweep_config(451_121.0)
        strength = violation_strength_for_kappa(config, 0.005)
        rows = intensity_sweep(
            config,
            [1.0],
            REFERENCE_DETECTOR,
            MAXIMUM_PHASE,
            SWEEP_RUNS,
            SWEEP_LEG_DURATION,
            7,
            violation_strength=strength,
        )
        corrected = rows[0].corrected
        self.assertLess(rows[0].kappa_exp, 0.0)
        expected = (
            kappa(detected_inputs(inject_violation(config, strength), REFERENCE_DETECTOR))
            - corrected.kappa_det
        )
        self.assertAlmostEqual(expected, 0.005, delta=5e-4)
        self.assertLess(abs(corrected.kappa - expected), 3 * corrected.stderr)
        self.assertGreater(corrected.significance, 3.0)
