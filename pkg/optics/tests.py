import math

import numpy as np

from django.test import SimpleTestCase

from threepath.exceptions import (
    DegenerateNormalizationError,
    InvalidConfigError,
    OutOfRangeError,
    SaturationError,
)

from .factories import (
    DetectorModelFactory,
    InterferometerConfigFactory,
    LinearDetectorFactory,
    PhasePlateGeometryFactory,
)
from .formulas import (
    delta,
    detected_inputs,
    detector_forward,
    detector_inverse,
    epsilon,
    incident_rate,
    incident_rates,
    kappa,
    plate_angle_to_phase,
)
from .types import (
    DetectorModel,
    InterferometerConfig,
    PathSet,
    PhasePlateGeometry,
    PhasePoint,
    SumRuleInputs,
)

A, B, C = PathSet.A, PathSet.B, PathSet.C
ABC = A | B | C


def random_config(rng, visibilities=False):
    rates = rng.uniform(0.0, 1e6, size=3)
    phases = rng.uniform(0.0, 2 * math.pi, size=2)
    extra = {}
    if visibilities:
        v_ab, v_ac, v_bc = rng.uniform(0.0, 1.0, size=3)
        extra = dict(visibility_AB=v_ab, visibility_AC=v_ac, visibility_BC=v_bc)
    return InterferometerConfig(
        rate_A=rates[0],
        rate_B=rates[1],
        rate_C=rates[2],
        phase=PhasePoint(phases[0], phases[1]),
        **extra,
    )


class PathSetTest(SimpleTestCase):
    def test_eight_combinations(self):
        """Test that exactly eight distinct combinations exist"""
        combinations = PathSet.combinations()
        self.assertEqual(len(set(combinations)), 8)
        self.assertEqual(combinations[0], PathSet.NONE)
        self.assertEqual(combinations[7], ABC)

    def test_labels_round_trip(self):
        """Test that labels parse back to the same combination"""
        for paths in PathSet.combinations():
            self.assertEqual(PathSet.from_label(paths.label), paths)
        self.assertEqual(PathSet.NONE.label, "0")
        self.assertEqual((A | C).label, "AC")

    def test_unknown_label(self):
        """Test that an unknown path letter is rejected"""
        with self.assertRaises(InvalidConfigError):
            PathSet.from_label("AD")


class ConfigValidationTest(SimpleTestCase):
    def test_negative_rate_rejected(self):
        """Test that negative single-path rates are rejected"""
        with self.assertRaises(InvalidConfigError):
            InterferometerConfigFactory(rate_A=-1.0)

    def test_non_finite_rate_rejected(self):
        """Test that non-finite rates are rejected"""
        with self.assertRaises(InvalidConfigError):
            InterferometerConfigFactory(rate_B=math.inf)
        with self.assertRaises(InvalidConfigError):
            InterferometerConfigFactory(rate_C=math.nan)

    def test_visibility_range(self):
        """Test that visibilities outside [0, 1] are rejected"""
        with self.assertRaises(InvalidConfigError):
            InterferometerConfigFactory(visibility_AB=1.5)

    def test_detector_invariants(self):
        """Test detector parameter validation"""
        with self.assertRaises(InvalidConfigError):
            DetectorModel(dead_time_tau=-1e-9)
        with self.assertRaises(InvalidConfigError):
            DetectorModel(efficiency=0.0)

    def test_plate_geometry_invariants(self):
        """Test that n2 < n1 is rejected"""
        with self.assertRaises(InvalidConfigError):
            PhasePlateGeometry(n1=1.5, n2=1.2)

    def test_sum_rule_inputs_need_eight_rates(self):
        """Test that SumRuleInputs require one rate per combination"""
        with self.assertRaises(InvalidConfigError):
            SumRuleInputs((1.0,) * 7)
        with self.assertRaises(InvalidConfigError):
            SumRuleInputs((1.0,) * 7 + (-1.0,))


class IncidentRateTest(SimpleTestCase):
    def test_destructive_pair(self):
        """Test that equal beams in antiphase cancel"""
        config = InterferometerConfig(1.0, 1.0, 0.0, PhasePoint(math.pi, 0.0))
        self.assertEqual(incident_rate(config, A | B), 0.0)

    def test_constructive_three_paths(self):
        """Test the three-path rate at zero phases"""
        config = InterferometerConfigFactory()
        expected = (math.sqrt(2080) + math.sqrt(5760) + math.sqrt(1990)) ** 2
        self.assertAlmostEqual(incident_rate(config, ABC), expected, places=6)
        self.assertAlmostEqual(incident_rate(config, ABC), 27_594, delta=5)

    def test_empty_set(self):
        """Test that the background configuration has no incident light"""
        self.assertEqual(incident_rate(InterferometerConfigFactory(), PathSet.NONE), 0.0)

    def test_matches_printed_two_and_three_path_formulas(self):
        """Test agreement with the explicit R_AB and R_ABC expressions"""
        config = InterferometerConfigFactory(phase=PhasePoint(1.1, -0.4))
        ra, rb, rc = config.rate_A, config.rate_B, config.rate_C
        phi_a, phi_c = config.phase.phi_A, config.phase.phi_C
        r_ab = ra + rb + 2 * math.sqrt(ra * rb) * math.cos(phi_a)
        r_abc = (
            ra
            + rb
            + rc
            + 2 * math.sqrt(ra * rb) * math.cos(phi_a)
            + 2 * math.sqrt(ra * rc) * math.cos(phi_a - phi_c)
            + 2 * math.sqrt(rb * rc) * math.cos(-phi_c)
        )
        self.assertAlmostEqual(incident_rate(config, A | B), r_ab, places=8)
        self.assertAlmostEqual(incident_rate(config, ABC), r_abc, places=8)

    def test_phase_periodicity(self):
        """Test that rates are 2*pi periodic in each phase"""
        config = InterferometerConfigFactory(phase=PhasePoint(0.3, 1.9))
        shifted = config.at_phase(PhasePoint(0.3 + 2 * math.pi, 1.9 - 4 * math.pi))
        reduced = config.at_phase(shifted.phase.reduced())
        for paths in PathSet.combinations():
            self.assertAlmostEqual(
                incident_rate(config, paths), incident_rate(shifted, paths), places=7
            )
            self.assertAlmostEqual(
                incident_rate(config, paths), incident_rate(reduced, paths), places=7
            )


class DetectorTransferTest(SimpleTestCase):
    def test_dead_time_free_limit(self):
        """Test that tau = 0 gives eta R + R0"""
        model = DetectorModel(0.0, 50.0, 0.5)
        for rate in (0.0, 10.0, 1e6):
            self.assertAlmostEqual(detector_forward(rate, model), 0.5 * rate + 50.0)

    def test_forward_at_one_megahertz(self):
        """Test the transfer function at 10^6 cps"""
        detected = detector_forward(1e6, DetectorModelFactory())
        self.assertAlmostEqual(detected, 955_370, delta=5)

    def test_forward_dark_only(self):
        """Test the detected dark rate"""
        detected = detector_forward(0.0, DetectorModelFactory())
        self.assertAlmostEqual(detected, 284 / (1 + 284 * 47e-9), places=9)
        self.assertAlmostEqual(detected, 283.996, places=3)

    def test_inverse_of_forward_example(self):
        """Test the inverse at the forward example"""
        model = DetectorModelFactory()
        self.assertAlmostEqual(detector_inverse(955_370, model), 1e6, delta=20)

    def test_round_trip(self):
        """Test f-inverse(f(R)) = R over [0, 0.9/tau)"""
        model = DetectorModelFactory()
        for rate in np.linspace(0.0, 0.9 / model.dead_time_tau, 200, endpoint=False):
            recovered = detector_inverse(detector_forward(rate, model), model)
            self.assertLessEqual(abs(recovered - rate), 1e-9 * max(rate, 1.0))

    def test_saturation_bound(self):
        """Test that detected rates stay below 1/tau"""
        model = DetectorModelFactory()
        for rate in (0.0, 1e3, 1e6, 1e9, 1e15, 1e300):
            self.assertLess(detector_forward(rate, model), 1 / model.dead_time_tau)

    def test_monotone(self):
        """Test that f is increasing"""
        model = DetectorModelFactory()
        rates = np.logspace(0, 9, 50)
        detected = [detector_forward(r, model) for r in rates]
        self.assertTrue(all(b > a for a, b in zip(detected, detected[1:])))

    def test_inverse_saturation(self):
        """Test that 1/tau has no finite preimage"""
        model = DetectorModelFactory()
        with self.assertRaises(SaturationError):
            detector_inverse(1 / model.dead_time_tau, model)

    def test_inverse_below_dark_floor(self):
        """Test that rates below the dark floor are rejected unless non-strict"""
        model = DetectorModelFactory()
        with self.assertRaises(OutOfRangeError):
            detector_inverse(200.0, model)
        self.assertLess(detector_inverse(200.0, model, strict=False), 0.0)

    def test_forward_rejects_negative_rate(self):
        """Test input validation of the forward transfer"""
        with self.assertRaises(InvalidConfigError):
            detector_forward(-1.0, DetectorModelFactory())


class SumRuleTest(SimpleTestCase):
    def test_constant_rates(self):
        """Test that a constant background cancels in epsilon and delta"""
        inputs = SumRuleInputs((123.0,) * 8)
        self.assertEqual(epsilon(inputs), 0.0)
        self.assertEqual(delta(inputs), 0.0)

    def test_born_rule_null(self):
        """Test epsilon = 0 for randomized Born-consistent rates"""
        rng = np.random.default_rng(20110726)
        linear = LinearDetectorFactory()
        for _ in range(200):
            config = random_config(rng)
            inputs = detected_inputs(lambda p: incident_rate(config, p), linear)
            scale = max(inputs[ABC], 1.0)
            self.assertLessEqual(abs(epsilon(inputs)), 1e-10 * scale)

    def test_visibility_independence(self):
        """Test that imperfect coherence leaves epsilon at zero"""
        rng = np.random.default_rng(7)
        linear = LinearDetectorFactory()
        for _ in range(200):
            config = random_config(rng, visibilities=True)
            inputs = detected_inputs(lambda p: incident_rate(config, p), linear)
            self.assertLessEqual(abs(epsilon(inputs)), 1e-10 * max(inputs[ABC], 1.0))

    def test_background_cancellation(self):
        """Test that adding a constant to all eight rates leaves epsilon unchanged"""
        config = InterferometerConfigFactory(phase=PhasePoint(0.7, 2.1))
        inputs = detected_inputs(lambda p: incident_rate(config, p), DetectorModelFactory())
        for constant in (0.0, 1.0, 284.0, 1e5):
            self.assertAlmostEqual(
                epsilon(inputs.shifted(constant)), epsilon(inputs), places=6
            )

    def test_dead_time_makes_epsilon_negative(self):
        """Test the concavity consequence at the constructive maximum"""
        for scale in (1.0, 10.0, 100.0):
            config = InterferometerConfigFactory().scaled(scale)
            inputs = detected_inputs(
                lambda p: incident_rate(config, p), DetectorModelFactory()
            )
            self.assertLess(epsilon(inputs), 0.0)

    def test_delta_incoherent(self):
        """Test delta = 0 without two-path interference"""
        config = InterferometerConfigFactory(
            visibility_AB=0.0, visibility_AC=0.0, visibility_BC=0.0
        )
        inputs = detected_inputs(lambda p: incident_rate(config, p), LinearDetectorFactory())
        self.assertAlmostEqual(delta(inputs), 0.0, places=8)
        with self.assertRaises(DegenerateNormalizationError):
            kappa(inputs)

    def test_delta_constructive(self):
        """Test delta at the all-constructive point with a linear detector"""
        config = InterferometerConfigFactory()
        inputs = detected_inputs(lambda p: incident_rate(config, p), LinearDetectorFactory())
        ra, rb, rc = config.rate_A, config.rate_B, config.rate_C
        expected = 2 * (math.sqrt(ra * rb) + math.sqrt(ra * rc) + math.sqrt(rb * rc))
        self.assertAlmostEqual(delta(inputs), expected, places=6)

    def test_kappa_linear_detector(self):
        """Test kappa = 0 with Born-consistent rates"""
        config = InterferometerConfigFactory(phase=PhasePoint(1.0, 0.5))
        inputs = detected_inputs(lambda p: incident_rate(config, p), LinearDetectorFactory())
        self.assertAlmostEqual(kappa(inputs), 0.0, places=12)

    def test_kappa_at_highest_reference_intensity(self):
        """Test the dead-time kappa at a detected R_ABC of 451121 cps"""
        detector = DetectorModelFactory()
        base = InterferometerConfigFactory()
        factor = detector_inverse(451_121, detector) / incident_rate(base, ABC)
        config = base.scaled(factor)
        inputs = detected_inputs(lambda p: incident_rate(config, p), detector)
        self.assertAlmostEqual(inputs[ABC], 451_121, delta=1e-3)
        self.assertAlmostEqual(kappa(inputs), -0.0134, delta=0.001)

    def test_kappa_degenerate(self):
        """Test that delta = 0 raises instead of returning a number"""
        with self.assertRaises(DegenerateNormalizationError):
            kappa(SumRuleInputs((5.0,) * 8))

    def test_incident_rates_mapping(self):
        """Test that incident_rates covers every combination"""
        rates = incident_rates(InterferometerConfigFactory())
        self.assertEqual(set(rates), set(PathSet.combinations()))


class PhasePlateTest(SimpleTestCase):
    def test_normal_incidence(self):
        """Test that an untilted plate adds no phase"""
        self.assertEqual(plate_angle_to_phase(0.0, PhasePlateGeometryFactory()), 0.0)

    def test_even_in_angle(self):
        """Test phi(theta) = phi(-theta)"""
        geom = PhasePlateGeometryFactory()
        for theta in (0.01, 0.1, 0.3, 0.7):
            self.assertAlmostEqual(
                plate_angle_to_phase(theta, geom),
                plate_angle_to_phase(-theta, geom),
                places=9,
            )

    def test_reference_value(self):
        """Test the phase at 0.1 rad against an independent evaluation"""
        geom = PhasePlateGeometryFactory()
        theta = 0.1
        refracted = np.arcsin(np.sin(theta) / 1.5)
        bracket = 1.0 - 1.5 + (1.5 - np.cos(theta - refracted)) / np.cos(refracted)
        expected = 2 * np.pi / 800e-9 * 2 * 0.9e-3 * bracket
        self.assertAlmostEqual(plate_angle_to_phase(theta, geom), expected, places=6)
        self.assertAlmostEqual(plate_angle_to_phase(theta, geom), 23.6, delta=0.1)

    def test_zero_angle_offset(self):
        """Test that the offset is added to the rotation angle"""
        geom = PhasePlateGeometryFactory(zero_angle_offset=0.05)
        plain = PhasePlateGeometryFactory()
        self.assertAlmostEqual(
            plate_angle_to_phase(0.05, geom), plate_angle_to_phase(0.1, plain), places=9
        )
