import io
import math

import numpy as np

from django.test import SimpleTestCase, override_settings

from optics.factories import (
    DetectorModelFactory,
    InterferometerConfigFactory,
    LinearDetectorFactory,
)
from optics.formulas import detector_forward, epsilon, incident_rate
from optics.types import DetectorModel, PathSet, PhasePoint, SumRuleInputs
from threepath.exceptions import (
    DegenerateNormalizationError,
    InvalidConfigError,
    NegativeRateError,
    ResourceLimitError,
)

from .seeding import derive_seed, make_rng
from .simulation import SamplingMethod, leg_rate, simulate_combination, simulate_stream
from .sources import DeadTimeFilter, count_live_time
from .types import SimulationRun, SourceNoise, SourceStatistics
from .violation import (
    inject_violation,
    injected_kappa,
    violation_strength_for_kappa,
    violation_term,
)

A, B, C = PathSet.A, PathSet.B, PathSet.C
ABC = A | B | C


def detected_rates(make_run, seeds, method=SamplingMethod.AUTO):
    rates = []
    for seed in seeds:
        record = simulate_stream(make_run(seed), method=method)
        rates.append(record.rate)
    return np.asarray(rates)


def assert_within_standard_errors(test, samples, expected, sigmas=3.0):
    stderr = samples.std(ddof=1) / math.sqrt(samples.size)
    test.assertLess(abs(samples.mean() - expected), sigmas * stderr + 1e-9 * expected)


class SeedingTest(SimpleTestCase):
    def test_derived_seeds_are_reproducible(self):
        """Test that the same indices always give the same seed"""
        self.assertEqual(derive_seed(7, 1, 2), derive_seed(7, 1, 2))

    def test_derived_seeds_differ(self):
        """Test that different indices or bases give different seeds"""
        seeds = {derive_seed(7, i, j) for i in range(10) for j in range(10)}
        self.assertEqual(len(seeds), 100)
        self.assertNotEqual(derive_seed(7, 1), derive_seed(8, 1))

    def test_generator_stream(self):
        """Test that equal seeds give equal random streams"""
        first = make_rng(123).random(5)
        second = make_rng(123).random(5)
        np.testing.assert_array_equal(first, second)


class DeadTimeFilterTest(SimpleTestCase):
    def test_hand_example(self):
        """Test the nonparalyzable rule on a short stream"""
        times = np.array([0.0, 10.0, 30.0, 50.0, 55.0, 100.0])
        dead_time = DeadTimeFilter(40.0, verify=True)
        np.testing.assert_array_equal(dead_time(times), [0.0, 50.0, 100.0])
        self.assertEqual(dead_time.count, 3)

    def test_blocked_events_do_not_extend_dead_time(self):
        """Test that a blocked arrival does not restart the dead period"""
        dead_time = DeadTimeFilter(10.0)
        detected = dead_time(np.array([0.0, 9.0, 10.0, 18.0, 20.5]))
        np.testing.assert_array_equal(detected, [0.0, 10.0, 20.5])

    def test_slabs_match_single_pass(self):
        """Test that filtering in slabs equals filtering in one call"""
        rng = make_rng(5)
        times = np.cumsum(rng.exponential(1.0, size=5000))
        whole = DeadTimeFilter(1.3, verify=True)(times)
        split = DeadTimeFilter(1.3, verify=True)
        parts = [split(chunk) for chunk in np.array_split(times, [17, 1000, 1001, 3500])]
        np.testing.assert_array_equal(np.concatenate(parts), whole)
        self.assertEqual(split.count, whole.size)

    def test_matches_reference_loop(self):
        """Test agreement with a plain sequential implementation"""
        rng = make_rng(11)
        times = np.cumsum(rng.exponential(1.0, size=3000))
        expected, last = [], -math.inf
        for value in times:
            if value - last >= 0.8:
                expected.append(value)
                last = value
        np.testing.assert_array_equal(DeadTimeFilter(0.8)(times), expected)

    def test_zero_dead_time_keeps_everything(self):
        """Test that tau = 0 passes every event"""
        times = np.array([0.0, 0.0, 1.0])
        self.assertEqual(DeadTimeFilter(0.0)(times).size, 3)

    def test_verification_flags_violations(self):
        """Test that the separation check rejects a too-close detection"""
        dead_time = DeadTimeFilter(1.0, verify=True)
        with self.assertRaises(AssertionError):
            dead_time._check(np.array([0.0, 0.5]))


class LiveTimeCountTest(SimpleTestCase):
    def test_count_bound(self):
        """Test that counts never exceed the dead-time ceiling"""
        tau, duration = 1e-6, 1e-3
        for seed in range(20):
            count = count_live_time(make_rng(seed), 5e6, tau, duration)
            self.assertLessEqual(count, math.ceil(duration / tau) + 1)

    def test_zero_rate(self):
        """Test that a dark stream of zero rate gives no counts"""
        self.assertEqual(count_live_time(make_rng(1), 0.0, 1e-9, 1.0), 0)

    def test_unfiltered_stream_is_poisson(self):
        """Test the tau = 0 count against the Poisson mean"""
        detector = LinearDetectorFactory()
        samples = detected_rates(
            lambda seed: SimulationRun(1e4, detector, 10.0, seed), range(20)
        )
        stderr = math.sqrt(1e5 / 20) / 10.0
        self.assertLess(abs(samples.mean() - 1e4), 4 * stderr)


class SimulateStreamTest(SimpleTestCase):
    def setUp(self):
        self.detector = DetectorModelFactory()

    def test_oracle_agreement_over_rate_grid(self):
        """Test that simulated detected rates match the analytic transfer"""
        for rate in (1e3, 1e4, 1e5, 1e6, 5e6):
            duration = min(10.0, 2e6 / rate)
            samples = detected_rates(
                lambda seed: SimulationRun(rate, self.detector, duration, seed),
                (derive_seed(2024, int(rate), i) for i in range(20)),
            )
            with self.subTest(rate=rate):
                assert_within_standard_errors(
                    self, samples, detector_forward(rate, self.detector)
                )

    def test_event_method_oracle(self):
        """Test the explicit event stream against the analytic transfer"""
        for rate in (1e5, 1e6, 5e6):
            samples = detected_rates(
                lambda seed: SimulationRun(rate, self.detector, 2e5 / rate, seed),
                range(20),
                method=SamplingMethod.EVENTS,
            )
            with self.subTest(rate=rate):
                assert_within_standard_errors(
                    self, samples, detector_forward(rate, self.detector)
                )

    def test_forward_example(self):
        """Test the 1 Mcps example against 955,370 cps"""
        samples = detected_rates(
            lambda seed: SimulationRun(1e6, self.detector, 1.0, seed), range(20)
        )
        stderr = samples.std(ddof=1) / math.sqrt(samples.size)
        self.assertLess(abs(samples.mean() - 955_370), 3 * stderr + 5)

    @override_settings(THREEPATH_EVENT_CHUNK=2_000)
    def test_streamed_events_keep_dead_time(self):
        """Test that slab-wise filtering never detects two events within tau"""
        sink = io.StringIO()
        run = SimulationRun(2e6, self.detector, 0.01, 99)
        record = simulate_stream(run, event_sink=sink)
        times = np.loadtxt(io.StringIO(sink.getvalue()))
        self.assertEqual(times.size, record.detected_count)
        self.assertTrue(np.all(np.diff(times) >= self.detector.dead_time_tau * (1 - 1e-9)))
        self.assertTrue(np.all((times >= 0.0) & (times < 0.01)))

    def test_merge_of_dark_and_photon_streams(self):
        """Test that photon and dark streams add with tau = 0"""
        detector = DetectorModel(dead_time_tau=0.0, dark_rate_R0=3e4)
        samples = detected_rates(
            lambda seed: SimulationRun(5e4, detector, 1.0, seed),
            range(20),
            method=SamplingMethod.EVENTS,
        )
        assert_within_standard_errors(self, samples, 8e4, sigmas=4.0)

    def test_methods_agree(self):
        """Test that live-time and event sampling give the same mean"""
        make_run = lambda seed: SimulationRun(3e6, self.detector, 0.05, seed)  # noqa: E731
        live = detected_rates(make_run, range(30), method=SamplingMethod.LIVE_TIME)
        events = detected_rates(make_run, range(100, 130), method=SamplingMethod.EVENTS)
        spread = math.hypot(
            live.std(ddof=1) / math.sqrt(live.size),
            events.std(ddof=1) / math.sqrt(events.size),
        )
        self.assertLess(abs(live.mean() - events.mean()), 4 * spread)

    def test_determinism(self):
        """Test that identical runs produce identical outputs"""
        run = SimulationRun(1e5, self.detector, 0.1, 42)
        for method in (SamplingMethod.LIVE_TIME, SamplingMethod.EVENTS):
            self.assertEqual(
                simulate_stream(run, method=method), simulate_stream(run, method=method)
            )
        first, second = io.StringIO(), io.StringIO()
        simulate_stream(run, event_sink=first)
        simulate_stream(run, event_sink=second)
        self.assertEqual(first.getvalue(), second.getvalue())

    @override_settings(THREEPATH_MAX_EXPECTED_EVENTS=1_000)
    def test_resource_cap(self):
        """Test that runs above the event cap are refused"""
        with self.assertRaises(ResourceLimitError):
            simulate_stream(SimulationRun(1e4, self.detector, 1.0, 1))

    def test_live_time_refuses_event_dump(self):
        """Test that an event dump requires the event method"""
        run = SimulationRun(1e3, self.detector, 1.0, 1)
        with self.assertRaises(InvalidConfigError):
            simulate_stream(run, method=SamplingMethod.LIVE_TIME, event_sink=io.StringIO())

    def test_invalid_runs(self):
        """Test run validation"""
        with self.assertRaises(InvalidConfigError):
            SimulationRun(1e3, self.detector, 0.0, 1)
        with self.assertRaises(InvalidConfigError):
            SimulationRun(-1.0, self.detector, 1.0, 1)


class RegularEmitterTest(SimpleTestCase):
    def setUp(self):
        self.detector = DetectorModel(dead_time_tau=47e-9, dark_rate_R0=0.0)
        self.statistics = SourceStatistics.regular_emitter(100e-9)

    def test_no_dead_time_loss(self):
        """Test that pulses spaced beyond tau are all detected"""
        duration = 1e-3
        run = SimulationRun(1e7, self.detector, duration, 3, self.statistics)
        record = simulate_stream(run)
        self.assertLessEqual(abs(record.detected_count - math.floor(duration / 100e-9)), 1)

    def test_thinned_pulses(self):
        """Test that a weaker beam is a thinned pulse train without loss"""
        duration = 0.01
        run = SimulationRun(2e6, self.detector, duration, 4, self.statistics)
        sink = io.StringIO()
        record = simulate_stream(run, event_sink=sink)
        times = np.loadtxt(io.StringIO(sink.getvalue()))
        pulses = np.round(times / 100e-9)
        np.testing.assert_allclose(times, pulses * 100e-9, rtol=1e-9)
        expected = 2e6 * duration
        self.assertLess(abs(record.detected_count - expected), 5 * math.sqrt(expected))

    def test_period_within_dead_time_is_logged(self):
        """Test that a pulse period inside the dead time loses every other pulse with a warning"""
        statistics = SourceStatistics.regular_emitter(30e-9)
        run = SimulationRun(1 / 30e-9, self.detector, 1e-4, 2, statistics)
        with self.assertLogs("photonsim.simulation", level="WARNING") as logs:
            record = simulate_stream(run)
        self.assertIn("not above the dead time", logs.output[0])
        self.assertLessEqual(abs(record.detected_count - 1667), 1)

    def test_period_above_dead_time_is_quiet(self):
        """Test that a pulse period beyond the dead time logs nothing"""
        run = SimulationRun(1e6, self.detector, 1e-4, 2, self.statistics)
        with self.assertNoLogs("photonsim.simulation", level="WARNING"):
            simulate_stream(run)

    def test_rate_above_repetition_rate(self):
        """Test that more photons than pulses is a configuration error"""
        run = SimulationRun(2e7, self.detector, 1e-3, 1, self.statistics)
        with self.assertRaises(InvalidConfigError):
            simulate_stream(run)

    def test_live_time_not_available(self):
        """Test that live-time sampling is refused for a regular emitter"""
        run = SimulationRun(1e6, self.detector, 1e-3, 1, self.statistics)
        with self.assertRaises(InvalidConfigError):
            simulate_stream(run, method=SamplingMethod.LIVE_TIME)

    def test_period_required(self):
        """Test that a regular emitter needs a positive period"""
        with self.assertRaises(InvalidConfigError):
            SourceStatistics.regular_emitter(0.0)


class SimulateCombinationTest(SimpleTestCase):
    def test_background_configuration(self):
        """Test that the empty path set gives dark counts only"""
        detector = DetectorModel(dead_time_tau=47e-9, dark_rate_R0=5e4)
        config = InterferometerConfigFactory()
        rates = np.asarray(
            [
                simulate_combination(config, PathSet.NONE, detector, 1.0, seed).rate
                for seed in range(20)
            ]
        )
        assert_within_standard_errors(self, rates, 5e4 / (1 + 5e4 * 47e-9), sigmas=4.0)

    def test_single_path_linear(self):
        """Test that one open path with tau = 0 gives R_A + R0"""
        detector = DetectorModel(dead_time_tau=0.0, dark_rate_R0=284.0)
        config = InterferometerConfigFactory()
        rates = np.asarray(
            [simulate_combination(config, A, detector, 10.0, seed).rate for seed in range(20)]
        )
        assert_within_standard_errors(self, rates, 2080.0 + 284.0, sigmas=4.0)

    def test_three_paths_constructive(self):
        """Test the all-constructive three-path leg against f(R_ABC)"""
        detector = DetectorModelFactory()
        config = InterferometerConfigFactory().scaled(100.0)
        rates = np.asarray(
            [simulate_combination(config, ABC, detector, 1.0, seed).rate for seed in range(20)]
        )
        expected = detector_forward(incident_rate(config, ABC), detector)
        assert_within_standard_errors(self, rates, expected)

    def test_record_carries_path_set_and_seed(self):
        """Test that the count record names its combination and seed"""
        record = simulate_combination(
            InterferometerConfigFactory(), A | C, LinearDetectorFactory(), 0.5, 77
        )
        self.assertEqual(record.path_set, A | C)
        self.assertEqual(record.rng_seed, 77)
        self.assertEqual(record.duration, 0.5)

    def test_custom_rate_function(self):
        """Test that an explicit rate function replaces the Born rates"""
        detector = LinearDetectorFactory()
        record = simulate_combination(
            InterferometerConfigFactory(), ABC, detector, 1.0, 5, rates=lambda paths: 0.0
        )
        self.assertEqual(record.detected_count, 0)


class SourceNoiseTest(SimpleTestCase):
    def test_quiet_source(self):
        """Test that a quiet source leaves the rate untouched"""
        self.assertEqual(leg_rate(1234.0, SourceNoise(), 9, order_position=5), 1234.0)

    def test_drift(self):
        """Test the linear drift over the leg order"""
        noise = SourceNoise(drift_per_leg=0.01)
        self.assertAlmostEqual(leg_rate(1000.0, noise, 9, order_position=3), 1030.0)

    def test_clipped_at_zero(self):
        """Test that a large negative drift cannot produce a negative rate"""
        noise = SourceNoise(drift_per_leg=-1.0)
        self.assertEqual(leg_rate(1000.0, noise, 9, order_position=7), 0.0)

    def test_fluctuation_is_seeded(self):
        """Test that the intensity fluctuation depends only on the seed"""
        noise = SourceNoise(intensity_sigma=0.02)
        self.assertEqual(leg_rate(1e4, noise, 3), leg_rate(1e4, noise, 3))
        spread = np.std([leg_rate(1e4, noise, seed) for seed in range(500)])
        self.assertAlmostEqual(spread / 1e4, 0.02, delta=0.004)

    def test_invalid_noise(self):
        """Test noise parameter validation"""
        with self.assertRaises(InvalidConfigError):
            SourceNoise(intensity_sigma=-0.1)


class ViolationTest(SimpleTestCase):
    def setUp(self):
        self.config = InterferometerConfigFactory()

    def test_zero_strength_is_identity(self):
        """Test that strength 0 reproduces the Born rates"""
        rates = inject_violation(self.config, 0.0)
        for paths in PathSet.combinations():
            self.assertEqual(rates(paths), incident_rate(self.config, paths))

    def test_epsilon_equals_injected_term(self):
        """Test that epsilon of the modified rates is exactly the injected term"""
        strength = 0.02
        rates = inject_violation(self.config, strength)
        inputs = SumRuleInputs(tuple(rates(paths) for paths in PathSet.combinations()))
        geometric_mean = (2080.0 * 5760.0 * 1990.0) ** (1.0 / 3.0)
        self.assertAlmostEqual(epsilon(inputs), strength * geometric_mean, places=6)
        self.assertAlmostEqual(rates.term, strength * geometric_mean)

    def test_only_three_path_rate_changes(self):
        """Test that the injection touches R_ABC only"""
        rates = inject_violation(self.config, 0.05)
        for paths in PathSet.combinations():
            if paths != ABC:
                self.assertEqual(rates(paths), incident_rate(self.config, paths))

    def test_negative_rate_rejected(self):
        """Test that a strength driving R_ABC below zero is refused"""
        config = self.config.at_phase(PhasePoint(math.pi, 0.0))
        with self.assertRaises(NegativeRateError):
            inject_violation(config, 50.0)

    def test_strength_for_kappa(self):
        """Test that the strength for a target kappa injects that kappa"""
        config = self.config.at_phase(PhasePoint(0.3, -0.2))
        strength = violation_strength_for_kappa(config, 0.005)
        self.assertAlmostEqual(injected_kappa(config, strength), 0.005, places=12)
        self.assertAlmostEqual(inject_violation(config, strength).kappa, 0.005, places=12)

    def test_term_vanishes_at_quadrature(self):
        """Test that no strength can produce kappa where the term vanishes"""
        config = self.config.at_phase(PhasePoint(math.pi / 2, 0.0))
        self.assertAlmostEqual(violation_term(config, 1.0), 0.0)
        with self.assertRaises(DegenerateNormalizationError):
            violation_strength_for_kappa(config, 0.005)
