import enum
import logging
import math
from functools import partial
from typing import TextIO

import numpy as np

from django.conf import settings

from optics.formulas import RateFunction, incident_rate
from optics.types import DetectorModel, InterferometerConfig, PathSet
from threepath.exceptions import InvalidConfigError, ResourceLimitError

from .seeding import derive_seed, make_rng
from .sources import DeadTimeFilter, PoissonArrivals, RegularArrivals, count_live_time
from .types import CountRecord, SimulationRun, SourceMode, SourceNoise, SourceStatistics

logger = logging.getLogger(__name__)

# Sub-stream indices under a leg seed.
PHOTON_STREAM, DARK_STREAM, NOISE_STREAM = 0, 1, 2


class SamplingMethod(str, enum.Enum):
    """
    ``events`` builds, merges and filters the timestamp stream;
    ``live_time`` draws the exact detected count of a Poissonian stream
    without materializing it.
    """

    AUTO = "auto"
    EVENTS = "events"
    LIVE_TIME = "live_time"


def _resolve_method(
    run: SimulationRun, method: SamplingMethod, event_sink: TextIO | None
) -> SamplingMethod:
    method = SamplingMethod(method)
    regular = run.statistics.mode is SourceMode.REGULAR_EMITTER
    if method is SamplingMethod.LIVE_TIME and (regular or event_sink is not None):
        raise InvalidConfigError(
            "live_time sampling needs a Poissonian source and no event dump"
        )
    if method is SamplingMethod.AUTO:
        if regular or event_sink is not None:
            return SamplingMethod.EVENTS
        return SamplingMethod.LIVE_TIME
    return method


def simulate_stream(
    run: SimulationRun,
    *,
    method: SamplingMethod = SamplingMethod.AUTO,
    path_set: PathSet | None = None,
    event_sink: TextIO | None = None,
) -> CountRecord:
    """
    Detected count of one window: photon arrivals merged with dark events,
    passed through the nonparalyzable dead-time filter.

    ``event_sink`` receives every detected timestamp, one per line.
    """
    cap = settings.THREEPATH_MAX_EXPECTED_EVENTS
    if run.expected_events > cap:
        raise ResourceLimitError(
            f"{run.expected_events:.3g} expected events exceed the cap of {cap:.3g}"
        )
    method = _resolve_method(run, method, event_sink)
    detector = run.detector
    if method is SamplingMethod.LIVE_TIME:
        count = count_live_time(
            make_rng(run.rng_seed),
            run.photon_rate + detector.dark_rate_R0,
            detector.dead_time_tau,
            run.duration,
        )
    else:
        count = _count_events(run, event_sink)
    logger.debug(
        "simulated %s: %d counts in %g s (%s)",
        path_set.label if path_set is not None else "stream",
        count,
        run.duration,
        method.value,
    )
    return CountRecord(path_set, count, run.duration, run.rng_seed)


def _photon_arrivals(run: SimulationRun, batch: int):
    rng = make_rng(derive_seed(run.rng_seed, PHOTON_STREAM))
    statistics = run.statistics
    if statistics.mode is SourceMode.POISSONIAN:
        return PoissonArrivals(rng, run.photon_rate, batch)
    probability = run.photon_rate * statistics.period
    if probability > 1.0 + 1e-12:
        raise InvalidConfigError(
            f"incident rate {run.incident_rate:g} cps exceeds the emitter "
            f"repetition rate {1.0 / statistics.period:g} /s"
        )
    if statistics.period <= run.detector.dead_time_tau:
        logger.warning(
            "emitter period %g s is not above the dead time %g s; pulses will be lost",
            statistics.period,
            run.detector.dead_time_tau,
        )
    return RegularArrivals(rng, statistics.period, min(probability, 1.0))


def _count_events(run: SimulationRun, event_sink: TextIO | None) -> int:
    chunk = settings.THREEPATH_EVENT_CHUNK
    photons = _photon_arrivals(run, chunk)
    dark = PoissonArrivals(
        make_rng(derive_seed(run.rng_seed, DARK_STREAM)),
        run.detector.dark_rate_R0,
        chunk,
    )
    dead_time = DeadTimeFilter(
        run.detector.dead_time_tau, verify=settings.THREEPATH_VERIFY_DEAD_TIME
    )
    slabs = max(1, math.ceil(run.expected_events / chunk))
    width = run.duration / slabs
    for index in range(1, slabs + 1):
        stop = run.duration if index == slabs else index * width
        merged = np.sort(np.concatenate((photons.until(stop), dark.until(stop))))
        detected = dead_time(merged)
        if event_sink is not None and detected.size:
            np.savetxt(event_sink, detected, fmt="%.15g")
    return dead_time.count


def leg_rate(
    rate: float,
    noise: SourceNoise,
    seed: int,
    order_position: int = 0,
) -> float:
    """Incident rate of one leg after source fluctuation and drift."""
    if noise.is_quiet:
        return rate
    factor = 1.0 + noise.drift_per_leg * order_position
    if noise.intensity_sigma > 0.0:
        rng = make_rng(derive_seed(seed, NOISE_STREAM))
        factor += noise.intensity_sigma * rng.standard_normal()
    return rate * max(factor, 0.0)


def simulate_combination(
    config: InterferometerConfig,
    paths: PathSet,
    detector: DetectorModel,
    duration: float,
    seed: int,
    *,
    statistics: SourceStatistics = SourceStatistics(),
    noise: SourceNoise = SourceNoise(),
    order_position: int = 0,
    rates: RateFunction | None = None,
    method: SamplingMethod = SamplingMethod.AUTO,
) -> CountRecord:
    """
    Simulate one leg with ``paths`` open.

    ``rates`` replaces the Born-rule incident rates of ``config`` (for
    example with an injected violation).
    """
    rate_of = rates if rates is not None else partial(incident_rate, config)
    run = SimulationRun(
        incident_rate=leg_rate(rate_of(paths), noise, seed, order_position),
        detector=detector,
        duration=duration,
        rng_seed=seed,
        statistics=statistics,
    )
    return simulate_stream(run, method=method, path_set=paths)
