"""
The eight-combination kappa measurement and the kappa^det prediction.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from functools import partial
from typing import Sequence

import numpy as np

from django.conf import settings

from optics.formulas import (
    delta,
    detected_inputs,
    detector_forward,
    detector_inverse,
    epsilon,
    incident_rate,
    kappa,
)
from optics.types import DetectorModel, InterferometerConfig, PathSet, PhasePoint, SumRuleInputs
from photonsim.seeding import derive_seed, make_rng
from photonsim.simulation import SamplingMethod, simulate_combination
from photonsim.types import SourceNoise, SourceStatistics
from photonsim.violation import inject_violation
from threepath.exceptions import DegenerateNormalizationError, InvalidConfigError

from .types import KappaEstimate, LegRecord

logger = logging.getLogger(__name__)

ABC = PathSet.A | PathSet.B | PathSet.C
# Seed index of the per-run order shuffle; leg seeds use 0..7.
ORDER_STREAM = 8


def combination_order(seed: int, run_index: int, randomize: bool = True) -> tuple[PathSet, ...]:
    """Order in which the shutters are set in one run."""
    combinations = PathSet.combinations()
    if not randomize:
        return combinations
    rng = make_rng(derive_seed(seed, run_index, ORDER_STREAM))
    return tuple(combinations[i] for i in rng.permutation(len(combinations)))


def leg_seed(seed: int, run_index: int, paths: PathSet) -> int:
    return derive_seed(seed, run_index, paths.value)


def measure_kappa(
    config: InterferometerConfig,
    detector: DetectorModel,
    phase: PhasePoint,
    n_runs: int,
    leg_duration: float,
    seed: int,
    *,
    randomize: bool = True,
    statistics: SourceStatistics = SourceStatistics(),
    noise: SourceNoise = SourceNoise(),
    violation_strength: float = 0.0,
    threads: int | None = None,
    method: SamplingMethod = SamplingMethod.AUTO,
) -> KappaEstimate:
    """
    Simulate ``n_runs`` runs of all eight shutter combinations at ``phase``
    and average the per-run kappa.

    Each leg's seed depends on (seed, run, combination) only, so the result
    does not depend on ``threads``.
    """
    if n_runs < 1:
        raise InvalidConfigError(f"n_runs must be >= 1, got {n_runs}")
    if not leg_duration > 0.0:
        raise InvalidConfigError(f"leg_duration must be > 0, got {leg_duration!r}")
    config = config.at_phase(phase)
    rates = inject_violation(config, violation_strength) if violation_strength else None

    def run(index: int):
        counts = {}
        legs = []
        for position, paths in enumerate(combination_order(seed, index, randomize)):
            seed_of_leg = leg_seed(seed, index, paths)
            record = simulate_combination(
                config,
                paths,
                detector,
                leg_duration,
                seed_of_leg,
                statistics=statistics,
                noise=noise,
                order_position=position,
                rates=rates,
                method=method,
            )
            counts[paths] = record.rate
            legs.append(
                LegRecord(
                    index, paths, position, record.detected_count, leg_duration, seed_of_leg
                )
            )
        inputs = SumRuleInputs.from_mapping(counts)
        normalization = delta(inputs)
        if normalization == 0.0:
            raise DegenerateNormalizationError(f"delta is zero in run {index}")
        value = epsilon(inputs)
        return value, normalization, value / normalization, legs

    with ThreadPoolExecutor(max_workers=max(threads or settings.THREEPATH_THREADS, 1)) as pool:
        results = list(pool.map(run, range(n_runs)))

    epsilons = np.array([r[0] for r in results])
    deltas = np.array([r[1] for r in results])
    kappas = np.array([r[2] for r in results])
    stderr = float(kappas.std(ddof=1) / math.sqrt(n_runs)) if n_runs > 1 else 0.0
    estimate = KappaEstimate(
        kappa_mean=float(kappas.mean()),
        kappa_stderr=stderr,
        epsilon_mean=float(epsilons.mean()),
        delta_mean=float(deltas.mean()),
        n_runs=n_runs,
        phase=phase,
        legs=tuple(leg for r in results for leg in r[3]),
    )
    logger.info(
        "kappa at (%.4g, %.4g) rad: %.5f +- %.5f over %d runs",
        phase.phi_A,
        phase.phi_C,
        estimate.kappa_mean,
        estimate.kappa_stderr,
        n_runs,
    )
    return estimate


def predict_kappa_det(
    measured_single: Sequence[float],
    detector: DetectorModel,
    phase: PhasePoint,
) -> float:
    """
    kappa^det from the three detected single-path rates.

    The rates are corrected with the inverse detector model, all eight
    Born-rule incident rates are formed (visibilities 1) and pushed back
    through the detector; kappa of those predicted detected rates is the
    detector-only deviation.
    """
    rate_a, rate_b, rate_c = (detector_inverse(rate, detector) for rate in measured_single)
    config = InterferometerConfig(rate_a, rate_b, rate_c, phase)
    return predicted_kappa(config, detector)


def predicted_kappa(config: InterferometerConfig, detector: DetectorModel) -> float:
    """kappa^det straight from incident single-path rates."""
    return kappa(detected_inputs(partial(incident_rate, config), detector))


def detected_singles(
    config: InterferometerConfig, detector: DetectorModel
) -> tuple[float, float, float]:
    return tuple(
        detector_forward(config.rate_of(path), detector)
        for path in (PathSet.A, PathSet.B, PathSet.C)
    )


def scale_for_detected_rate(
    config: InterferometerConfig,
    detector: DetectorModel,
    phase: PhasePoint,
    target: float,
) -> float:
    """
    Factor on the single-path rates that puts the detected R_ABC at
    ``phase`` at ``target`` cps.

    The incident R_ABC is linear in the factor, so the factor is
    f_inv(target) / R_ABC(config).
    """
    base = incident_rate(config.at_phase(phase), ABC)
    if base <= 0.0:
        raise InvalidConfigError("no three-path intensity at this phase point")
    return detector_inverse(target, detector) / base
