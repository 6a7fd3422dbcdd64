import logging
from functools import partial
from typing import Sequence

from optics.formulas import detected_inputs, incident_rate
from optics.types import DetectorModel, InterferometerConfig, PathSet, PhasePoint
from photonsim.seeding import derive_seed
from photonsim.types import SourceNoise, SourceStatistics
from threepath.exceptions import InvalidConfigError

from .protocol import (
    detected_singles,
    measure_kappa,
    predict_kappa_det,
    scale_for_detected_rate,
)
from .types import SweepRow

logger = logging.getLogger(__name__)

ABC = PathSet.A | PathSet.B | PathSet.C


def scale_factors_for_targets(
    config: InterferometerConfig,
    detector: DetectorModel,
    phase_max: PhasePoint,
    targets: Sequence[float],
) -> list[float]:
    """Scale factors for detected R_ABC targets; a target at or above 1/tau saturates."""
    return [scale_for_detected_rate(config, detector, phase_max, target) for target in targets]


def intensity_sweep(
    config: InterferometerConfig,
    scale_factors: Sequence[float],
    detector: DetectorModel,
    phase_max: PhasePoint,
    n_runs: int,
    leg_duration: float,
    seed: int,
    *,
    measure: bool = True,
    statistics: SourceStatistics = SourceStatistics(),
    noise: SourceNoise = SourceNoise(),
    violation_strength: float = 0.0,
    threads: int | None = None,
) -> list[SweepRow]:
    """
    kappa^det and measured kappa at ``phase_max`` for each scaling of the
    single-path rates (ratios fixed).

    ``violation_strength`` injects a genuine third-order term into every
    measurement; its incident kappa is the same at every scale.
    """
    if len(scale_factors) == 0:
        raise InvalidConfigError("the sweep needs at least one scale factor")
    rows = []
    for index, factor in enumerate(scale_factors):
        if not factor > 0.0:
            raise InvalidConfigError(f"scale factors must be > 0, got {factor!r}")
        scaled = config.scaled(factor).at_phase(phase_max)
        detected = detected_inputs(partial(incident_rate, scaled), detector)
        kappa_det = predict_kappa_det(detected_singles(scaled, detector), detector, phase_max)
        r_abc_det = detected[ABC]
        estimate = None
        if measure:
            estimate = measure_kappa(
                scaled,
                detector,
                phase_max,
                n_runs,
                leg_duration,
                derive_seed(seed, index),
                statistics=statistics,
                noise=noise,
                violation_strength=violation_strength,
                threads=threads,
            )
        logger.info(
            "sweep x%.4g: R_ABC^det = %.0f cps, kappa^det = %.5f", factor, r_abc_det, kappa_det
        )
        rows.append(SweepRow(factor, r_abc_det, kappa_det, estimate))
    return rows
