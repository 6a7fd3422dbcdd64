import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from django.conf import settings

from optics.formulas import detector_forward, incident_rate, plate_angle_to_phase
from optics.types import DetectorModel, InterferometerConfig, PathSet, PhasePlateGeometry, PhasePoint
from photonsim.seeding import derive_seed
from photonsim.types import SourceNoise, SourceStatistics
from threepath.exceptions import DegenerateNormalizationError

from .protocol import measure_kappa, predicted_kappa
from .types import PhaseScan, ScanPoint, ScanSpec

logger = logging.getLogger(__name__)

ABC = PathSet.A | PathSet.B | PathSet.C
REFINE_SWEEPS = 50


def phase_grid_from_angles(
    angles: Sequence[float], geometry: PhasePlateGeometry
) -> tuple[float, ...]:
    """Plate phases (radians) for a list of plate rotation angles (radians)."""
    return tuple(plate_angle_to_phase(theta, geometry) for theta in angles)


def _three_path_detected(
    config: InterferometerConfig, detector: DetectorModel, phase: PhasePoint
) -> float:
    return detector_forward(incident_rate(config.at_phase(phase), ABC), detector)


def _neighbourhood(grid: tuple[float, ...], index: int) -> tuple[float, float]:
    return grid[max(index - 1, 0)], grid[min(index + 1, len(grid) - 1)]


def refine_maximum(
    spec: ScanSpec,
    config: InterferometerConfig,
    detector: DetectorModel,
    index: tuple[int, int],
) -> PhasePoint:
    """
    Refine the grid argmax of the detected three-path rate by bounded line
    searches along each axis in turn, inside the neighbouring cells, until
    the point stops moving.
    """
    i, j = index
    low_a, high_a = _neighbourhood(spec.grid_A, i)
    low_c, high_c = _neighbourhood(spec.grid_C, j)
    best = spec.plate_point(i, j)

    def rate(point: PhasePoint) -> float:
        return _three_path_detected(config, detector, point.shifted(spec.origin, -1.0))

    def line_search(objective, low: float, high: float, current: float) -> float:
        if not low < high:
            return current
        found = minimize_scalar(
            objective, bounds=(low, high), method="bounded", options={"xatol": 1e-12}
        )
        return float(found.x) if found.fun <= objective(current) else current

    for _ in range(REFINE_SWEEPS):
        phi_a = line_search(
            lambda a: -rate(PhasePoint(a, best.phi_C)), low_a, high_a, best.phi_A
        )
        phi_c = line_search(
            lambda c: -rate(PhasePoint(phi_a, c)), low_c, high_c, best.phi_C
        )
        moved = abs(phi_a - best.phi_A) + abs(phi_c - best.phi_C)
        best = PhasePoint(phi_a, phi_c)
        if moved < 1e-11:
            break
    return best


def scan_phase_space(
    spec: ScanSpec,
    config: InterferometerConfig,
    detector: DetectorModel,
    *,
    measure: bool = True,
    statistics: SourceStatistics = SourceStatistics(),
    noise: SourceNoise = SourceNoise(),
    violation_strength: float = 0.0,
    threads: int | None = None,
) -> PhaseScan:
    """
    Detected three-path rate, measured kappa and predicted kappa^det at
    every raster point. With ``measure=False`` only the analytic surfaces
    are evaluated.

    Points where delta vanishes keep None for the affected values.
    """

    def evaluate(index: tuple[int, int]) -> ScanPoint:
        i, j = index
        phase = spec.phase_at(i, j)
        plate = spec.plate_point(i, j)
        try:
            prediction = predicted_kappa(config.at_phase(phase), detector)
        except DegenerateNormalizationError:
            logger.warning("delta vanishes at (%g, %g); no kappa^det", plate.phi_A, plate.phi_C)
            prediction = None
        estimate = None
        if measure:
            try:
                estimate = measure_kappa(
                    config,
                    detector,
                    phase,
                    spec.runs_per_point,
                    spec.leg_duration,
                    derive_seed(spec.base_seed, i, j),
                    statistics=statistics,
                    noise=noise,
                    violation_strength=violation_strength,
                    threads=1,
                )
            except DegenerateNormalizationError:
                logger.warning(
                    "degenerate delta at (%g, %g); point recorded as missing",
                    plate.phi_A,
                    plate.phi_C,
                )
        logger.debug("scan point (%d, %d) done", i, j)
        return ScanPoint(
            phi_A=plate.phi_A,
            phi_C=plate.phi_C,
            r_abc_det=_three_path_detected(config, detector, phase),
            estimate=estimate,
            kappa_det_pred=prediction,
        )

    indices = list(spec.indices())
    with ThreadPoolExecutor(max_workers=max(threads or settings.THREEPATH_THREADS, 1)) as pool:
        points = tuple(pool.map(evaluate, indices))

    intensities = np.array([point.r_abc_det for point in points])
    best = indices[int(np.argmax(intensities))]
    argmax = spec.plate_point(*best)
    refined = refine_maximum(spec, config, detector, best)
    logger.info(
        "scanned %d x %d points; three-path maximum near (%.4f pi, %.4f pi)",
        *spec.shape,
        refined.phi_A / np.pi,
        refined.phi_C / np.pi,
    )
    return PhaseScan(spec=spec, points=points, argmax=argmax, refined_max=refined)
