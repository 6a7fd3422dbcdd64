"""
Closed-form interference, sum-rule and detector formulas.

Every function here is pure and deterministic.
"""

import itertools
import math
from typing import Callable

from threepath.exceptions import (
    DegenerateNormalizationError,
    InvalidConfigError,
    OutOfRangeError,
    SaturationError,
    TotalInternalReflectionError,
)

from .types import (
    DetectorModel,
    InterferometerConfig,
    PathSet,
    PhasePlateGeometry,
    SumRuleInputs,
)

# Relative slack accepted below the dark floor before f-inverse refuses a rate.
DARK_FLOOR_TOLERANCE = 1e-12

RateFunction = Callable[[PathSet], float]


def incident_rate(config: InterferometerConfig, paths: PathSet) -> float:
    """
    Incident photon rate with the given paths open.

    Single-path rates plus one interference term
    2 V_xy sqrt(R_x R_y) cos(phi_x - phi_y) per open pair.
    """
    open_paths = list(paths.paths())
    total = sum(config.rate_of(path) for path in open_paths)
    for first, second in itertools.combinations(open_paths, 2):
        amplitude = math.sqrt(config.rate_of(first) * config.rate_of(second))
        relative = config.phase.phase_of(first) - config.phase.phase_of(second)
        total += (
            2.0
            * config.visibility(first, second)
            * amplitude
            * math.cos(relative)
        )
    # Destructive interference can round to a tiny negative number.
    return max(total, 0.0)


def incident_rates(config: InterferometerConfig) -> dict[PathSet, float]:
    return {paths: incident_rate(config, paths) for paths in PathSet.combinations()}


def detector_forward(rate: float, model: DetectorModel) -> float:
    """
    Detected rate for an incident photon rate.

    f(R) = (eta R + R0) / (1 + (eta R + R0) tau)
    """
    if not math.isfinite(rate) or rate < 0.0:
        raise InvalidConfigError(f"incident rate must be finite and >= 0, got {rate!r}")
    total = model.efficiency * rate + model.dark_rate_R0
    return total / (1.0 + total * model.dead_time_tau)


def detector_inverse(
    detected: float, model: DetectorModel, *, strict: bool = True
) -> float:
    """
    Incident photon rate that produces ``detected`` counts/s.

    With ``strict=False`` rates below the dark floor give a negative
    incident rate instead of an error; saturation is always an error.
    """
    if not math.isfinite(detected) or detected < 0.0:
        raise OutOfRangeError(f"detected rate must be finite and >= 0, got {detected!r}")
    tau = model.dead_time_tau
    if tau > 0.0 and detected * tau >= 1.0:
        raise SaturationError(
            f"detected rate {detected:g} cps is at or above the saturation rate "
            f"1/tau = {1.0 / tau:g} cps"
        )
    floor = model.dark_floor
    if strict and detected < floor * (1.0 - DARK_FLOOR_TOLERANCE):
        raise OutOfRangeError(
            f"detected rate {detected:g} cps is below the dark floor {floor:g} cps"
        )
    total = detected / (1.0 - detected * tau)
    incident = (total - model.dark_rate_R0) / model.efficiency
    if strict:
        return max(incident, 0.0)
    return incident


def epsilon(inputs: SumRuleInputs) -> float:
    """R_ABC - R_AB - R_AC - R_BC + R_A + R_B + R_C - R_0"""
    a, b, c = PathSet.A, PathSet.B, PathSet.C
    return (
        inputs[a | b | c]
        - inputs[a | b]
        - inputs[a | c]
        - inputs[b | c]
        + inputs[a]
        + inputs[b]
        + inputs[c]
        - inputs[PathSet.NONE]
    )


def pair_terms(inputs: SumRuleInputs) -> dict[PathSet, float]:
    """Background-corrected two-path interference term of each pair."""
    background = inputs[PathSet.NONE]
    terms = {}
    for first, second in itertools.combinations((PathSet.A, PathSet.B, PathSet.C), 2):
        terms[first | second] = (
            inputs[first | second] - inputs[first] - inputs[second] + background
        )
    return terms


def delta(inputs: SumRuleInputs) -> float:
    """Sum of the magnitudes of the three two-path interference terms."""
    return sum(abs(term) for term in pair_terms(inputs).values())


def kappa(inputs: SumRuleInputs) -> float:
    """
    kappa = epsilon / delta.

    Raises ``DegenerateNormalizationError`` when delta is zero.
    """
    normalization = delta(inputs)
    if normalization == 0.0:
        raise DegenerateNormalizationError("delta is zero; kappa is undefined")
    return epsilon(inputs) / normalization


def detected_inputs(rates: RateFunction, model: DetectorModel) -> SumRuleInputs:
    """Expected detected rates of all eight combinations."""
    return SumRuleInputs(
        tuple(detector_forward(rates(paths), model) for paths in PathSet.combinations())
    )


def plate_angle_to_phase(theta: float, geom: PhasePlateGeometry) -> float:
    """
    Optical phase added by a plate tilted by ``theta`` radians.

    The beam crosses the plate twice, hence the 2d path length.
    """
    theta = theta + geom.zero_angle_offset
    sin_refracted = geom.n1 * math.sin(theta) / geom.n2
    if abs(sin_refracted) > 1.0:
        raise TotalInternalReflectionError(
            f"no refracted beam at {theta:g} rad for n1={geom.n1}, n2={geom.n2}"
        )
    refracted = math.asin(sin_refracted)
    bracket = (
        geom.n1
        - geom.n2
        + (geom.n2 - geom.n1 * math.cos(theta - refracted)) / math.cos(refracted)
    )
    return 2.0 * math.pi / geom.wavelength_lambda * 2.0 * geom.thickness_d * bracket
