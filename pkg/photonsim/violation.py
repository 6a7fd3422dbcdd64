"""
Synthetic three-path interference beyond Born's rule.

Used to check that the measurement chain can see a genuine violation.
"""

import math
from dataclasses import dataclass, field

from optics.formulas import delta, incident_rates
from optics.types import InterferometerConfig, PathSet, SumRuleInputs
from threepath.exceptions import DegenerateNormalizationError, NegativeRateError

ABC = PathSet.A | PathSet.B | PathSet.C


def violation_term(config: InterferometerConfig, strength: float) -> float:
    """strength * (R_A R_B R_C)^(1/3) * cos(phi_A) * cos(phi_C)"""
    geometric_mean = (config.rate_A * config.rate_B * config.rate_C) ** (1.0 / 3.0)
    return (
        strength
        * geometric_mean
        * math.cos(config.phase.phi_A)
        * math.cos(config.phase.phi_C)
    )


@dataclass(frozen=True)
class ViolatedRates:
    """
    Incident rates with an extra genuine three-path term on R_ABC.

    Calling it with a ``PathSet`` returns that combination's rate.
    """

    config: InterferometerConfig
    strength: float
    rates: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        rates = incident_rates(self.config)
        rates[ABC] += violation_term(self.config, self.strength)
        negative = [paths.label for paths, rate in rates.items() if rate < 0.0]
        if negative:
            raise NegativeRateError(
                f"violation strength {self.strength:g} gives negative rates for "
                + ", ".join(negative)
            )
        object.__setattr__(self, "rates", rates)

    def __call__(self, paths: PathSet) -> float:
        return self.rates[paths]

    @property
    def term(self) -> float:
        return violation_term(self.config, self.strength)

    @property
    def kappa(self) -> float:
        """kappa of the incident rates, i.e. with a linear detector."""
        return injected_kappa(self.config, self.strength)


def inject_violation(config: InterferometerConfig, strength: float) -> ViolatedRates:
    return ViolatedRates(config, strength)


def _born_delta(config: InterferometerConfig) -> float:
    rates = incident_rates(config)
    normalization = delta(SumRuleInputs.from_mapping(rates))
    if normalization == 0.0:
        raise DegenerateNormalizationError("delta is zero at this configuration")
    return normalization


def injected_kappa(config: InterferometerConfig, strength: float) -> float:
    return violation_term(config, strength) / _born_delta(config)


def violation_strength_for_kappa(config: InterferometerConfig, target: float) -> float:
    """Strength whose injected kappa equals ``target`` at the config's phase."""
    unit = violation_term(config, 1.0)
    geometric_mean = (config.rate_A * config.rate_B * config.rate_C) ** (1.0 / 3.0)
    if abs(unit) <= 1e-12 * geometric_mean:
        raise DegenerateNormalizationError(
            "the violation term vanishes at this phase point"
        )
    return target * _born_delta(config) / unit
