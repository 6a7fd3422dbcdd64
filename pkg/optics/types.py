"""
Value types of the interference and detector model.

All types are frozen dataclasses; constructing one validates its invariants
and raises ``InvalidConfigError`` on failure.
"""

import enum
import math
from dataclasses import dataclass
from typing import Iterator, Mapping

from threepath.exceptions import InvalidConfigError


class PathSet(enum.Flag):
    """
    Open interferometer paths.

    ``PathSet.NONE`` is the background configuration with all paths closed.
    """

    NONE = 0
    A = 1
    B = 2
    C = 4

    @classmethod
    def combinations(cls) -> tuple["PathSet", ...]:
        """All eight open/closed combinations, ordered by flag value."""
        return tuple(cls(value) for value in range(8))

    @classmethod
    def from_label(cls, label: str) -> "PathSet":
        label = label.strip().upper()
        if label in ("", "0", "NONE"):
            return cls.NONE
        paths = cls.NONE
        for char in label:
            try:
                paths |= cls[char]
            except KeyError:
                raise InvalidConfigError(f"unknown path label {label!r}") from None
        return paths

    @property
    def label(self) -> str:
        names = "".join(path.name for path in self.paths())
        return names or "0"

    def paths(self) -> Iterator["PathSet"]:
        """Single open paths, in A, B, C order."""
        for path in (PathSet.A, PathSet.B, PathSet.C):
            if path in self:
                yield path

    def __len__(self) -> int:
        return sum(1 for _ in self.paths())


def _require_finite(name: str, value: float, minimum: float | None = None) -> None:
    if not math.isfinite(value):
        raise InvalidConfigError(f"{name} must be finite, got {value!r}")
    if minimum is not None and value < minimum:
        raise InvalidConfigError(f"{name} must be >= {minimum}, got {value!r}")


@dataclass(frozen=True)
class PhasePoint:
    """
    Phases of paths A and C in radians; path B is the reference.
    """

    phi_A: float = 0.0
    phi_C: float = 0.0

    def __post_init__(self):
        _require_finite("phi_A", self.phi_A)
        _require_finite("phi_C", self.phi_C)

    def phase_of(self, path: PathSet) -> float:
        if path is PathSet.A:
            return self.phi_A
        if path is PathSet.C:
            return self.phi_C
        return 0.0

    def reduced(self) -> "PhasePoint":
        """Same point with both phases in [0, 2*pi)."""
        return PhasePoint(
            self.phi_A % (2 * math.pi),
            self.phi_C % (2 * math.pi),
        )

    def shifted(self, other: "PhasePoint", sign: float = 1.0) -> "PhasePoint":
        return PhasePoint(
            self.phi_A + sign * other.phi_A,
            self.phi_C + sign * other.phi_C,
        )


@dataclass(frozen=True)
class InterferometerConfig:
    """
    Single-path incident rates (photons/s), phase point and pairwise
    visibilities of the three-path interferometer.
    """

    rate_A: float
    rate_B: float
    rate_C: float
    phase: PhasePoint = PhasePoint()
    visibility_AB: float = 1.0
    visibility_AC: float = 1.0
    visibility_BC: float = 1.0

    def __post_init__(self):
        for name in ("rate_A", "rate_B", "rate_C"):
            _require_finite(name, getattr(self, name), minimum=0.0)
        for name in ("visibility_AB", "visibility_AC", "visibility_BC"):
            value = getattr(self, name)
            _require_finite(name, value, minimum=0.0)
            if value > 1.0:
                raise InvalidConfigError(f"{name} must be <= 1, got {value!r}")

    def rate_of(self, path: PathSet) -> float:
        return {
            PathSet.A: self.rate_A,
            PathSet.B: self.rate_B,
            PathSet.C: self.rate_C,
        }[path]

    def visibility(self, first: PathSet, second: PathSet) -> float:
        pair = first | second
        if pair == PathSet.A | PathSet.B:
            return self.visibility_AB
        if pair == PathSet.A | PathSet.C:
            return self.visibility_AC
        if pair == PathSet.B | PathSet.C:
            return self.visibility_BC
        raise InvalidConfigError(f"not a pair of paths: {pair.label}")

    def scaled(self, factor: float) -> "InterferometerConfig":
        """Same ratios and phases, all single-path rates times ``factor``."""
        return InterferometerConfig(
            rate_A=self.rate_A * factor,
            rate_B=self.rate_B * factor,
            rate_C=self.rate_C * factor,
            phase=self.phase,
            visibility_AB=self.visibility_AB,
            visibility_AC=self.visibility_AC,
            visibility_BC=self.visibility_BC,
        )

    def at_phase(self, phase: PhasePoint) -> "InterferometerConfig":
        return InterferometerConfig(
            rate_A=self.rate_A,
            rate_B=self.rate_B,
            rate_C=self.rate_C,
            phase=phase,
            visibility_AB=self.visibility_AB,
            visibility_AC=self.visibility_AC,
            visibility_BC=self.visibility_BC,
        )


@dataclass(frozen=True)
class DetectorModel:
    """
    Nonparalyzable photon counter.

    dead_time_tau in seconds, dark_rate_R0 in counts/s, efficiency applied
    to photons only.
    """

    dead_time_tau: float = 0.0
    dark_rate_R0: float = 0.0
    efficiency: float = 1.0

    def __post_init__(self):
        _require_finite("dead_time_tau", self.dead_time_tau, minimum=0.0)
        _require_finite("dark_rate_R0", self.dark_rate_R0, minimum=0.0)
        _require_finite("efficiency", self.efficiency)
        if not 0.0 < self.efficiency <= 1.0:
            raise InvalidConfigError(
                f"efficiency must be in (0, 1], got {self.efficiency!r}"
            )

    @property
    def is_linear(self) -> bool:
        return self.dead_time_tau == 0.0

    @property
    def max_rate(self) -> float:
        """Saturation rate 1/tau (infinite for a dead-time-free detector)."""
        if self.dead_time_tau == 0.0:
            return math.inf
        return 1.0 / self.dead_time_tau

    @property
    def dark_floor(self) -> float:
        """Detected rate with no incident light."""
        return self.dark_rate_R0 / (1.0 + self.dark_rate_R0 * self.dead_time_tau)


@dataclass(frozen=True)
class SumRuleInputs:
    """
    One detected rate per path combination, indexed by ``PathSet``.
    """

    rates: tuple[float, ...]

    def __post_init__(self):
        if len(self.rates) != 8:
            raise InvalidConfigError(
                f"sum rules need 8 rates, got {len(self.rates)}"
            )
        for paths, rate in zip(PathSet.combinations(), self.rates):
            _require_finite(f"rate {paths.label}", rate, minimum=0.0)

    @classmethod
    def from_mapping(cls, rates: Mapping[PathSet, float]) -> "SumRuleInputs":
        missing = [p.label for p in PathSet.combinations() if p not in rates]
        if missing:
            raise InvalidConfigError(f"missing rates for {', '.join(missing)}")
        return cls(tuple(float(rates[p]) for p in PathSet.combinations()))

    def __getitem__(self, paths: PathSet) -> float:
        return self.rates[paths.value]

    def shifted(self, constant: float) -> "SumRuleInputs":
        return SumRuleInputs(tuple(rate + constant for rate in self.rates))


@dataclass(frozen=True)
class PhasePlateGeometry:
    """
    Tilted glass plate passed twice by the beam.

    Lengths in meters, zero_angle_offset in radians.
    """

    thickness_d: float = 0.9e-3
    wavelength_lambda: float = 800e-9
    n1: float = 1.0
    n2: float = 1.5
    zero_angle_offset: float = 0.0

    def __post_init__(self):
        for name in ("thickness_d", "wavelength_lambda"):
            value = getattr(self, name)
            _require_finite(name, value)
            if value <= 0.0:
                raise InvalidConfigError(f"{name} must be > 0, got {value!r}")
        _require_finite("n1", self.n1, minimum=1.0)
        _require_finite("n2", self.n2, minimum=self.n1)
        _require_finite("zero_angle_offset", self.zero_angle_offset)
