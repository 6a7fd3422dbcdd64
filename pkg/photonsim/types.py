import enum
import math
from dataclasses import dataclass

from optics.types import DetectorModel, PathSet
from threepath.exceptions import InvalidConfigError


class SourceMode(enum.Enum):
    POISSONIAN = "poissonian"
    REGULAR_EMITTER = "regular_emitter"


@dataclass(frozen=True)
class SourceStatistics:
    """
    Photon statistics of the light source.

    A regular emitter fires at a fixed ``period`` (seconds); each pulse
    delivers a photon with probability eta * R * period. A period at or
    below the dead time is allowed but logged when simulated.
    """

    mode: SourceMode = SourceMode.POISSONIAN
    period: float | None = None

    def __post_init__(self):
        if self.mode is SourceMode.REGULAR_EMITTER:
            if self.period is None or not math.isfinite(self.period) or self.period <= 0:
                raise InvalidConfigError(
                    f"regular emitter needs a positive period, got {self.period!r}"
                )

    @classmethod
    def poissonian(cls) -> "SourceStatistics":
        return cls(SourceMode.POISSONIAN)

    @classmethod
    def regular_emitter(cls, period: float) -> "SourceStatistics":
        return cls(SourceMode.REGULAR_EMITTER, period)


@dataclass(frozen=True)
class SourceNoise:
    """
    Leg-to-leg intensity fluctuation and linear drift of the source.

    The incident rate of a leg is multiplied by
    ``1 + intensity_sigma * N(0, 1) + drift_per_leg * order_position``.
    """

    intensity_sigma: float = 0.0
    drift_per_leg: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.intensity_sigma) or self.intensity_sigma < 0:
            raise InvalidConfigError(
                f"intensity_sigma must be >= 0, got {self.intensity_sigma!r}"
            )
        if not math.isfinite(self.drift_per_leg):
            raise InvalidConfigError(
                f"drift_per_leg must be finite, got {self.drift_per_leg!r}"
            )

    @property
    def is_quiet(self) -> bool:
        return self.intensity_sigma == 0.0 and self.drift_per_leg == 0.0


@dataclass(frozen=True)
class SimulationRun:
    incident_rate: float
    detector: DetectorModel
    duration: float
    rng_seed: int
    statistics: SourceStatistics = SourceStatistics()

    def __post_init__(self):
        if not math.isfinite(self.incident_rate) or self.incident_rate < 0:
            raise InvalidConfigError(
                f"incident rate must be finite and >= 0, got {self.incident_rate!r}"
            )
        if not math.isfinite(self.duration) or self.duration <= 0:
            raise InvalidConfigError(f"duration must be > 0, got {self.duration!r}")
        if not 0 <= int(self.rng_seed) < 1 << 64:
            raise InvalidConfigError("seed must be a 64-bit unsigned integer")

    @property
    def photon_rate(self) -> float:
        return self.detector.efficiency * self.incident_rate

    @property
    def expected_events(self) -> float:
        """Expected number of raw (unfiltered) events in the window."""
        dark = self.detector.dark_rate_R0 * self.duration
        if self.statistics.mode is SourceMode.REGULAR_EMITTER:
            return self.duration / self.statistics.period + dark
        return self.photon_rate * self.duration + dark


@dataclass(frozen=True)
class CountRecord:
    """
    Detected counts of one integration window.

    ``path_set`` is None for a bare stream not tied to a combination.
    """

    path_set: PathSet | None
    detected_count: int
    duration: float
    rng_seed: int

    @property
    def rate(self) -> float:
        return self.detected_count / self.duration
