import math
from dataclasses import dataclass, field

from threepath.exceptions import InvalidConfigError

SUBADDITIVITY_SIGMAS = 5.0


def _check_rate(name: str, value: float) -> None:
    if not math.isfinite(value) or value < 0.0:
        raise InvalidConfigError(f"{name} must be finite and >= 0, got {value!r}")


@dataclass(frozen=True)
class QuadrupleMeasurement:
    """
    Detected rates (counts/s) of the four legs of a beam-combination
    measurement: dark, beam A alone, beam B alone, both beams.

    ``rate_a_repeat`` / ``rate_b_repeat`` are optional repeats of the
    single-beam legs taken after the combined leg, used for the drift check.
    """

    dark_rate: float
    rate_a: float
    rate_b: float
    rate_ab: float
    duration: float
    rate_a_repeat: float | None = None
    rate_b_repeat: float | None = None

    def __post_init__(self):
        for name in ("dark_rate", "rate_a", "rate_b", "rate_ab"):
            _check_rate(name, getattr(self, name))
        for name in ("rate_a_repeat", "rate_b_repeat"):
            if getattr(self, name) is not None:
                _check_rate(name, getattr(self, name))
        if not math.isfinite(self.duration) or self.duration <= 0.0:
            raise InvalidConfigError(f"duration must be > 0, got {self.duration!r}")
        # Dead time only removes counts; allow five standard deviations of
        # counting noise on top of the sum.
        spread = math.sqrt(
            max(self.rate_a + self.rate_b + self.rate_ab, 1.0) / self.duration
        )
        if self.rate_ab > self.rate_a + self.rate_b + SUBADDITIVITY_SIGMAS * spread:
            raise InvalidConfigError(
                f"combined rate {self.rate_ab:g} cps exceeds the sum of the "
                f"single-beam rates {self.rate_a + self.rate_b:g} cps"
            )

    @property
    def has_repeats(self) -> bool:
        return self.rate_a_repeat is not None and self.rate_b_repeat is not None


@dataclass(frozen=True)
class CalibrationResult:
    tau_hat: float
    tau_stderr: float
    r0_hat: float
    r0_stderr: float
    residuals: tuple[float, ...]
    n_quadruples: int
    bootstrap_resamples: int = 0
    bootstrap_failures: int = 0
    drifting: tuple[int, ...] = field(default=())

    def __post_init__(self):
        if not self.tau_hat >= 0.0:
            raise InvalidConfigError(f"tau_hat must be >= 0, got {self.tau_hat!r}")
        if not (self.tau_stderr >= 0.0 and self.r0_stderr >= 0.0):
            raise InvalidConfigError("standard errors must be >= 0")
