import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from optics.types import PathSet, PhasePoint
from threepath.exceptions import InvalidConfigError

SCAN_FIELDS = ("r_abc_det_cps", "kappa_mean", "kappa_stderr", "kappa_det_pred")


def _check_grid(name: str, grid: tuple[float, ...]) -> None:
    if not grid:
        raise InvalidConfigError(f"{name} must not be empty")
    values = np.asarray(grid, dtype=float)
    if not np.all(np.isfinite(values)):
        raise InvalidConfigError(f"{name} must be finite")
    if np.any(np.diff(values) <= 0.0):
        raise InvalidConfigError(f"{name} must be strictly increasing")


@dataclass(frozen=True)
class ScanSpec:
    """
    Raster of phase-plate positions (radians).

    ``origin`` is the plate position of the interferometer's zero phase;
    grid point (a, c) sets the phases (a - origin.phi_A, c - origin.phi_C).
    """

    grid_A: tuple[float, ...]
    grid_C: tuple[float, ...]
    runs_per_point: int = 1
    leg_duration: float = 1.0
    base_seed: int = 0
    origin: PhasePoint = PhasePoint()

    def __post_init__(self):
        object.__setattr__(self, "grid_A", tuple(float(v) for v in self.grid_A))
        object.__setattr__(self, "grid_C", tuple(float(v) for v in self.grid_C))
        _check_grid("grid_A", self.grid_A)
        _check_grid("grid_C", self.grid_C)
        if self.runs_per_point < 1:
            raise InvalidConfigError("runs_per_point must be >= 1")
        if not math.isfinite(self.leg_duration) or self.leg_duration <= 0.0:
            raise InvalidConfigError("leg_duration must be > 0")
        if not 0 <= int(self.base_seed) < 1 << 64:
            raise InvalidConfigError("seed must be a 64-bit unsigned integer")

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.grid_A), len(self.grid_C)

    def plate_point(self, i: int, j: int) -> PhasePoint:
        return PhasePoint(self.grid_A[i], self.grid_C[j])

    def phase_at(self, i: int, j: int) -> PhasePoint:
        """Interferometer phase at grid index (i, j)."""
        return self.plate_point(i, j).shifted(self.origin, -1.0)

    def indices(self) -> Iterator[tuple[int, int]]:
        rows, columns = self.shape
        for i in range(rows):
            for j in range(columns):
                yield i, j


@dataclass(frozen=True)
class LegRecord:
    """One simulated leg of a kappa measurement, as written to the audit CSV."""

    run_index: int
    combination: PathSet
    order_position: int
    count: int
    duration: float
    seed: int


@dataclass(frozen=True)
class CorrectedKappa:
    """Measured kappa with the detector-only kappa^det subtracted."""

    kappa: float
    stderr: float
    kappa_det: float

    @property
    def significance(self) -> float:
        """Corrected kappa in standard errors."""
        if self.stderr == 0.0:
            return 0.0 if self.kappa == 0.0 else math.copysign(math.inf, self.kappa)
        return self.kappa / self.stderr


@dataclass(frozen=True)
class KappaEstimate:
    """
    Mean kappa over runs; ``kappa_stderr`` is the standard error of the mean
    (0 for a single run).
    """

    kappa_mean: float
    kappa_stderr: float
    epsilon_mean: float
    delta_mean: float
    n_runs: int
    phase: PhasePoint
    legs: tuple[LegRecord, ...] = field(default=(), repr=False)

    def __post_init__(self):
        if self.n_runs < 1:
            raise InvalidConfigError("n_runs must be >= 1")
        if not self.kappa_stderr >= 0.0:
            raise InvalidConfigError("kappa_stderr must be >= 0")

    def corrected(self, kappa_det: float) -> CorrectedKappa:
        """
        Subtract the systematic kappa^det of the detector. kappa^det is
        analytic, so the standard error is that of the measurement.
        """
        return CorrectedKappa(self.kappa_mean - kappa_det, self.kappa_stderr, kappa_det)


@dataclass(frozen=True)
class ScanPoint:
    """
    One raster position in plate coordinates. ``estimate`` and
    ``kappa_det_pred`` are None where delta vanishes or nothing was measured.
    """

    phi_A: float
    phi_C: float
    r_abc_det: float
    estimate: KappaEstimate | None
    kappa_det_pred: float | None


@dataclass(frozen=True)
class PhaseScan:
    spec: ScanSpec
    points: tuple[ScanPoint, ...]
    argmax: PhasePoint
    refined_max: PhasePoint

    def values(self, name: str) -> np.ndarray:
        """Grid of one field, rows along grid_A; missing values are NaN."""
        if name not in SCAN_FIELDS:
            raise InvalidConfigError(f"unknown scan field {name!r}")

        def value(point: ScanPoint) -> float:
            if name == "r_abc_det_cps":
                return point.r_abc_det
            if name == "kappa_det_pred":
                return np.nan if point.kappa_det_pred is None else point.kappa_det_pred
            if point.estimate is None:
                return np.nan
            if name == "kappa_mean":
                return point.estimate.kappa_mean
            return point.estimate.kappa_stderr

        return np.array([value(point) for point in self.points]).reshape(self.spec.shape)


@dataclass(frozen=True)
class SweepRow:
    scale: float
    r_abc_det: float
    kappa_det: float
    estimate: KappaEstimate | None = None

    @property
    def kappa_exp(self) -> float | None:
        return None if self.estimate is None else self.estimate.kappa_mean

    @property
    def kappa_stderr(self) -> float | None:
        return None if self.estimate is None else self.estimate.kappa_stderr

    @property
    def corrected(self) -> CorrectedKappa | None:
        return None if self.estimate is None else self.estimate.corrected(self.kappa_det)
