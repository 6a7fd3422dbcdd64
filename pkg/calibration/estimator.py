"""
Beam-combination calibration of the detector dead time and dark rate.

Two beams that do not interfere add incoherently, so once the detected rates
are corrected with the right (tau, R0) the incident rates satisfy
R_AB = R_A + R_B. The estimator fits (tau, R0) to that additivity. No phase
or interference term is ever evaluated here.
"""

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import least_squares

from django.conf import settings

from optics.formulas import detector_forward, detector_inverse
from optics.types import DetectorModel
from photonsim.seeding import derive_seed, make_rng
from photonsim.simulation import simulate_stream
from photonsim.types import SimulationRun
from threepath.exceptions import (
    ConvergenceError,
    IllConditionedWarning,
    InvalidConfigError,
)

from .types import CalibrationResult, QuadrupleMeasurement

logger = logging.getLogger(__name__)

MIN_QUADRUPLES = 3
MIN_DECADES = 1.0
DRIFT_SIGMAS = 5.0
# Bootstrap fits allowed to fail before the whole estimate is rejected.
MAX_FAILED_FRACTION = 0.1
TOLERANCE = 1e-12
NS = 1e-9


def nonlinearity_defect(q: QuadrupleMeasurement, tau: float, r0: float) -> float:
    """
    Additivity shortfall of the inferred incident rates,
    f_inv(a) + f_inv(b) - f_inv(ab) - f_inv(dark).

    Zero in expectation at the true (tau, r0); positive when dead-time loss
    is left uncorrected. r0 cancels, it only fixes each term's offset.
    """
    model = DetectorModel(dead_time_tau=tau, dark_rate_R0=r0)
    inverse = [
        detector_inverse(rate, model, strict=False)
        for rate in (q.rate_a, q.rate_b, q.rate_ab, q.dark_rate)
    ]
    return inverse[0] + inverse[1] - inverse[2] - inverse[3]


@dataclass(frozen=True)
class _Legs:
    """Quadruple legs as arrays (rates in cps, durations in s)."""

    dark: np.ndarray
    a: np.ndarray
    b: np.ndarray
    ab: np.ndarray
    duration: np.ndarray

    @classmethod
    def from_measurements(cls, data: Sequence[QuadrupleMeasurement]) -> "_Legs":
        return cls(
            dark=np.array([q.dark_rate for q in data]),
            a=np.array([q.rate_a for q in data]),
            b=np.array([q.rate_b for q in data]),
            ab=np.array([q.rate_ab for q in data]),
            duration=np.array([q.duration for q in data]),
        )

    def take(self, indices: np.ndarray) -> "_Legs":
        return _Legs(
            self.dark[indices],
            self.a[indices],
            self.b[indices],
            self.ab[indices],
            self.duration[indices],
        )

    @property
    def highest(self) -> float:
        return float(max(self.a.max(), self.b.max(), self.ab.max(), self.dark.max()))


def _corrected(rate: np.ndarray, tau: float) -> np.ndarray:
    return rate / (1.0 - rate * tau)


def _rate_variance(rate: np.ndarray, duration: np.ndarray) -> np.ndarray:
    # Poisson variance of a rate, at least one count's worth.
    return np.maximum(rate * duration, 1.0) / duration**2


def _weights(legs: _Legs, tau: float) -> tuple[np.ndarray, np.ndarray]:
    """Inverse standard deviations of the defect and dark residuals at tau."""

    def propagated(rate):
        slope = 1.0 / (1.0 - rate * tau) ** 2
        return slope**2 * _rate_variance(rate, legs.duration)

    defect_var = (
        propagated(legs.a)
        + propagated(legs.b)
        + propagated(legs.ab)
        + propagated(legs.dark)
    )
    return 1.0 / np.sqrt(defect_var), 1.0 / np.sqrt(propagated(legs.dark))


def _residuals(params, legs: _Legs, defect_w, dark_w):
    tau = params[0] * NS
    r0 = params[1]
    defect = (
        _corrected(legs.a, tau)
        + _corrected(legs.b, tau)
        - _corrected(legs.ab, tau)
        - _corrected(legs.dark, tau)
    )
    dark = _corrected(legs.dark, tau) - r0
    return np.concatenate((defect * defect_w, dark * dark_w))


def _initial_guess(legs: _Legs, tau_max: float) -> np.ndarray:
    # First order in tau: a + b - ab - d + tau (a^2 + b^2 - ab^2 - d^2) = 0.
    denominator = legs.ab**2 + legs.dark**2 - legs.a**2 - legs.b**2
    with np.errstate(divide="ignore", invalid="ignore"):
        guesses = (legs.a + legs.b - legs.ab - legs.dark) / denominator
    guesses = guesses[np.isfinite(guesses)]
    tau0 = float(np.median(guesses)) if guesses.size else 0.0
    tau0 = min(max(tau0, 0.0), 0.5 * tau_max)
    return np.array([tau0 / NS, max(float(np.median(legs.dark)), 0.0)])


def _fit(legs: _Legs, x0: np.ndarray | None = None, weight_tau: float | None = None):
    """
    Weighted least squares over (tau [ns], r0 [cps]).

    Without ``weight_tau`` the weights are set at tau = 0, then refreshed at
    the first-pass estimate for a second pass.
    """
    tau_max = 0.999 / legs.highest if legs.highest > 0 else 1.0
    upper = np.array([tau_max / NS, np.inf])
    lower = np.zeros(2)
    if x0 is None:
        x0 = _initial_guess(legs, tau_max)
    x0 = np.clip(x0, lower, [0.999 * upper[0], np.inf])
    passes = [0.0, None] if weight_tau is None else [weight_tau]
    result = None
    for tau_w in passes:
        if tau_w is None:
            tau_w = float(result.x[0]) * NS
        defect_w, dark_w = _weights(legs, tau_w)
        result = least_squares(
            _residuals,
            x0,
            bounds=(lower, upper),
            args=(legs, defect_w, dark_w),
            xtol=TOLERANCE,
            ftol=TOLERANCE,
            gtol=TOLERANCE,
            x_scale="jac",
        )
        if not result.success:
            raise ConvergenceError(
                f"calibration fit did not converge: {result.message}",
                diagnostics={
                    "status": int(result.status),
                    "message": result.message,
                    "nfev": int(result.nfev),
                    "x": [float(v) for v in result.x],
                    "cost": float(result.cost),
                },
            )
        x0 = result.x
    return result.x


def check_drift(
    data: Sequence[QuadrupleMeasurement], sigmas: float = DRIFT_SIGMAS
) -> tuple[int, ...]:
    """Indices of quadruples whose repeated single-beam legs moved by > sigmas."""
    drifting = []
    for index, q in enumerate(data):
        if not q.has_repeats:
            continue
        for first, repeat in ((q.rate_a, q.rate_a_repeat), (q.rate_b, q.rate_b_repeat)):
            spread = math.sqrt(
                (max(first * q.duration, 1.0) + max(repeat * q.duration, 1.0))
            ) / q.duration
            if abs(first - repeat) > sigmas * spread:
                drifting.append(index)
                break
    if drifting:
        logger.warning(
            "intensity drift above %g sigma in quadruples %s", sigmas, drifting
        )
    return tuple(drifting)


def _decades(legs: _Legs) -> float:
    low = float(legs.ab.min())
    if low <= 0.0:
        return math.inf if legs.ab.max() > 0.0 else 0.0
    return math.log10(float(legs.ab.max()) / low)


def estimate_parameters(
    data: Sequence[QuadrupleMeasurement],
    counting_duration: float | None = None,
    *,
    resamples: int | None = None,
    seed: int = 0,
    threads: int | None = None,
) -> CalibrationResult:
    """
    Fit (tau, R0) to the quadruples and bootstrap their standard errors.

    ``counting_duration`` overrides the per-quadruple leg duration in the
    count-statistics weights.
    """
    data = list(data)
    if resamples is None:
        resamples = settings.THREEPATH_BOOTSTRAP_RESAMPLES
    if resamples < 2:
        raise InvalidConfigError(f"at least 2 bootstrap resamples are needed, got {resamples}")
    if len(data) < MIN_QUADRUPLES:
        raise InvalidConfigError(
            f"at least {MIN_QUADRUPLES} quadruples are needed, got {len(data)}"
        )
    if counting_duration is not None:
        if not counting_duration > 0.0:
            raise InvalidConfigError("counting duration must be > 0")
        data = [
            QuadrupleMeasurement(
                q.dark_rate,
                q.rate_a,
                q.rate_b,
                q.rate_ab,
                counting_duration,
                q.rate_a_repeat,
                q.rate_b_repeat,
            )
            for q in data
        ]
    threads = threads or settings.THREEPATH_THREADS
    legs = _Legs.from_measurements(data)

    decades = _decades(legs)
    if decades < MIN_DECADES:
        message = (
            f"combined rates span {decades:.2f} decades; tau and R0 are poorly "
            "constrained below one decade"
        )
        logger.warning(message)
        warnings.warn(message, IllConditionedWarning, stacklevel=2)

    best = _fit(legs)
    tau_hat = float(best[0]) * NS
    r0_hat = float(best[1])

    def resample(index: int):
        rng = make_rng(derive_seed(seed, index))
        chosen = rng.integers(0, len(data), size=len(data))
        try:
            return _fit(legs.take(chosen), x0=best, weight_tau=tau_hat)
        except ConvergenceError:
            return np.full(2, np.nan)

    with ThreadPoolExecutor(max_workers=max(threads, 1)) as pool:
        estimates = np.array(list(pool.map(resample, range(resamples))))
    failed = int(np.isnan(estimates[:, 0]).sum())
    if failed > MAX_FAILED_FRACTION * resamples or resamples - failed < 2:
        raise ConvergenceError(
            f"{failed} of {resamples} bootstrap fits failed",
            diagnostics={"failed": failed, "resamples": resamples},
        )
    stderr = np.nanstd(estimates, axis=0, ddof=1)

    residuals = tuple(nonlinearity_defect(q, tau_hat, r0_hat) for q in data)
    result = CalibrationResult(
        tau_hat=tau_hat,
        tau_stderr=float(stderr[0]) * NS,
        r0_hat=r0_hat,
        r0_stderr=float(stderr[1]),
        residuals=residuals,
        n_quadruples=len(data),
        bootstrap_resamples=resamples,
        bootstrap_failures=failed,
        drifting=check_drift(data),
    )
    logger.info(
        "calibration: tau = %.3f(%.3f) ns, R0 = %.1f(%.1f) cps from %d quadruples",
        result.tau_hat / NS,
        result.tau_stderr / NS,
        result.r0_hat,
        result.r0_stderr,
        result.n_quadruples,
    )
    return result


def synthesize_quadruples(
    detector: DetectorModel,
    combined_rates: Sequence[float],
    duration: float,
    seed: int,
    *,
    split: float = 0.5,
    noiseless: bool = False,
    repeats: bool = False,
) -> list[QuadrupleMeasurement]:
    """
    Quadruples for two incoherent beams whose incident rates add up to each
    of ``combined_rates``; beam A carries the fraction ``split``.

    Legs are simulated with photonsim unless ``noiseless``, in which case
    the analytic detector response is used.
    """
    if not 0.0 < split < 1.0:
        raise InvalidConfigError(f"split must lie in (0, 1), got {split!r}")

    def measure(rate: float, index: int, leg: int) -> float:
        if noiseless:
            return detector_forward(rate, detector)
        run = SimulationRun(rate, detector, duration, derive_seed(seed, index, leg))
        return simulate_stream(run).rate

    data = []
    for index, combined in enumerate(combined_rates):
        beam_a, beam_b = split * combined, (1.0 - split) * combined
        data.append(
            QuadrupleMeasurement(
                dark_rate=measure(0.0, index, 0),
                rate_a=measure(beam_a, index, 1),
                rate_b=measure(beam_b, index, 2),
                rate_ab=measure(combined, index, 3),
                duration=duration,
                rate_a_repeat=measure(beam_a, index, 4) if repeats else None,
                rate_b_repeat=measure(beam_b, index, 5) if repeats else None,
            )
        )
    return data
