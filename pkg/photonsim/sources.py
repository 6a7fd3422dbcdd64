"""
Arrival processes and the nonparalyzable dead-time filter.

Arrival generators are consumed slab by slab (``until(t)``) so a window can
be simulated without holding all of its events in memory.
"""

import bisect
import math

import numpy as np


class PoissonArrivals:
    """
    Homogeneous Poisson arrivals from exponential inter-arrival times.
    """

    def __init__(self, rng: np.random.Generator, rate: float, batch: int):
        self._rng = rng
        self._rate = rate
        self._batch = max(int(batch), 16)
        self._last = 0.0
        self._pending = np.empty(0)

    def until(self, stop: float) -> np.ndarray:
        """All arrivals before ``stop`` not returned by an earlier call."""
        if self._rate <= 0.0:
            return np.empty(0)
        chunks = []
        while True:
            if self._pending.size == 0:
                self._refill()
            cut = int(np.searchsorted(self._pending, stop, side="left"))
            chunks.append(self._pending[:cut])
            self._pending = self._pending[cut:]
            if self._pending.size:
                break
        return np.concatenate(chunks)

    def _refill(self) -> None:
        gaps = self._rng.exponential(1.0 / self._rate, size=self._batch)
        times = self._last + np.cumsum(gaps)
        self._last = float(times[-1])
        self._pending = times


class RegularArrivals:
    """
    Pulse train at k * period, each pulse carrying a photon with
    probability ``probability``.
    """

    def __init__(self, rng: np.random.Generator, period: float, probability: float):
        self._rng = rng
        self._period = period
        self._probability = probability
        self._next_index = 0

    def until(self, stop: float) -> np.ndarray:
        end = max(math.ceil(stop / self._period), self._next_index)
        times = np.arange(self._next_index, end) * self._period
        times = times[times < stop]
        self._next_index += int(times.size)
        if self._probability >= 1.0:
            return times
        keep = self._rng.random(times.size) < self._probability
        return times[keep]


class DeadTimeFilter:
    """
    Nonparalyzable dead time: an event is detected iff it comes at least
    ``tau`` after the previous detection.

    The filter keeps its state between calls, so consecutive slabs of one
    sorted stream can be passed in order. The detector starts live.
    """

    def __init__(self, tau: float, verify: bool = False):
        self.tau = tau
        self.verify = verify
        self.count = 0
        self._last_detection = -math.inf
        self._last_event = -math.inf

    def __call__(self, times: np.ndarray) -> np.ndarray:
        if times.size == 0:
            return times
        if self.tau == 0.0:
            detected = times
        else:
            detected = times[self._mask(times)]
        if self.verify:
            self._check(detected)
        if detected.size:
            self._last_detection = float(detected[-1])
        self._last_event = float(times[-1])
        self.count += int(detected.size)
        return detected

    def _mask(self, times: np.ndarray) -> np.ndarray:
        # An event at least tau after the previous *event* is always detected;
        # only events inside clusters need the sequential rule.
        gaps = np.diff(times, prepend=self._last_event)
        isolated = gaps >= self.tau
        mask = isolated.copy()
        clustered = np.flatnonzero(~isolated).tolist()
        if not clustered:
            return mask
        values = times.tolist()
        tau = self.tau
        last = self._last_detection
        previous = -2
        for index in clustered:
            if index != previous + 1:
                # First clustered event after an isolated (detected) one.
                last = values[index - 1] if index > 0 else self._last_detection
            if values[index] - last >= tau:
                mask[index] = True
                last = values[index]
            previous = index
        return mask

    def _check(self, detected: np.ndarray) -> None:
        series = np.concatenate(([self._last_detection], detected))
        separation = np.diff(series)
        # Relative slack for the float sum that produced the timestamps.
        if np.any(separation < self.tau * (1.0 - 1e-9)):
            raise AssertionError(
                f"detections closer than the dead time {self.tau:g} s"
            )


class _LiveTimeCounts:
    """
    Counting process M(t) of a Poisson process, sampled lazily and
    consistently at arbitrary times.
    """

    def __init__(self, rng: np.random.Generator, rate: float):
        self._rng = rng
        self._rate = rate
        self._times = [0.0]
        self._counts = [0]

    def __call__(self, t: float) -> int:
        position = bisect.bisect_left(self._times, t)
        if position < len(self._times) and self._times[position] == t:
            return self._counts[position]
        t_lo, m_lo = self._times[position - 1], self._counts[position - 1]
        if position == len(self._times):
            count = m_lo + int(self._rng.poisson(self._rate * (t - t_lo)))
        else:
            t_hi, m_hi = self._times[position], self._counts[position]
            fraction = (t - t_lo) / (t_hi - t_lo)
            count = m_lo + int(self._rng.binomial(m_hi - m_lo, fraction))
        self._times.insert(position, t)
        self._counts.insert(position, count)
        return count


def count_live_time(
    rng: np.random.Generator, rate: float, tau: float, duration: float
) -> int:
    """
    Detected count of a Poisson stream behind a nonparalyzable detector.

    After each detection the detector is blind for tau; by memorylessness
    the arrivals it can see form a Poisson process M on the live-time clock,
    and the k-th detection happens at wall time L_k + (k - 1) tau. The count
    is the largest k with M(duration - (k - 1) tau) >= k, found by bisection
    on a lazily sampled M.
    """
    if rate <= 0.0:
        return 0
    if tau == 0.0:
        return int(rng.poisson(rate * duration))
    counts = _LiveTimeCounts(rng, rate)
    low = 0
    high = min(counts(duration), math.floor(duration / tau) + 1)
    while low < high:
        middle = (low + high + 1) // 2
        live = duration - (middle - 1) * tau
        if live >= 0.0 and counts(live) >= middle:
            low = middle
        else:
            high = middle - 1
    return low
