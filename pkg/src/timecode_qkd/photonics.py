"""Photon-level models of the faint-pulse source, channel, routing and detectors.

All stochastic functions take an explicit ``numpy.random.Generator``; nothing
here keeps global state. Timestamps are stored as integer ticks of
:data:`TICK_NS` so that serialization and slot classification are exact.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .pulse_model import PulseShape, autocorrelation

TICK_NS = 0.1
#: FWHM to standard deviation of a Gaussian.
FWHM_TO_SIGMA = 1.0 / 2.355


class Channel(enum.IntEnum):
    KEY = 0
    MZ_PLUS = 1
    MZ_MINUS = 2


class Arm(enum.IntEnum):
    KEY = 0
    INTERFEROMETER = 1


@dataclass(frozen=True)
class DetectorParams:
    """Photon counter model.

    ``resolution`` is the timing FWHM; ``jitter_sigma`` is the Gaussian
    standard deviation actually applied (see :meth:`with_resolution`).
    """

    efficiency: float = 1.0
    jitter_sigma: float = 0.0
    dark_rate: float = 0.0  # counts per second
    resolution: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError(f"efficiency must be in [0, 1], got {self.efficiency}")
        if self.jitter_sigma < 0 or self.dark_rate < 0 or self.resolution < 0:
            raise ValueError("jitter_sigma, dark_rate and resolution must be non-negative")

    @classmethod
    def with_resolution(
        cls, resolution: float = 0.3, efficiency: float = 1.0, dark_rate: float = 0.0
    ) -> DetectorParams:
        return cls(efficiency, resolution * FWHM_TO_SIGMA, dark_rate, resolution)

    @property
    def dark_rate_per_ns(self) -> float:
        return self.dark_rate * 1e-9


@dataclass(frozen=True)
class PulseInstance:
    shape: PulseShape
    emission_offset: float
    mean_photons: float
    clock_index: int = 0
    clock_period: float = 100.0

    def __post_init__(self) -> None:
        if self.mean_photons < 0:
            raise ValueError(f"mean photon number must be >= 0, got {self.mean_photons}")
        if not -self.clock_period / 2 <= self.emission_offset < self.clock_period:
            raise ValueError(f"emission offset {self.emission_offset} ns outside the clock period")

    @property
    def emission_time(self) -> float:
        return self.clock_index * self.clock_period + self.emission_offset


@dataclass(frozen=True)
class DetectionEvent:
    channel: Channel
    timestamp: float  # ns
    sequence_id: int = 0

    def __post_init__(self) -> None:
        if self.timestamp < 0:
            raise ValueError("timestamps must be non-negative")


@dataclass
class Chronogram:
    """Columnar store of detection events, canonically sorted.

    Order is (sequence_id, ticks, channel).
    """

    sequence_id: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    channel: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int8))
    ticks: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))

    def __post_init__(self) -> None:
        self.sequence_id = np.asarray(self.sequence_id, dtype=np.int64)
        self.channel = np.asarray(self.channel, dtype=np.int8)
        self.ticks = np.asarray(self.ticks, dtype=np.int64)
        if not (self.sequence_id.shape == self.channel.shape == self.ticks.shape):
            raise ValueError("chronogram columns must have equal length")
        if np.any(self.ticks < 0):
            raise ValueError("timestamps must be non-negative")
        order = np.lexsort((self.channel, self.ticks, self.sequence_id))
        if np.any(order != np.arange(order.size)):
            self.sequence_id = self.sequence_id[order]
            self.channel = self.channel[order]
            self.ticks = self.ticks[order]

    def __len__(self) -> int:
        return int(self.ticks.size)

    @property
    def timestamps(self) -> np.ndarray:
        return self.ticks * TICK_NS

    @classmethod
    def from_events(cls, events: list[DetectionEvent]) -> Chronogram:
        return cls(
            [e.sequence_id for e in events],
            [int(e.channel) for e in events],
            [to_ticks(e.timestamp) for e in events],
        )

    @classmethod
    def concat(cls, parts: list[Chronogram]) -> Chronogram:
        if not parts:
            return cls()
        return cls(
            np.concatenate([p.sequence_id for p in parts]),
            np.concatenate([p.channel for p in parts]),
            np.concatenate([p.ticks for p in parts]),
        )

    def select(self, mask: np.ndarray) -> Chronogram:
        return Chronogram(self.sequence_id[mask], self.channel[mask], self.ticks[mask])

    def channel_only(self, *channels: Channel) -> Chronogram:
        return self.select(np.isin(self.channel, [int(c) for c in channels]))

    def counts(self) -> dict[str, int]:
        return {c.name: int(np.count_nonzero(self.channel == c)) for c in Channel}

    def events(self) -> list[DetectionEvent]:
        return [
            DetectionEvent(Channel(int(c)), float(t) * TICK_NS, int(s))
            for s, c, t in zip(self.sequence_id, self.channel, self.ticks)
        ]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Chronogram):
            return NotImplemented
        return (
            np.array_equal(self.sequence_id, other.sequence_id)
            and np.array_equal(self.channel, other.channel)
            and np.array_equal(self.ticks, other.ticks)
        )


def to_ticks(t_ns: np.ndarray | float) -> np.ndarray:
    """Quantize times to the stored 0.1 ns grid (floor, so slot edges are kept)."""
    return np.floor(np.asarray(t_ns, dtype=float) / TICK_NS + 1e-9).astype(np.int64)


def draw_photons(mu: float | np.ndarray, rng: np.random.Generator, size=None):
    """Poisson photon number of a coherent pulse with mean ``mu``."""
    mu_arr = np.asarray(mu, dtype=float)
    if np.any(mu_arr < 0) or np.any(~np.isfinite(mu_arr)):
        raise ValueError("mean photon number must be finite and non-negative")
    n = rng.poisson(mu_arr, size=size)
    return int(n) if np.ndim(n) == 0 else n


def attenuate(pulse: PulseInstance, transmission: float) -> PulseInstance:
    if not 0.0 <= transmission <= 1.0:
        raise ValueError(f"transmission must be in [0, 1], got {transmission}")
    return replace(pulse, mean_photons=pulse.mean_photons * transmission)


def fiber_transmission(distance_km: float, loss_db_per_km: float) -> float:
    return 10.0 ** (-loss_db_per_km * distance_km / 10.0)


def route_50_50(n_photons: int, rng: np.random.Generator) -> np.ndarray:
    """Send each photon to the key arm or the interferometer with equal odds."""
    if n_photons < 0:
        raise ValueError("photon count must be non-negative")
    return np.where(rng.random(n_photons) < 0.5, Arm.KEY, Arm.INTERFEROMETER).astype(np.int8)


def sample_arrival_times(shape: PulseShape, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` photon arrival times (ns, relative to emission) from the intensity."""
    if n == 0:
        return np.zeros(0)
    cdf = np.cumsum(shape.bin_weights())
    cdf /= cdf[-1]
    u = rng.random(n)
    idx = np.searchsorted(cdf, u, side="right")
    idx = np.minimum(idx, cdf.size - 1)
    return shape.t0 + shape.dt * (idx + rng.random(n))


def detect_times(
    times: np.ndarray, detector: DetectorParams, rng: np.random.Generator
) -> np.ndarray:
    """Apply Gaussian timing jitter and quantize to ticks."""
    if detector.jitter_sigma > 0 and times.size:
        times = times + rng.normal(0.0, detector.jitter_sigma, times.size)
    return to_ticks(times)


def dark_count_ticks(
    detector: DetectorParams, window: tuple[float, float], rng: np.random.Generator
) -> np.ndarray:
    """Homogeneous Poisson dark counts over ``window`` (ns)."""
    start, stop = window
    span = max(0.0, stop - start)
    n = rng.poisson(detector.dark_rate_per_ns * span) if detector.dark_rate > 0 else 0
    return to_ticks(start + span * rng.random(n))


def mz_plus_probability(gamma: float | np.ndarray, phase: float | np.ndarray):
    return 0.5 * (1.0 + np.asarray(gamma) * np.cos(phase))


def _check_normalized(shape: PulseShape) -> None:
    if not shape.is_normalized(1e-6):
        raise ValueError("pulse shape must be normalized")


def _window_events(
    ticks: np.ndarray, channel: Channel, window: tuple[float, float] | None, sequence_id: int
) -> list[DetectionEvent]:
    if window is not None:
        lo, hi = to_ticks(window[0]), to_ticks(window[1])
        ticks = ticks[(ticks >= lo) & (ticks < hi)]
    ticks = ticks[ticks >= 0]
    return [DetectionEvent(channel, float(t) * TICK_NS, sequence_id) for t in np.sort(ticks)]


def mz_detect(
    pulse: PulseInstance,
    path_delay: float,
    phase: float,
    detectors: dict[Channel, DetectorParams],
    rng: np.random.Generator,
    sequence_id: int = 0,
    n_photons: int | None = None,
) -> list[DetectionEvent]:
    """Detect one pulse at the two interferometer outputs."""
    _check_normalized(pulse.shape)
    gamma = autocorrelation(pulse.shape, path_delay)
    if n_photons is None:
        n_photons = draw_photons(pulse.mean_photons, rng)
    n_plus = rng.binomial(n_photons, float(mz_plus_probability(gamma, phase)))
    events: list[DetectionEvent] = []
    for ch, n in ((Channel.MZ_PLUS, n_plus), (Channel.MZ_MINUS, n_photons - n_plus)):
        det = detectors.get(ch, DetectorParams())
        n = rng.binomial(n, det.efficiency)
        t = pulse.emission_time + sample_arrival_times(pulse.shape, n, rng)
        events += _window_events(detect_times(t, det, rng), ch, None, sequence_id)
    return sorted(events, key=lambda e: (e.timestamp, e.channel))


def key_detect(
    pulse: PulseInstance,
    detectors: dict[Channel, DetectorParams] | DetectorParams,
    rng: np.random.Generator,
    window: tuple[float, float] | None = None,
    sequence_id: int = 0,
    n_photons: int | None = None,
) -> list[DetectionEvent]:
    """Detect one pulse on the key counter, plus dark counts over ``window``.

    Without an explicit window the pulse's own clock period is observed.
    """
    _check_normalized(pulse.shape)
    det = detectors if isinstance(detectors, DetectorParams) else detectors.get(
        Channel.KEY, DetectorParams()
    )
    if window is None:
        start = pulse.clock_index * pulse.clock_period
        window = (start, start + pulse.clock_period)
    if n_photons is None:
        n_photons = draw_photons(pulse.mean_photons, rng)
    n = rng.binomial(n_photons, det.efficiency)
    t = pulse.emission_time + sample_arrival_times(pulse.shape, n, rng)
    ticks = np.concatenate([detect_times(t, det, rng), dark_count_ticks(det, window, rng)])
    return _window_events(ticks, Channel.KEY, window, sequence_id)


def mz_sequence_counts(
    mean_photons: float,
    gamma: float,
    phases: np.ndarray,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Interferometer output counts for whole sequences at once.

    Equivalent in distribution to per-pulse simulation: a sum of thinned
    Poisson counts is Poisson, and each photon picks its port independently.
    Returns ``(n_plus, n_minus)`` arrays, one entry per phase.
    """
    phases = np.asarray(phases, dtype=float)
    if mean_photons < 0:
        raise ValueError("mean photon number must be non-negative")
    n = rng.poisson(mean_photons, phases.size)
    n_plus = rng.binomial(n, mz_plus_probability(gamma, phases))
    return n_plus, n - n_plus


def draw_phases(n_sequences: int, rng: np.random.Generator) -> np.ndarray:
    """Free-running interferometer phase, one uniform draw per sequence."""
    return rng.uniform(0.0, 2.0 * math.pi, n_sequences)
