"""Temporal pulse profiles and their normalized field autocorrelation.

A :class:`PulseShape` stores the field amplitude of a single pulse on a
uniform time grid. Sample ``i`` represents the bin ``[t_i, t_i + dt)``; the
intensity inside a bin is taken as constant when photon arrival times are
drawn, and the amplitude is normalized so that ``dt * sum(amplitude**2) == 1``
(the trapezoidal integral, since both ends of the grid are zero padded).
"""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import optimize

#: Default sample step (ns). Must stay below the 0.3 ns detector resolution.
DEFAULT_DT = 0.05
MAX_DT = 0.1

# Number of decay time constants kept before the tail is truncated.
_TAIL_CONSTANTS = 28.0


class ShapeLabel(str, enum.Enum):
    SQUARE = "Square"
    EDGED = "EdgedSquare"
    CUSTOM = "Custom"


@dataclass(frozen=True, eq=False)
class PulseShape:
    """Sampled field amplitude of one pulse.

    ``t0`` is the time of the first sample, relative to the pulse emission
    instant. ``nominal_duration`` is the duration ``T`` the shape stands for.
    """

    t0: float
    dt: float
    amplitude: np.ndarray
    nominal_duration: float
    label: ShapeLabel = ShapeLabel.CUSTOM

    def __post_init__(self) -> None:
        amp = np.asarray(self.amplitude, dtype=float)
        if amp.ndim != 1 or amp.size < 2:
            raise ValueError("amplitude must be a 1-d array with at least 2 samples")
        if not 0 < self.dt <= MAX_DT + 1e-12:
            raise ValueError(f"sample step must be in (0, {MAX_DT}] ns, got {self.dt}")
        if np.any(~np.isfinite(amp)) or np.any(amp < 0):
            raise ValueError("amplitude must be finite and non-negative")
        amp.setflags(write=False)
        object.__setattr__(self, "amplitude", amp)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.amplitude.size)

    @property
    def intensity(self) -> np.ndarray:
        return self.amplitude**2

    @property
    def energy(self) -> float:
        """Trapezoidal integral of the intensity."""
        return float(np.trapezoid(self.intensity, dx=self.dt))

    def is_normalized(self, rtol: float = 1e-9) -> bool:
        return abs(self.energy - 1.0) <= rtol

    def normalized(self) -> PulseShape:
        energy = self.energy
        if energy <= 0:
            raise ValueError("cannot normalize an all-zero shape")
        return PulseShape(
            self.t0, self.dt, self.amplitude / math.sqrt(energy), self.nominal_duration, self.label
        )

    @property
    def support(self) -> tuple[float, float]:
        """Half-open time interval covered by non-zero bins."""
        nz = np.flatnonzero(self.amplitude)
        if nz.size == 0:
            return (self.t0, self.t0)
        return (self.t0 + nz[0] * self.dt, self.t0 + (nz[-1] + 1) * self.dt)

    def bin_weights(self) -> np.ndarray:
        """Probability of a photon arriving in each sample bin."""
        w = self.intensity
        return w / w.sum()


def _grid_step(duration: float, dt: float) -> float:
    # snap dt so that the duration spans a whole number of bins
    n = max(1, round(duration / dt))
    if abs(n * dt - duration) > 1e-9 * duration:
        return duration / math.ceil(duration / dt)
    return dt


def make_square(T: float, dt: float = DEFAULT_DT) -> PulseShape:
    """Square pulse of duration ``T`` starting at t = 0."""
    if not T > 0:
        raise ValueError(f"pulse duration must be positive, got {T}")
    dt = _grid_step(T, dt)
    n = round(T / dt)
    amp = np.zeros(n + 2)
    amp[1:-1] = 1.0
    return PulseShape(-dt, dt, amp, T, ShapeLabel.SQUARE).normalized()


def _edged_intensity(t: np.ndarray, gate: float, tau_rise: float, tau_decay: float) -> np.ndarray:
    # RC-like response to a gate of length `gate` switched on at t = 0
    on = np.clip(t, 0.0, gate)
    rise = -np.expm1(-on / tau_rise) if tau_rise > 0 else (on > 0).astype(float)
    after = np.clip(t - gate, 0.0, None)
    if tau_decay > 0:
        fall = np.exp(-after / tau_decay)
    else:
        fall = (after == 0).astype(float)
    out = rise * fall
    out[t < 0] = 0.0
    return out


def _edged_shape(T: float, gate: float, rise: float, decay: float, dt: float) -> PulseShape:
    # 10-90 % transit of 1 - exp(-t/tau) takes tau * ln 9
    tau_r = rise / math.log(9.0)
    tau_d = decay / math.log(9.0)
    end = gate + _TAIL_CONSTANTS * tau_d + dt
    n = math.ceil(end / dt) + 1
    # value of each bin is the intensity at the bin centre
    centres = dt * (np.arange(n) + 0.5)
    intensity = _edged_intensity(centres, gate, tau_r, tau_d)
    amp = np.concatenate([[0.0], np.sqrt(intensity), [0.0]])
    return PulseShape(-dt, dt, amp, T, ShapeLabel.EDGED).normalized()


def make_edged(
    T: float,
    rise: float,
    decay: float,
    target_fwhm: float | None = None,
    dt: float = DEFAULT_DT,
) -> PulseShape:
    """Square gate with exponential rise and decay edges.

    ``rise`` and ``decay`` are 10-90 % transition times. Without
    ``target_fwhm`` the gate lasts ``T``; otherwise the gate length is
    solved by bisection so that the intensity FWHM matches the target to
    within 0.05 ns.
    """
    if rise < 0 or decay < 0 or not (T > rise + decay > 0):
        raise ValueError(f"need T > rise + decay > 0, got T={T}, rise={rise}, decay={decay}")
    if target_fwhm is None:
        return _edged_shape(T, T, rise, decay, dt)

    def mismatch(gate: float) -> float:
        return fwhm(_edged_shape(T, gate, rise, decay, dt)) - target_fwhm

    lo, hi = dt, target_fwhm + rise + decay
    if mismatch(lo) > 0:
        raise ValueError(
            f"target FWHM {target_fwhm} ns is shorter than the edges allow "
            f"(minimum about {mismatch(lo) + target_fwhm:.3f} ns)"
        )
    while mismatch(hi) < 0:
        hi *= 2
    gate = optimize.bisect(mismatch, lo, hi, xtol=1e-4)
    return _edged_shape(T, gate, rise, decay, dt)


def from_intensity(
    times: np.ndarray,
    intensity: np.ndarray,
    nominal_duration: float | None = None,
    dt: float = DEFAULT_DT,
) -> PulseShape:
    """Build a custom shape from a measured intensity profile."""
    times = np.asarray(times, dtype=float)
    intensity = np.clip(np.asarray(intensity, dtype=float), 0.0, None)
    if times.ndim != 1 or times.shape != intensity.shape or times.size < 2:
        raise ValueError("times and intensity must be 1-d arrays of equal length >= 2")
    if np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing")
    grid = np.arange(times[0], times[-1] + 0.5 * dt, dt)
    resampled = np.interp(grid, times, intensity, left=0.0, right=0.0)
    amp = np.concatenate([[0.0], np.sqrt(resampled), [0.0]])
    if nominal_duration is None:
        nominal_duration = float(times[-1] - times[0])
    return PulseShape(grid[0] - dt, dt, amp, nominal_duration, ShapeLabel.CUSTOM).normalized()


def load_intensity_csv(path: str | Path, nominal_duration: float | None = None) -> PulseShape:
    """Load a two-column ``time_ns,intensity`` CSV (header optional)."""
    rows = []
    with open(path, newline="") as fh:
        for i, rec in enumerate(csv.reader(fh)):
            if not rec or rec[0].lstrip().startswith("#"):
                continue
            try:
                rows.append((float(rec[0]), float(rec[1])))
            except (ValueError, IndexError):
                if i == 0:
                    continue  # header
                raise ValueError(f"{path}: malformed row {i + 1}: {rec!r}") from None
    if len(rows) < 2:
        raise ValueError(f"{path}: need at least two samples")
    data = np.array(rows)
    return from_intensity(data[:, 0], data[:, 1], nominal_duration)


def autocorrelation(shape: PulseShape, tau: float) -> float:
    """Normalized field autocorrelation ``∫ a(t) a(t + tau) dt``."""
    if not shape.is_normalized(1e-6):
        raise ValueError("autocorrelation requires a normalized shape")
    tau = abs(tau)
    a = shape.amplitude
    k = tau / shape.dt
    if abs(k - round(k)) < 1e-9:
        k = round(k)
        if k >= a.size:
            return 0.0
        prod = a[: a.size - k] * a[k:]
    else:
        t = shape.times
        prod = a * np.interp(t + tau, t, a, left=0.0, right=0.0)
    return float(np.clip(np.trapezoid(prod, dx=shape.dt), 0.0, 1.0))


def fwhm(shape: PulseShape) -> float:
    """Full width at half maximum of the intensity profile (ns)."""
    intensity = shape.intensity
    peak = intensity.max()
    if peak <= 0:
        raise ValueError("FWHM of an all-zero shape is undefined")
    half = peak / 2
    above = np.flatnonzero(intensity >= half)
    i, j = above[0], above[-1]
    t = shape.times
    if i > 0:
        left = np.interp(half, [intensity[i - 1], intensity[i]], [t[i - 1], t[i]])
    else:
        left = t[0]
    if j < intensity.size - 1:
        right = np.interp(half, [intensity[j + 1], intensity[j]], [t[j + 1], t[j]])
    else:
        right = t[-1]
    return float(right - left)
