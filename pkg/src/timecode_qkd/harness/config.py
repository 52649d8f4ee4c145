"""Experiment configuration and its flat ``key = value`` file format."""
from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from functools import cached_property
from pathlib import Path

import numpy as np

from ..adversary import AmbiguousAction, AttackStrategy
from ..photonics import TICK_NS, Channel, DetectorParams
from ..protocol import Pattern, ProtocolConfig, Variant
from ..pulse_model import PulseShape, load_intensity_csv, make_edged, make_square

#: MZ photons per 3.2 ms sequence reported for the measured run.
MEASURED_MZ_PHOTONS = 282.5


class ConfigError(ValueError):
    pass


_CHANNEL_PREFIX = {"key": Channel.KEY, "mz_plus": Channel.MZ_PLUS, "mz_minus": Channel.MZ_MINUS}
_DETECTOR_KEYS = ("efficiency", "resolution", "jitter_sigma", "dark_rate")


@dataclass(frozen=True)
class ExperimentConfig:
    # protocol
    clock_period: float = 100.0
    pulse_duration: float = 20.0
    variant: str = "two_state"
    pattern: str = "alternating"
    # pulse shape: square, edged, or csv:<path>
    shape: str = "edged"
    rise: float = 3.0
    decay: float = 3.0
    target_fwhm: float | None = 18.7
    # source and channel
    mu: float = 0.1
    # end-to-end transmission up to Bob's routing beamsplitter; calibrated so
    # that the interferometer sees 282.5 photons per sequence
    transmission: float = MEASURED_MZ_PHOTONS / (32000 * 0.1 * 0.5)
    n_sequences: int = 290
    sequence_duration_ms: float = 3.2
    # detectors (shared defaults, overridable per channel)
    efficiency: float = 1.0
    resolution: float = 0.3
    jitter_sigma: float | None = None
    dark_rate: float = 0.0
    key_efficiency: float | None = None
    key_resolution: float | None = None
    key_jitter_sigma: float | None = None
    key_dark_rate: float | None = None
    mz_plus_efficiency: float | None = None
    mz_plus_resolution: float | None = None
    mz_plus_jitter_sigma: float | None = None
    mz_plus_dark_rate: float | None = None
    mz_minus_efficiency: float | None = None
    mz_minus_resolution: float | None = None
    mz_minus_jitter_sigma: float | None = None
    mz_minus_dark_rate: float | None = None
    # interferometer
    interferometer_delay: float = 10.0
    phase_mode: str = "uniform"
    # eavesdropper
    attack_p: float = 0.0
    attack_action: str = "guess_resend_full"
    # timing and analysis
    propagation_delay: float = 37.0
    delay_scan: str = "27:47:0.1"
    slot_error_rate: float = 0.0
    sigma_k: float = 3.0
    seed: int = 0

    def __post_init__(self) -> None:
        try:
            self.protocol  # noqa: B018
            Pattern(self.pattern)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.n_sequences < 1:
            raise ConfigError("n_sequences must be at least 1")
        if self.mu < 0:
            raise ConfigError("mu must be non-negative")
        if not 0 <= self.transmission <= 1:
            raise ConfigError("transmission must be in [0, 1]")
        if not 0 <= self.slot_error_rate <= 1:
            raise ConfigError("slot_error_rate must be in [0, 1]")
        if self.propagation_delay < 0:
            raise ConfigError("propagation_delay must be non-negative")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        n = self.sequence_duration_ms * 1e6 / self.clock_period
        if abs(n - round(n)) > 1e-6 or round(n) < 1:
            raise ConfigError("sequence duration must be a whole number of clock periods")
        self.phase()
        self.attack()
        self.delay_grid()
        try:
            self.detectors()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        # pulse a on clock 0 is emitted T/2 before the clock edge
        if self.variant == "four_state" and self.propagation_delay < self.protocol.bit_delay:
            raise ConfigError("four-state runs need propagation_delay >= T/2")

    @cached_property
    def protocol(self) -> ProtocolConfig:
        return ProtocolConfig(self.clock_period, self.pulse_duration, Variant(self.variant))

    @property
    def n_clocks(self) -> int:
        return round(self.sequence_duration_ms * 1e6 / self.clock_period)

    @property
    def window_ns(self) -> float:
        return self.n_clocks * self.clock_period

    @property
    def window_ticks(self) -> int:
        return round(self.window_ns / TICK_NS)

    @cached_property
    def pulse_shape(self) -> PulseShape:
        try:
            if self.shape == "square":
                return make_square(self.pulse_duration)
            if self.shape == "edged":
                return make_edged(self.pulse_duration, self.rise, self.decay, self.target_fwhm)
            if self.shape.startswith("csv:"):
                return load_intensity_csv(self.shape[4:], self.pulse_duration)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"pulse shape: {exc}") from None
        raise ConfigError(f"unknown pulse shape {self.shape!r} (square, edged, csv:<path>)")

    def phase(self) -> float | None:
        """Fixed interferometer phase, or None for a uniform draw per sequence."""
        if self.phase_mode == "uniform":
            return None
        if self.phase_mode.startswith("fixed:"):
            try:
                return float(self.phase_mode[6:])
            except ValueError:
                pass
        raise ConfigError(f"bad phase_mode {self.phase_mode!r} (uniform or fixed:<radians>)")

    def attack(self) -> AttackStrategy | None:
        try:
            strategy = AttackStrategy(self.attack_p, AmbiguousAction(self.attack_action))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return strategy if strategy.intercept_fraction > 0 else None

    def delay_grid(self) -> np.ndarray:
        try:
            lo, hi, step = (float(x) for x in self.delay_scan.split(":"))
        except ValueError:
            raise ConfigError(f"bad delay_scan {self.delay_scan!r} (min:max:step)") from None
        if not (0 < step <= 1.0) or hi < lo:
            raise ConfigError("delay_scan needs min <= max and 0 < step <= 1 ns")
        n = int(math.floor((hi - lo) / step + 1e-9)) + 1
        return np.round(lo + step * np.arange(n), 6)

    def detectors(self) -> dict[Channel, DetectorParams]:
        out = {}
        for prefix, ch in _CHANNEL_PREFIX.items():
            vals = {k: getattr(self, f"{prefix}_{k}") for k in _DETECTOR_KEYS}
            vals = {k: (getattr(self, k) if v is None else v) for k, v in vals.items()}
            sigma = vals["jitter_sigma"]
            if sigma is None:
                det = DetectorParams.with_resolution(vals["resolution"], vals["efficiency"], vals["dark_rate"])
            else:
                det = DetectorParams(vals["efficiency"], sigma, vals["dark_rate"], vals["resolution"])
            out[ch] = det
        return out

    def with_overrides(self, **kw) -> ExperimentConfig:
        return replace(self, **kw)

    # ---- file format -------------------------------------------------

    @classmethod
    def from_mapping(cls, values: dict[str, str]) -> ExperimentConfig:
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(key, raw, cls.__dataclass_fields__[key].type)
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: str | Path) -> ExperimentConfig:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        return cls.from_mapping(parse_flat(text, str(path)))

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


def parse_flat(text: str, source: str = "<config>") -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        values[key] = value
    return values


def _coerce(key: str, raw: str, type_name: str):
    if raw.lower() in ("none", "") and "None" in type_name:
        return None
    try:
        if type_name.startswith("int"):
            return int(raw)
        if type_name.startswith("float"):
            return float(raw)
    except ValueError:
        raise ConfigError(f"config key {key!r}: cannot parse {raw!r} as {type_name.split()[0]}") from None
    return raw
