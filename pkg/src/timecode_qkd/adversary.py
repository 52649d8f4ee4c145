"""Intercept-resend eavesdropping on the time-coding protocol.

Eve measures the arrival time of an intercepted pulse with an ideal detector
and slot geometry identical to Bob's. A slot-3 or slot-5 result reveals the
bit and she resends a faithful full-length pulse. A slot-4 result is
ambiguous and she picks one of :class:`AmbiguousAction`.

Outcomes are per pulse sent by Alice (b/c symbols only). Eve's information is
counted per sifted bit: one bit for each sifted detection that came from a
faithful resend, and ``1 - h(P(wrong | sifted))`` for sifted detections of a
guessed resend.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .photonics import PulseInstance, sample_arrival_times, to_ticks
from .protocol import ProtocolConfig, SlotVerdict, Symbol, classify_ticks, slot_probabilities
from .pulse_model import PulseShape, autocorrelation, make_square
from .infotheory import binary_entropy

MIN_MC_TRIALS = 10_000


class AmbiguousAction(str, enum.Enum):
    GUESS_RESEND_FULL = "guess_resend_full"
    RESEND_SHORT_SLOT4 = "resend_short_slot4"
    BLOCK = "block"


@dataclass(frozen=True)
class AttackStrategy:
    intercept_fraction: float
    ambiguous_action: AmbiguousAction = AmbiguousAction.GUESS_RESEND_FULL

    def __post_init__(self) -> None:
        if not 0.0 <= self.intercept_fraction <= 1.0:
            raise ValueError(f"intercept fraction must be in [0, 1], got {self.intercept_fraction}")
        object.__setattr__(self, "ambiguous_action", AmbiguousAction(self.ambiguous_action))


@dataclass(frozen=True)
class AttackOutcome:
    """Attack statistics.

    ``sift_rate`` and ``arrival_rate`` are per pulse sent: the probability
    that Bob gets a sifted detection, and that a pulse reaches Bob at all.
    ``gamma_avg`` averages the autocorrelation at T/2 over arriving pulses.
    """

    qber_induced: float
    gamma_avg: float
    info_eve: float
    sift_rate: float
    arrival_rate: float = 1.0
    stderr: dict[str, float] | None = field(default=None, compare=False)

    @property
    def wrong_rate(self) -> float:
        return self.qber_induced * self.sift_rate

    @property
    def info_rate(self) -> float:
        return self.info_eve * self.sift_rate

    @property
    def gamma_rate(self) -> float:
        return self.gamma_avg * self.arrival_rate

    def as_dict(self) -> dict:
        out = {
            "qber_induced": self.qber_induced,
            "gamma_avg": self.gamma_avg,
            "info_eve": self.info_eve,
            "sift_rate": self.sift_rate,
            "arrival_rate": self.arrival_rate,
        }
        if self.stderr:
            out.update({f"{k}_stderr": v for k, v in self.stderr.items()})
        return out


def honest_shape(cfg: ProtocolConfig) -> PulseShape:
    return make_square(cfg.pulse_duration)


def short_shape(cfg: ProtocolConfig) -> PulseShape:
    return make_square(cfg.pulse_duration / 2)


def _bit_offset(bit: int, cfg: ProtocolConfig) -> float:
    return bit * cfg.bit_delay


def eve_intercept(
    pulse: PulseInstance, cfg: ProtocolConfig, rng: np.random.Generator
) -> SlotVerdict:
    """Eve's verdict from one photon of ``pulse`` (ideal detector, no jitter)."""
    t = pulse.emission_offset + sample_arrival_times(pulse.shape, 1, rng)
    return SlotVerdict(int(classify_ticks(to_ticks(t), cfg)[0]))


def eve_resend(
    verdict: SlotVerdict,
    true_symbol: Symbol | str,
    strategy: AttackStrategy,
    cfg: ProtocolConfig,
    rng: np.random.Generator,
    mean_photons: float = 1.0,
    clock_index: int = 0,
    shape: PulseShape | None = None,
) -> PulseInstance | None:
    """Pulse Eve sends on to Bob, or ``None`` when she blocks.

    ``true_symbol`` is not used by Eve's decision; it is accepted so the call
    mirrors the physical situation and can be logged by callers.
    """
    Symbol(true_symbol)
    full = shape if shape is not None else honest_shape(cfg)
    kw = dict(mean_photons=mean_photons, clock_index=clock_index, clock_period=cfg.clock_period)
    if verdict in (SlotVerdict.BIT0, SlotVerdict.BIT1):
        return PulseInstance(full, _bit_offset(int(verdict), cfg), **kw)
    if verdict is SlotVerdict.OUT_OF_WINDOW:
        return None
    action = strategy.ambiguous_action
    if action is AmbiguousAction.GUESS_RESEND_FULL:
        return PulseInstance(full, _bit_offset(int(rng.integers(2)), cfg), **kw)
    if action is AmbiguousAction.RESEND_SHORT_SLOT4:
        return PulseInstance(short_shape(cfg), cfg.slot_width, **kw)
    return None


def _bob_sifted(shape: PulseShape, offset: float, bit: int, cfg: ProtocolConfig) -> tuple[float, float]:
    """(P(sifted correct), P(sifted wrong)) for a single photon."""
    p = slot_probabilities(shape, offset, cfg)
    right = SlotVerdict.BIT0 if bit == 0 else SlotVerdict.BIT1
    wrong = SlotVerdict.BIT1 if bit == 0 else SlotVerdict.BIT0
    return p[right], p[wrong]


def evaluate_strategy_exact(strategy: AttackStrategy, cfg: ProtocolConfig) -> AttackOutcome:
    """Enumerate Alice bit x Eve verdict x Eve action x Bob slot for square pulses."""
    full = honest_shape(cfg)
    short = short_shape(cfg)
    g_full = autocorrelation(full, cfg.bit_delay)
    g_short = autocorrelation(short, cfg.bit_delay)
    p = strategy.intercept_fraction
    action = strategy.ambiguous_action

    sift = wrong = info = gamma = arrive = 0.0
    for bit in (0, 1):
        w_bit = 0.5
        # not intercepted
        c, e = _bob_sifted(full, _bit_offset(bit, cfg), bit, cfg)
        sift += w_bit * (1 - p) * (c + e)
        wrong += w_bit * (1 - p) * e
        gamma += w_bit * (1 - p) * g_full
        arrive += w_bit * (1 - p)

        eve = slot_probabilities(full, _bit_offset(bit, cfg), cfg)
        for verdict, pv in eve.items():
            w = w_bit * p * pv
            if w == 0:
                continue
            if verdict in (SlotVerdict.BIT0, SlotVerdict.BIT1):
                c, e = _bob_sifted(full, _bit_offset(int(verdict), cfg), bit, cfg)
                sift += w * (c + e)
                wrong += w * e
                # faithful resend: Eve knows every bit Bob sifts from it
                info += w * (c + e)
                gamma += w * g_full
                arrive += w
            elif verdict is SlotVerdict.AMBIGUOUS and action is AmbiguousAction.GUESS_RESEND_FULL:
                s_g = e_g = 0.0
                for guess in (0, 1):
                    c, e = _bob_sifted(full, _bit_offset(guess, cfg), bit, cfg)
                    s_g += 0.5 * (c + e)
                    e_g += 0.5 * e
                sift += w * s_g
                wrong += w * e_g
                if s_g > 0:
                    info += w * s_g * (1 - binary_entropy(e_g / s_g))
                gamma += w * g_full
                arrive += w
            elif verdict is SlotVerdict.AMBIGUOUS and action is AmbiguousAction.RESEND_SHORT_SLOT4:
                c, e = _bob_sifted(short, cfg.slot_width, bit, cfg)
                sift += w * (c + e)
                wrong += w * e
                gamma += w * g_short
                arrive += w
            # block, or Eve saw nothing: nothing reaches Bob

    def ratio(a: float, b: float) -> float:
        # clip float round-off from the bin sums
        return min(1.0, max(0.0, a / b)) if b else 0.0

    return AttackOutcome(
        qber_induced=ratio(wrong, sift),
        gamma_avg=ratio(gamma, arrive),
        info_eve=ratio(info, sift),
        sift_rate=min(1.0, sift),
        arrival_rate=min(1.0, arrive),
    )


def evaluate_strategy_mc(
    strategy: AttackStrategy,
    cfg: ProtocolConfig,
    n_trials: int,
    rng: np.random.Generator,
) -> AttackOutcome:
    """Monte Carlo version of :func:`evaluate_strategy_exact`.

    Each trial is one pulse carrying one photon through Eve (if intercepted)
    to Bob's key counter. ``stderr`` holds the standard errors of the three
    ratio estimates.
    """
    if n_trials < MIN_MC_TRIALS:
        raise ValueError(f"need at least {MIN_MC_TRIALS} trials, got {n_trials}")
    full = honest_shape(cfg)
    short = short_shape(cfg)
    g_full = autocorrelation(full, cfg.bit_delay)
    g_short = autocorrelation(short, cfg.bit_delay)
    n = n_trials

    bits = rng.integers(0, 2, n)
    intercepted = rng.random(n) < strategy.intercept_fraction
    eve_t = bits * cfg.bit_delay + sample_arrival_times(full, n, rng)
    eve_v = np.where(intercepted, classify_ticks(to_ticks(eve_t), cfg), -1)

    unamb = (eve_v == SlotVerdict.BIT0) | (eve_v == SlotVerdict.BIT1)
    amb = eve_v == SlotVerdict.AMBIGUOUS
    action = strategy.ambiguous_action
    # bit carried by the full pulse reaching Bob
    sent_bit = np.where(unamb, eve_v, bits)
    guessed = amb & (action is AmbiguousAction.GUESS_RESEND_FULL)
    sent_bit = np.where(guessed, rng.integers(0, 2, n), sent_bit)
    is_short = amb & (action is AmbiguousAction.RESEND_SHORT_SLOT4)
    blocked = (amb & (action is AmbiguousAction.BLOCK)) | (eve_v == SlotVerdict.OUT_OF_WINDOW)

    bob_t = np.where(
        is_short,
        cfg.slot_width + sample_arrival_times(short, n, rng),
        sent_bit * cfg.bit_delay + sample_arrival_times(full, n, rng),
    )
    bob_v = classify_ticks(to_ticks(bob_t), cfg)
    sifted = ~blocked & ((bob_v == SlotVerdict.BIT0) | (bob_v == SlotVerdict.BIT1))
    wrong = sifted & (bob_v != bits)

    arrived = ~blocked
    gamma = np.where(is_short, g_short, g_full)[arrived]

    n_sift = int(np.count_nonzero(sifted))
    qber = np.count_nonzero(wrong) / n_sift if n_sift else 0.0
    # Eve's per-event information: faithful resends are fully known; guessed
    # resends carry 1 - h(error rate among sifted guesses)
    g_sift = sifted & guessed
    n_g = int(np.count_nonzero(g_sift))
    guess_info = 1 - binary_entropy(np.count_nonzero(g_sift & wrong) / n_g) if n_g else 0.0
    per_event = np.where(sifted & unamb, 1.0, np.where(g_sift, guess_info, 0.0))[sifted]
    info = float(per_event.mean()) if n_sift else 0.0

    def se(x: np.ndarray) -> float:
        return float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else math.inf

    stderr = {
        "qber_induced": math.sqrt(qber * (1 - qber) / n_sift) if n_sift else math.inf,
        "gamma_avg": se(gamma),
        "info_eve": se(per_event),
        "sift_rate": math.sqrt(n_sift / n * (1 - n_sift / n) / n),
    }
    return AttackOutcome(
        qber_induced=qber,
        gamma_avg=float(gamma.mean()) if gamma.size else 0.0,
        info_eve=info,
        sift_rate=n_sift / n,
        arrival_rate=float(np.count_nonzero(arrived)) / n,
        stderr=stderr,
    )
