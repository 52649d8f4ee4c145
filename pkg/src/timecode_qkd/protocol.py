"""Time-slot encoding, Bob's slot classification, sifting and QBER extraction.

Slot convention, relative to the clock edge plus the propagation delay::

    [0, T/2)     slot 3  -> bit 0
    [T/2, T)     slot 4  -> ambiguous
    [T, 3T/2)    slot 5  -> bit 1
    anything else        -> out of window

Detections are attributed to the clock whose frame ``[-lead, period - lead)``
contains them, where ``lead`` centres the three slots inside the period.
"""
from __future__ import annotations

import enum
import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .photonics import TICK_NS, Channel, Chronogram
from .pulse_model import PulseShape


class Variant(str, enum.Enum):
    TWO_STATE = "two_state"
    FOUR_STATE = "four_state"


class Symbol(str, enum.Enum):
    A = "a"
    B = "b"
    C = "c"
    D = "d"

    @property
    def code(self) -> int:
        return "abcd".index(self.value)

    @property
    def bit(self) -> int | None:
        return {"b": 0, "c": 1}.get(self.value)

    @classmethod
    def from_code(cls, code: int) -> Symbol:
        return cls("abcd"[code])


SYMBOL_CODES = {s.value: s.code for s in Symbol}
CODE_B, CODE_C = Symbol.B.code, Symbol.C.code


class SlotVerdict(enum.IntEnum):
    BIT0 = 0
    BIT1 = 1
    AMBIGUOUS = 2
    OUT_OF_WINDOW = 3


class Pattern(str, enum.Enum):
    ALTERNATING = "alternating"
    RANDOM = "random"
    FIXED0 = "fixed0"
    FIXED1 = "fixed1"


@dataclass(frozen=True)
class ProtocolConfig:
    clock_period: float = 100.0
    pulse_duration: float = 20.0
    variant: Variant = Variant.TWO_STATE

    def __post_init__(self) -> None:
        if self.pulse_duration <= 0:
            raise ValueError("pulse duration must be positive")
        if not self.clock_period > 2 * self.pulse_duration:
            raise ValueError("clock period must exceed twice the pulse duration")
        for v in (self.clock_period, self.pulse_duration / 2):
            if abs(v / TICK_NS - round(v / TICK_NS)) > 1e-6:
                raise ValueError(f"{v} ns is not a multiple of the {TICK_NS} ns timestamp grid")

    @property
    def bit_delay(self) -> float:
        return self.pulse_duration / 2

    @property
    def slot_width(self) -> float:
        return self.pulse_duration / 2

    @property
    def frame_lead(self) -> float:
        """Part of the clock frame that precedes slot 3."""
        return (self.clock_period - 3 * self.slot_width) / 2

    @property
    def alphabet(self) -> tuple[Symbol, ...]:
        if self.variant is Variant.TWO_STATE:
            return (Symbol.B, Symbol.C)
        return (Symbol.A, Symbol.B, Symbol.C, Symbol.D)


def emission_offset(symbol: Symbol | str, cfg: ProtocolConfig) -> float:
    """Emission delay of a symbol with respect to its clock edge (ns)."""
    symbol = Symbol(symbol)
    if symbol not in cfg.alphabet:
        raise ValueError(f"symbol {symbol.value!r} not allowed in the {cfg.variant.value} variant")
    half = cfg.bit_delay
    return {Symbol.A: -half, Symbol.B: 0.0, Symbol.C: half, Symbol.D: 2 * half}[symbol]


def offset_table(cfg: ProtocolConfig) -> np.ndarray:
    """Emission offsets indexed by symbol code (a/d still listed for two-state)."""
    half = cfg.bit_delay
    return np.array([-half, 0.0, half, 2 * half])


def classify_ticks(rel_ticks: np.ndarray, cfg: ProtocolConfig) -> np.ndarray:
    """Vectorized slot verdicts for tick offsets from the slot-3 start."""
    w = round(cfg.slot_width / TICK_NS)
    rel = np.asarray(rel_ticks)
    out = np.full(rel.shape, SlotVerdict.OUT_OF_WINDOW, dtype=np.int8)
    out[(rel >= 0) & (rel < w)] = SlotVerdict.BIT0
    out[(rel >= w) & (rel < 2 * w)] = SlotVerdict.AMBIGUOUS
    out[(rel >= 2 * w) & (rel < 3 * w)] = SlotVerdict.BIT1
    return out


def classify_slot(
    timestamp: float, clock_index: int, propagation_delay: float, cfg: ProtocolConfig
) -> SlotVerdict:
    rel = timestamp - clock_index * cfg.clock_period - propagation_delay
    rel_ticks = math.floor(rel / TICK_NS + 1e-9)
    return SlotVerdict(int(classify_ticks(np.array([rel_ticks]), cfg)[0]))


@dataclass(frozen=True)
class TruthRecord:
    """Alice's symbols: one row of symbol codes per sequence."""

    sequence_ids: np.ndarray
    symbols: np.ndarray  # shape (n_sequences, n_clocks), codes 0..3 for a..d

    def __post_init__(self) -> None:
        ids = np.asarray(self.sequence_ids, dtype=np.int64)
        sym = np.atleast_2d(np.asarray(self.symbols, dtype=np.int8))
        if sym.shape[0] != ids.size:
            raise ValueError("one symbol row per sequence id is required")
        if np.unique(ids).size != ids.size:
            raise ValueError("duplicate sequence ids in truth record")
        object.__setattr__(self, "sequence_ids", ids)
        object.__setattr__(self, "symbols", sym)

    @property
    def n_clocks(self) -> int:
        return int(self.symbols.shape[1])

    def row_index(self, sequence_ids: np.ndarray) -> np.ndarray:
        """Row of each sequence id, -1 when unknown."""
        if self.sequence_ids.size == 0:
            return np.full(np.shape(sequence_ids), -1, dtype=np.int64)
        order = np.argsort(self.sequence_ids)
        pos = np.searchsorted(self.sequence_ids, sequence_ids, sorter=order)
        pos = np.minimum(pos, order.size - 1)
        rows = order[pos]
        return np.where(self.sequence_ids[rows] == sequence_ids, rows, -1)

    @classmethod
    def from_bits(cls, bits: Sequence[int], sequence_id: int = 0) -> TruthRecord:
        codes = np.where(np.asarray(bits) == 0, CODE_B, CODE_C)
        return cls(np.array([sequence_id]), codes[None, :])

    @classmethod
    def concat(cls, parts: list[TruthRecord]) -> TruthRecord:
        return cls(
            np.concatenate([p.sequence_ids for p in parts]),
            np.concatenate([p.symbols for p in parts], axis=0),
        )


@dataclass
class SiftReport:
    n_correct: int = 0
    n_wrong: int = 0
    n_ambiguous: int = 0
    n_out: int = 0
    # detections on a/d clocks per verdict, four-state symmetry diagnostics
    decoy_counts: dict[str, int] = field(default_factory=dict)

    @property
    def n_sifted(self) -> int:
        return self.n_correct + self.n_wrong

    @property
    def flagged(self) -> bool:
        """True when there is no unambiguous detection to form a QBER."""
        return self.n_sifted == 0

    @property
    def qber(self) -> float:
        return self.n_wrong / self.n_sifted if self.n_sifted else math.nan

    @property
    def qber_stderr(self) -> float:
        if not self.n_sifted:
            return math.nan
        q = self.qber
        return math.sqrt(q * (1 - q) / self.n_sifted)

    def as_dict(self) -> dict:
        return {
            "n_correct": self.n_correct,
            "n_wrong": self.n_wrong,
            "n_ambiguous": self.n_ambiguous,
            "n_out": self.n_out,
            "n_sifted": self.n_sifted,
            "qber": None if self.flagged else self.qber,
            "qber_stderr": None if self.flagged else self.qber_stderr,
            "flagged": self.flagged,
            "decoy_counts": dict(self.decoy_counts),
        }


def _key_events(chronogram: Chronogram) -> tuple[np.ndarray, np.ndarray]:
    key = chronogram.channel == Channel.KEY
    return chronogram.sequence_id[key], chronogram.ticks[key]


def _assign(
    seq: np.ndarray, ticks: np.ndarray, truth: TruthRecord, delay_ticks: int, cfg: ProtocolConfig
):
    period = round(cfg.clock_period / TICK_NS)
    lead = round(cfg.frame_lead / TICK_NS)
    rel = ticks - delay_ticks
    clock = np.floor_divide(rel + lead, period)
    rows = truth.row_index(seq)
    valid = (rows >= 0) & (clock >= 0) & (clock < truth.n_clocks)
    verdict = classify_ticks(rel - clock * period, cfg)
    verdict[~valid] = SlotVerdict.OUT_OF_WINDOW
    symbols = np.full(seq.shape, -1, dtype=np.int8)
    symbols[valid] = truth.symbols[rows[valid], clock[valid]]
    return verdict, symbols


def delay_to_ticks(delay: float) -> int:
    return round(delay / TICK_NS)


def _sift_arrays(verdict: np.ndarray, symbols: np.ndarray) -> SiftReport:
    keyed = (symbols == CODE_B) | (symbols == CODE_C)
    decoy = (symbols >= 0) & ~keyed
    unamb = (verdict == SlotVerdict.BIT0) | (verdict == SlotVerdict.BIT1)
    truth_bit = (symbols == CODE_C).astype(np.int8)
    s = keyed & unamb
    correct = int(np.count_nonzero(s & (verdict == truth_bit)))
    report = SiftReport(
        n_correct=correct,
        n_wrong=int(np.count_nonzero(s)) - correct,
        n_ambiguous=int(np.count_nonzero(keyed & (verdict == SlotVerdict.AMBIGUOUS))),
        n_out=int(np.count_nonzero(verdict == SlotVerdict.OUT_OF_WINDOW)),
    )
    if np.any(decoy):
        for code in (Symbol.A.code, Symbol.D.code):
            for v in (SlotVerdict.BIT0, SlotVerdict.AMBIGUOUS, SlotVerdict.BIT1):
                n = np.count_nonzero((symbols == code) & (verdict == v))
                report.decoy_counts[f"{Symbol.from_code(code).value}:{v.name}"] = int(n)
    return report


def sift(
    chronogram: Chronogram,
    truth: TruthRecord,
    propagation_delay: float,
    cfg: ProtocolConfig,
) -> SiftReport:
    """Count KEY detections by verdict against Alice's record.

    Out-of-window events include detections on a/d clocks that fall outside
    the slots; a/d detections inside the slots go to ``decoy_counts`` only.
    """
    seq, ticks = _key_events(chronogram)
    verdict, symbols = _assign(seq, ticks, truth, delay_to_ticks(propagation_delay), cfg)
    return _sift_arrays(verdict, symbols)


@dataclass
class ScanResult:
    best_delay: float
    qber: float
    report: SiftReport
    delays: np.ndarray
    qbers: np.ndarray

    @property
    def flagged(self) -> bool:
        return bool(np.all(np.isnan(self.qbers)))


def qber_scan(
    chronogram: Chronogram,
    truth: TruthRecord,
    delay_grid: Sequence[float] | np.ndarray,
    cfg: ProtocolConfig,
) -> ScanResult:
    """Minimize the error rate over candidate propagation delays.

    Ties go to the smallest delay. When no delay yields a sifted event the
    result is flagged and ``best_delay``/``qber`` are NaN.
    """
    delays = np.unique(np.asarray(delay_grid, dtype=float))
    if delays.size == 0:
        raise ValueError("delay grid is empty")
    if delays.size > 1 and np.max(np.diff(delays)) > 1.0 + 1e-9:
        raise ValueError("delay grid step must not exceed 1 ns")
    seq, ticks = _key_events(chronogram)
    reports = []
    for d in delays:
        verdict, symbols = _assign(seq, ticks, truth, delay_to_ticks(d), cfg)
        reports.append(_sift_arrays(verdict, symbols))
    qbers = np.array([r.qber for r in reports])
    if np.all(np.isnan(qbers)):
        return ScanResult(math.nan, math.nan, reports[0], delays, qbers)
    best = int(np.nanargmin(qbers))
    return ScanResult(float(delays[best]), float(qbers[best]), reports[best], delays, qbers)


def make_alice_sequence(
    pattern: Pattern | str,
    n_clocks: int,
    variant: Variant | str,
    rng: np.random.Generator | None = None,
) -> list[Symbol]:
    return [Symbol.from_code(c) for c in alice_codes(pattern, n_clocks, variant, rng)]


def alice_codes(
    pattern: Pattern | str,
    n_clocks: int,
    variant: Variant | str,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Array form of :func:`make_alice_sequence` (symbol codes)."""
    if n_clocks <= 0:
        raise ValueError("n_clocks must be positive")
    pattern, variant = Pattern(pattern), Variant(variant)
    if pattern is Pattern.ALTERNATING:
        return np.where(np.arange(n_clocks) % 2 == 0, CODE_B, CODE_C).astype(np.int8)
    if pattern is Pattern.FIXED0:
        return np.full(n_clocks, CODE_B, dtype=np.int8)
    if pattern is Pattern.FIXED1:
        return np.full(n_clocks, CODE_C, dtype=np.int8)
    if rng is None:
        raise ValueError("random pattern needs an rng")
    if variant is Variant.TWO_STATE:
        return rng.choice(np.array([CODE_B, CODE_C], dtype=np.int8), n_clocks)
    return rng.integers(0, 4, n_clocks, dtype=np.int8)


def _gauss_integral(z: np.ndarray) -> np.ndarray:
    # antiderivative of the standard normal CDF
    return z * ndtr(z) + np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)


def interval_probability(
    shape: PulseShape, offset: float, lo: float, hi: float, jitter_sigma: float = 0.0
) -> float:
    """Probability that a photon timestamp lands in ``[lo, hi)``.

    The arrival density is the piecewise-constant bin intensity of ``shape``
    shifted by ``offset``, convolved with Gaussian jitter.
    """
    w = shape.bin_weights()
    left = shape.t0 + offset + shape.dt * np.arange(w.size)
    right = left + shape.dt
    if jitter_sigma <= 0:
        overlap = np.clip(np.minimum(right, hi) - np.maximum(left, lo), 0.0, None)
        return float(np.sum(w * overlap / shape.dt))
    s = jitter_sigma
    # mean over the bin of P(lo <= u + noise < hi)
    g = (
        _gauss_integral((hi - left) / s)
        - _gauss_integral((hi - right) / s)
        - _gauss_integral((lo - left) / s)
        + _gauss_integral((lo - right) / s)
    )
    return float(np.sum(w * g * s / shape.dt))


def slot_probabilities(
    shape: PulseShape,
    offset: float,
    cfg: ProtocolConfig,
    jitter_sigma: float = 0.0,
    delay_error: float = 0.0,
) -> dict[SlotVerdict, float]:
    """Verdict distribution for one photon emitted at ``offset`` after the clock.

    ``delay_error`` is the amount by which Bob's assumed delay exceeds the
    true one.
    """
    w = cfg.slot_width
    p0 = interval_probability(shape, offset - delay_error, 0, w, jitter_sigma)
    pa = interval_probability(shape, offset - delay_error, w, 2 * w, jitter_sigma)
    p1 = interval_probability(shape, offset - delay_error, 2 * w, 3 * w, jitter_sigma)
    return {
        SlotVerdict.BIT0: p0,
        SlotVerdict.AMBIGUOUS: pa,
        SlotVerdict.BIT1: p1,
        SlotVerdict.OUT_OF_WINDOW: max(0.0, 1.0 - p0 - pa - p1),
    }


def predicted_qber(
    shape: PulseShape,
    cfg: ProtocolConfig,
    jitter_sigma: float = 0.0,
    delay_error: float = 0.0,
    detections_per_clock: float = 0.0,
    dark_per_slot: float = 0.0,
) -> float:
    """QBER expected from pulse edges, jitter and dark counts for b/c symbols.

    ``detections_per_clock`` is the mean number of signal detections per
    key clock; ``dark_per_slot`` the mean dark counts in one slot.
    """
    p_b = slot_probabilities(shape, 0.0, cfg, jitter_sigma, delay_error)
    p_c = slot_probabilities(shape, cfg.bit_delay, cfg, jitter_sigma, delay_error)
    correct = 0.5 * (p_b[SlotVerdict.BIT0] + p_c[SlotVerdict.BIT1])
    wrong = 0.5 * (p_b[SlotVerdict.BIT1] + p_c[SlotVerdict.BIT0])
    if detections_per_clock > 0:
        correct *= detections_per_clock
        wrong *= detections_per_clock
    elif dark_per_slot > 0:
        raise ValueError("dark counts need a signal detection rate for scale")
    total = correct + wrong + 2 * dark_per_slot
    return (wrong + dark_per_slot) / total if total > 0 else math.nan
