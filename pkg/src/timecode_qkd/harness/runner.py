"""Sequence simulation and the end-to-end analysis chain.

Random streams: sequence ``k`` of a run with seed ``s`` uses
``SeedSequence(s, spawn_key=(k,))``, split into an Alice stream (random
symbol patterns) and a physics stream. Sequences are therefore independent
of the order and thread in which they are simulated.
"""
from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .. import security
from ..adversary import AmbiguousAction, short_shape
from ..estimation import (
    ContrastSample,
    EstimationError,
    GammaEstimate,
    estimate_gamma,
    gamma_lower_bound,
    relative_contrast_loss,
)
from ..photonics import (
    Channel,
    Chronogram,
    dark_count_ticks,
    detect_times,
    draw_phases,
    draw_photons,
    mz_plus_probability,
    sample_arrival_times,
    to_ticks,
)
from ..protocol import CODE_B, CODE_C, SlotVerdict, TruthRecord, alice_codes, classify_ticks, offset_table, qber_scan
from ..pulse_model import autocorrelation
from .config import ExperimentConfig

logger = logging.getLogger(__name__)

# pulse kinds reaching Bob
_HONEST, _SHORT, _NONE = 0, 1, -1


def sequence_streams(seed: int, sequence_id: int) -> tuple[np.random.Generator, np.random.Generator]:
    """(alice_rng, physics_rng) for one sequence."""
    alice, physics = np.random.SeedSequence(seed, spawn_key=(sequence_id,)).spawn(2)
    return np.random.default_rng(alice), np.random.default_rng(physics)


def _eve(cfg: ExperimentConfig, symbols: np.ndarray, offsets: np.ndarray, rng: np.random.Generator):
    """Apply the configured intercept-resend attack; returns (kind, offsets)."""
    n = symbols.size
    kind = np.full(n, _HONEST, dtype=np.int8)
    strategy = cfg.attack()
    if strategy is None:
        return kind, offsets
    pcfg = cfg.protocol
    hit = np.flatnonzero(rng.random(n) < strategy.intercept_fraction)
    t = offsets[hit] + sample_arrival_times(cfg.pulse_shape, hit.size, rng)
    verdict = classify_ticks(to_ticks(t), pcfg)
    offsets = offsets.copy()
    unamb = (verdict == SlotVerdict.BIT0) | (verdict == SlotVerdict.BIT1)
    offsets[hit[unamb]] = verdict[unamb] * pcfg.bit_delay
    amb = hit[verdict == SlotVerdict.AMBIGUOUS]
    kind[hit[verdict == SlotVerdict.OUT_OF_WINDOW]] = _NONE
    action = strategy.ambiguous_action
    if action is AmbiguousAction.GUESS_RESEND_FULL:
        offsets[amb] = rng.integers(0, 2, amb.size) * pcfg.bit_delay
    elif action is AmbiguousAction.RESEND_SHORT_SLOT4:
        kind[amb] = _SHORT
        offsets[amb] = pcfg.slot_width
    else:
        kind[amb] = _NONE
    return kind, offsets


def run_sequence(
    cfg: ExperimentConfig,
    symbols: np.ndarray,
    rng: np.random.Generator,
    sequence_id: int = 0,
) -> tuple[Chronogram, TruthRecord]:
    """Simulate one sequence of Alice's ``symbols`` (codes 0..3) through Bob's set-up."""
    pcfg = cfg.protocol
    symbols = np.asarray(symbols, dtype=np.int8)
    if symbols.shape != (cfg.n_clocks,):
        raise ValueError(f"expected {cfg.n_clocks} symbols, got {symbols.shape}")
    allowed = [s.code for s in pcfg.alphabet]
    if not np.all(np.isin(symbols, allowed)):
        raise ValueError(f"symbols outside the {pcfg.variant.value} alphabet")

    shapes = {_HONEST: cfg.pulse_shape, _SHORT: short_shape(pcfg)}
    gammas = {k: autocorrelation(s, cfg.interferometer_delay) for k, s in shapes.items()}
    detectors = cfg.detectors()
    fixed = cfg.phase()
    phase = float(draw_phases(1, rng)[0]) if fixed is None else fixed

    offsets = offset_table(pcfg)[symbols]
    kind, offsets = _eve(cfg, symbols, offsets, rng)

    mean = cfg.mu * cfg.transmission
    photons = draw_photons(np.where(kind == _NONE, 0.0, mean), rng)
    n_key = rng.binomial(photons, 0.5)
    n_mz = photons - n_key
    gamma = np.where(kind == _SHORT, gammas[_SHORT], gammas[_HONEST])
    n_plus = rng.binomial(n_mz, mz_plus_probability(gamma, phase))
    counts = {Channel.KEY: n_key, Channel.MZ_PLUS: n_plus, Channel.MZ_MINUS: n_mz - n_plus}

    base = np.arange(symbols.size) * pcfg.clock_period + cfg.propagation_delay
    window = (0.0, cfg.window_ns)
    ticks_out, chan_out = [], []
    for ch, n in counts.items():
        det = detectors[ch]
        n = rng.binomial(n, det.efficiency)
        clocks = np.repeat(np.arange(symbols.size), n)
        arrival = np.empty(clocks.size)
        for k, shape in shapes.items():
            sel = kind[clocks] == k
            arrival[sel] = sample_arrival_times(shape, int(sel.sum()), rng)
        rel = offsets[clocks] + arrival
        if ch is Channel.KEY and cfg.slot_error_rate > 0:
            # mirror about the centre of slot 4: slot 3 <-> slot 5
            flip = rng.random(rel.size) < cfg.slot_error_rate
            rel = np.where(flip, 3 * pcfg.slot_width - rel, rel)
        ticks = np.concatenate([detect_times(base[clocks] + rel, det, rng), dark_count_ticks(det, window, rng)])
        ticks = ticks[(ticks >= 0) & (ticks < cfg.window_ticks)]
        ticks_out.append(ticks)
        chan_out.append(np.full(ticks.size, int(ch), dtype=np.int8))

    ticks = np.concatenate(ticks_out)
    chrono = Chronogram(np.full(ticks.size, sequence_id), np.concatenate(chan_out), ticks)
    return chrono, TruthRecord(np.array([sequence_id]), symbols[None, :])


def simulate_sequence(cfg: ExperimentConfig, sequence_id: int) -> tuple[Chronogram, TruthRecord]:
    alice_rng, phys_rng = sequence_streams(cfg.seed, sequence_id)
    symbols = alice_codes(cfg.pattern, cfg.n_clocks, cfg.variant, alice_rng)
    return run_sequence(cfg, symbols, phys_rng, sequence_id)


def simulate(cfg: ExperimentConfig, threads: int = 1) -> tuple[Chronogram, TruthRecord]:
    """Simulate every sequence; output is identical for any thread count."""
    cfg.pulse_shape  # noqa: B018  build once before fanning out
    ids = range(cfg.n_sequences)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda k: simulate_sequence(cfg, k), ids))
    else:
        parts = [simulate_sequence(cfg, k) for k in ids]
    return Chronogram.concat([p[0] for p in parts]), TruthRecord.concat([p[1] for p in parts])


def contrast_samples(chrono: Chronogram, sequence_ids: np.ndarray) -> list[ContrastSample]:
    plus = chrono.sequence_id[chrono.channel == Channel.MZ_PLUS]
    minus = chrono.sequence_id[chrono.channel == Channel.MZ_MINUS]
    return [
        ContrastSample(int(np.count_nonzero(plus == s)), int(np.count_nonzero(minus == s)), int(s))
        for s in sequence_ids
    ]


@dataclass
class RunReport:
    qber: float | None
    qber_stderr: float | None
    best_delay: float | None
    qber_last_sequence: float | None
    qber_last_sequence_stderr: float | None
    best_delay_last_sequence: float | None
    sift: dict
    sift_last_sequence: dict
    gamma_estimate: dict | None
    gamma_lower: float | None
    gamma_th: float
    dc: float | None
    dc_gamma0: float | None
    i_ab: float | None
    i_ae: float | None
    advantage: float | None
    advantage_per_pulse: float | None
    channel_counts: dict
    n_sequences: int
    n_clocks: int
    flags: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return asdict(self)


def analyze(
    cfg: ExperimentConfig,
    chrono: Chronogram,
    truth: TruthRecord,
    grid: security.StrategyGrid | None = None,
) -> RunReport:
    """QBER scan, gamma estimate, contrast loss and advantage for a recorded run."""
    pcfg = cfg.protocol
    flags: list[str] = []
    delays = cfg.delay_grid()
    scan = qber_scan(chrono, truth, delays, pcfg)
    last_id = int(truth.sequence_ids.max())
    last = qber_scan(chrono.select(chrono.sequence_id == last_id), truth, delays, pcfg)
    if scan.flagged:
        flags.append("no_sifted_events")

    gamma_th = autocorrelation(cfg.pulse_shape, cfg.interferometer_delay)
    est: GammaEstimate | None = None
    samples = contrast_samples(chrono, truth.sequence_ids)
    empty = sum(s.total == 0 for s in samples)
    if empty:
        flags.append(f"empty_sequences: {empty}")
    try:
        with warnings.catch_warnings():
            # reported through the flag above
            warnings.simplefilter("ignore", UserWarning)
            est = estimate_gamma(samples)
    except EstimationError as exc:
        flags.append(f"gamma_unavailable: {exc}")
    gamma_lower = dc = dc0 = None
    if est is not None:
        if est.shot_noise_limited:
            flags.append("shot_noise_limited")
        gamma_lower = gamma_lower_bound(est, cfg.sigma_k)
        dc = relative_contrast_loss(gamma_lower, gamma_th)
        dc0 = relative_contrast_loss(est.gamma0, gamma_th)
        if dc < 0:
            flags.append("gamma_above_theory")

    i_ab = i_ae = adv = adv_pulse = None
    if not scan.flagged and dc is not None:
        if scan.qber > 0.5:
            flags.append("qber_above_half")
        else:
            grid = grid or security.default_grid(pcfg)
            i_ab = security.mutual_info_ab(scan.qber)
            i_ae = security.mutual_info_ae(scan.qber, max(dc, 0.0), grid)
            adv = i_ab - i_ae
            n_keyed = int(np.count_nonzero((truth.symbols == CODE_B) | (truth.symbols == CODE_C)))
            adv_pulse = adv * scan.report.n_sifted / n_keyed if n_keyed else None

    def opt(x: float) -> float | None:
        return None if x is None or math.isnan(x) else float(x)

    return RunReport(
        qber=opt(scan.qber),
        qber_stderr=opt(scan.report.qber_stderr),
        best_delay=opt(scan.best_delay),
        qber_last_sequence=opt(last.qber),
        qber_last_sequence_stderr=opt(last.report.qber_stderr),
        best_delay_last_sequence=opt(last.best_delay),
        sift=scan.report.as_dict(),
        sift_last_sequence=last.report.as_dict(),
        gamma_estimate=est.as_dict() if est else None,
        gamma_lower=gamma_lower,
        gamma_th=gamma_th,
        dc=dc,
        dc_gamma0=dc0,
        i_ab=i_ab,
        i_ae=i_ae,
        advantage=adv,
        advantage_per_pulse=adv_pulse,
        channel_counts=chrono.counts(),
        n_sequences=int(truth.sequence_ids.size),
        n_clocks=truth.n_clocks,
        flags=flags,
    )


@dataclass
class ExperimentResult:
    report: RunReport
    chronogram: Chronogram
    truth: TruthRecord


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    if cfg.n_sequences < 2:
        raise ValueError("an experiment needs at least 2 sequences")
    chrono, truth = simulate(cfg, threads)
    return ExperimentResult(analyze(cfg, chrono, truth), chrono, truth)
