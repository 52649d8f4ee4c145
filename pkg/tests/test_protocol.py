from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from timecode_qkd.photonics import Channel, Chronogram, sample_arrival_times, to_ticks
from timecode_qkd.protocol import (
    Pattern,
    ProtocolConfig,
    SlotVerdict,
    Symbol,
    TruthRecord,
    Variant,
    classify_slot,
    emission_offset,
    make_alice_sequence,
    predicted_qber,
    qber_scan,
    sift,
)
from timecode_qkd.pulse_model import make_edged, make_square

FOUR = ProtocolConfig(variant=Variant.FOUR_STATE)


def key_chrono(times_ns, sequence_id=0) -> Chronogram:
    t = to_ticks(np.asarray(times_ns))
    return Chronogram(np.full(t.size, sequence_id), np.full(t.size, int(Channel.KEY)), t)


def fixture(n_correct: int, n_wrong: int, delay: float = 37.0):
    """Alternating b/c clocks; one event per clock, in the right or wrong slot."""
    n = n_correct + n_wrong
    bits = np.arange(n) % 2
    wrong = np.zeros(n, bool)
    wrong[:n_wrong] = True
    slot = np.where(wrong, 1 - bits, bits)
    t = np.arange(n) * 100.0 + delay + slot * 20.0 + 5.0
    return key_chrono(t), TruthRecord.from_bits(bits)


def test_emission_offsets(pcfg):
    assert emission_offset("b", pcfg) == 0.0
    assert emission_offset("c", pcfg) == 10.0
    assert emission_offset("a", FOUR) == -10.0
    assert emission_offset("d", FOUR) == 20.0
    with pytest.raises(ValueError):
        emission_offset("a", pcfg)


@pytest.mark.parametrize(
    "rel, verdict",
    [(5, SlotVerdict.BIT0), (15, SlotVerdict.AMBIGUOUS), (25, SlotVerdict.BIT1), (50, SlotVerdict.OUT_OF_WINDOW),
     (0, SlotVerdict.BIT0), (10, SlotVerdict.AMBIGUOUS), (20, SlotVerdict.BIT1), (30, SlotVerdict.OUT_OF_WINDOW),
     (-0.1, SlotVerdict.OUT_OF_WINDOW)],
)
def test_classify_slot(pcfg, rel, verdict):
    assert classify_slot(300 + 37 + rel, 3, 37.0, pcfg) is verdict


@given(st.integers(-500, 1000))
def test_classification_is_a_partition(tick):
    cfg = ProtocolConfig()
    v = classify_slot(tick * 0.1, 0, 0.0, cfg)
    rel = tick * 0.1
    expected = [0 <= rel < 10, 10 <= rel < 20, 20 <= rel < 30]
    if any(expected):
        assert v == [SlotVerdict.BIT0, SlotVerdict.AMBIGUOUS, SlotVerdict.BIT1][expected.index(True)]
    else:
        assert v is SlotVerdict.OUT_OF_WINDOW


def test_sift_all_correct(pcfg):
    c, t = fixture(1000, 0)
    r = sift(c, t, 37.0, pcfg)
    assert (r.n_correct, r.n_wrong, r.qber) == (1000, 0, 0.0)


def test_sift_967_33(pcfg):
    c, t = fixture(967, 33)
    r = sift(c, t, 37.0, pcfg)
    assert (r.n_correct, r.n_wrong) == (967, 33)
    assert r.qber == 0.033
    assert r.qber_stderr == pytest.approx(math.sqrt(0.033 * 0.967 / 1000))


def test_sift_all_ambiguous_is_flagged(pcfg):
    t = np.arange(100) * 100.0 + 37 + 15
    r = sift(key_chrono(t), TruthRecord.from_bits(np.arange(100) % 2), 37.0, pcfg)
    assert r.flagged and math.isnan(r.qber)
    assert r.n_ambiguous == 100


def test_sift_empty_chronogram(pcfg):
    r = sift(Chronogram(), TruthRecord.from_bits([0, 1]), 37.0, pcfg)
    assert r.flagged and r.n_sifted == 0


def test_sift_ignores_other_channels(pcfg):
    c, t = fixture(10, 0)
    mz = Chronogram(c.sequence_id, np.full(len(c), int(Channel.MZ_PLUS)), c.ticks + 100)
    assert sift(Chronogram.concat([c, mz]), t, 37.0, pcfg).n_sifted == 10


def test_sift_invariant_under_relabeling(pcfg, rng):
    c, t = fixture(500, 40)
    relabeled = Chronogram(np.full(len(c), 17), c.channel, c.ticks)
    truth17 = TruthRecord(np.array([17]), t.symbols)
    shuffled = rng.permutation(len(c))
    r1 = sift(c, t, 37.0, pcfg)
    r2 = sift(relabeled, truth17, 37.0, pcfg)
    r3 = sift(Chronogram(c.sequence_id[shuffled], c.channel[shuffled], c.ticks[shuffled]), t, 37.0, pcfg)
    assert r1.as_dict() == r2.as_dict() == r3.as_dict()


def test_scan_recovers_delay(pcfg, rng):
    n = 4000
    bits = rng.integers(0, 2, n)
    t = np.arange(n) * 100.0 + 37.0 + bits * 10.0 + sample_arrival_times(make_square(20), n, rng)
    grid = np.round(np.arange(27, 47.01, 0.1), 6)
    scan = qber_scan(key_chrono(t), TruthRecord.from_bits(bits), grid, pcfg)
    assert abs(scan.best_delay - 37.0) <= 0.5
    assert scan.qber == 0.0


def test_scan_singleton_equals_sift(pcfg):
    c, t = fixture(967, 33)
    scan = qber_scan(c, t, [37.0], pcfg)
    assert scan.report.as_dict() == sift(c, t, 37.0, pcfg).as_dict()
    assert scan.best_delay == 37.0


def test_scan_minimizes_and_ties_go_low(pcfg):
    c, t = fixture(967, 33)
    grid = np.arange(30, 45, 0.5)
    scan = qber_scan(c, t, grid, pcfg)
    for d in grid:
        q = sift(c, t, d, pcfg).qber
        assert math.isnan(q) or scan.qber <= q
    # every delay in (32, 42] keeps the events in the same slots
    assert scan.best_delay == 32.5


def test_scan_rejects_coarse_grid(pcfg):
    c, t = fixture(10, 0)
    with pytest.raises(ValueError):
        qber_scan(c, t, [30.0, 32.0], pcfg)
    with pytest.raises(ValueError):
        qber_scan(c, t, [], pcfg)


def test_scan_all_ambiguous_flagged(pcfg):
    t = np.arange(50) * 100.0 + 37 + 15
    scan = qber_scan(key_chrono(t), TruthRecord.from_bits(np.arange(50) % 2), [37.0], pcfg)
    assert scan.flagged and math.isnan(scan.best_delay)


def test_noiseless_square_half_ambiguous(pcfg, rng):
    n = 20_000
    bits = rng.integers(0, 2, n)
    t = np.arange(n) * 100.0 + 37.0 + bits * 10.0 + sample_arrival_times(make_square(20), n, rng)
    r = sift(key_chrono(t), TruthRecord.from_bits(bits), 37.0, pcfg)
    assert r.qber == 0.0
    frac = r.n_ambiguous / n
    assert abs(frac - 0.5) < 3 * math.sqrt(0.25 / n)


def test_alice_patterns(rng):
    assert make_alice_sequence("alternating", 4, "two_state") == [Symbol.B, Symbol.C, Symbol.B, Symbol.C]
    assert make_alice_sequence(Pattern.FIXED0, 3, "two_state") == [Symbol.B] * 3
    assert make_alice_sequence(Pattern.FIXED1, 2, "two_state") == [Symbol.C] * 2
    seq = make_alice_sequence("random", 100_000, "four_state", rng)
    codes = np.array([s.code for s in seq])
    for code in range(4):
        assert abs(np.mean(codes == code) - 0.25) < 0.01
    two = make_alice_sequence("random", 1000, "two_state", rng)
    assert set(two) <= {Symbol.B, Symbol.C}


def test_four_state_decoys_excluded_from_key():
    n = 400
    codes = np.tile([0, 1, 2, 3], n // 4)
    # a and b land in slot 3, c and d in slot 5
    rel = np.array([5.0, 5.0, 25.0, 25.0])[codes]
    t = np.arange(n) * 100.0 + 37.0 + rel
    r = sift(key_chrono(t), TruthRecord(np.array([0]), codes[None, :]), 37.0, FOUR)
    assert r.n_sifted == 200 and r.qber == 0.0
    assert r.decoy_counts["a:BIT0"] == r.decoy_counts["d:BIT1"] == 100
    assert r.n_out == 0


def test_config_validation():
    with pytest.raises(ValueError):
        ProtocolConfig(clock_period=30, pulse_duration=20)


def test_predicted_qber_square_is_zero(pcfg):
    assert predicted_qber(make_square(20), pcfg) == 0.0
    q = predicted_qber(make_edged(20, 3, 3, 18.7), pcfg, jitter_sigma=0.127)
    assert 0 < q < 0.05
