from __future__ import annotations

import numpy as np
import pytest

from timecode_qkd.adversary import (
    AmbiguousAction,
    AttackStrategy,
    eve_intercept,
    eve_resend,
    evaluate_strategy_exact,
    evaluate_strategy_mc,
    honest_shape,
)
from timecode_qkd.photonics import PulseInstance
from timecode_qkd.protocol import SlotVerdict
from timecode_qkd.pulse_model import PulseShape, autocorrelation, make_square

ACTIONS = list(AmbiguousAction)
P_GRID = [0.0, 0.25, 0.5, 0.75, 1.0]
FIELDS = ("qber_induced", "gamma_avg", "info_eve")


def _verdicts(bit, pcfg, rng, n=20_000):
    pulse = PulseInstance(honest_shape(pcfg), bit * pcfg.bit_delay, 1.0)
    return np.array([int(eve_intercept(pulse, pcfg, rng)) for _ in range(n)])


@pytest.mark.parametrize("bit, unamb", [(0, SlotVerdict.BIT0), (1, SlotVerdict.BIT1)])
def test_intercept_half_ambiguous(pcfg, rng, bit, unamb):
    v = _verdicts(bit, pcfg, rng)
    assert abs(np.mean(v == SlotVerdict.AMBIGUOUS) - 0.5) < 0.015
    assert abs(np.mean(v == unamb) - 0.5) < 0.015


def test_intercept_point_pulse(pcfg, rng):
    # a single-bin pulse at the centre of slot 3
    spike = PulseShape(5.0, 0.05, np.array([0.0, 1.0, 0.0]), 0.05).normalized()
    pulse = PulseInstance(spike, 0.0, 1.0)
    assert all(eve_intercept(pulse, pcfg, rng) is SlotVerdict.BIT0 for _ in range(200))


def test_resend_rules(pcfg, rng):
    full = AttackStrategy(1.0, "guess_resend_full")
    p = eve_resend(SlotVerdict.BIT0, "c", full, pcfg, rng)
    assert p.emission_offset == 0.0 and p.shape.nominal_duration == 20
    short = eve_resend(SlotVerdict.AMBIGUOUS, "b", AttackStrategy(1.0, "resend_short_slot4"), pcfg, rng)
    assert short.emission_offset == 10.0
    assert autocorrelation(short.shape, 10) == 0.0
    assert eve_resend(SlotVerdict.AMBIGUOUS, "b", AttackStrategy(1.0, "block"), pcfg, rng) is None
    guesses = {eve_resend(SlotVerdict.AMBIGUOUS, "b", full, pcfg, rng).emission_offset for _ in range(100)}
    assert guesses == {0.0, 10.0}


def test_strategy_validation():
    with pytest.raises(ValueError):
        AttackStrategy(1.5)
    with pytest.raises(ValueError):
        AttackStrategy(0.5, "teleport")


@pytest.mark.parametrize("action", ACTIONS)
def test_no_attack(pcfg, action):
    o = evaluate_strategy_exact(AttackStrategy(0.0, action), pcfg)
    assert o.qber_induced == 0 and o.info_eve == 0
    assert o.gamma_avg == pytest.approx(0.5)
    assert o.sift_rate == pytest.approx(0.5)


def test_full_guess_attack(pcfg):
    o = evaluate_strategy_exact(AttackStrategy(1.0, "guess_resend_full"), pcfg)
    assert o.qber_induced == pytest.approx(0.25)
    assert o.gamma_avg == pytest.approx(0.5)
    assert evaluate_strategy_exact(AttackStrategy(0.5), pcfg).qber_induced == pytest.approx(0.125)


def test_full_short_attack(pcfg):
    o = evaluate_strategy_exact(AttackStrategy(1.0, "resend_short_slot4"), pcfg)
    assert o.qber_induced == 0
    assert o.gamma_avg == pytest.approx(0.25)


@pytest.mark.parametrize("action", ACTIONS)
def test_monotone_in_p(pcfg, action):
    out = [evaluate_strategy_exact(AttackStrategy(p, action), pcfg) for p in np.linspace(0, 1, 21)]
    for a, b in zip(out, out[1:]):
        assert b.qber_induced >= a.qber_induced - 1e-12
        assert b.info_eve >= a.info_eve - 1e-12


def test_shortening_lowers_contrast(pcfg):
    for p in (0.01, 0.3, 1.0):
        o = evaluate_strategy_exact(AttackStrategy(p, "resend_short_slot4"), pcfg)
        assert o.gamma_avg < 0.5


@pytest.mark.parametrize("action", ACTIONS)
@pytest.mark.parametrize("p", P_GRID)
def test_exact_matches_monte_carlo(pcfg, p, action):
    s = AttackStrategy(p, action)
    exact = evaluate_strategy_exact(s, pcfg)
    mc = evaluate_strategy_mc(s, pcfg, 10**6, np.random.default_rng(int(p * 100) + 7 * ACTIONS.index(action)))
    for f in FIELDS:
        assert abs(getattr(mc, f) - getattr(exact, f)) <= 4 * mc.stderr[f] + 1e-9, f


def test_mc_needs_enough_trials(pcfg, rng):
    with pytest.raises(ValueError):
        evaluate_strategy_mc(AttackStrategy(1.0), pcfg, 1000, rng)


def test_mc_p1_guess(pcfg):
    mc = evaluate_strategy_mc(AttackStrategy(1.0), pcfg, 10**6, np.random.default_rng(1))
    assert abs(mc.qber_induced - 0.25) <= 0.003


def test_outcomes_in_unit_interval(pcfg):
    for a in ACTIONS:
        for p in P_GRID:
            o = evaluate_strategy_exact(AttackStrategy(p, a), pcfg)
            for v in o.as_dict().values():
                assert 0.0 <= v <= 1.0
            assert o.gamma_avg <= autocorrelation(make_square(20), 10) + 1e-12
