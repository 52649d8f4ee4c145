from __future__ import annotations

import math

import numpy as np
import pytest

from timecode_qkd.estimation import (
    ContrastSample,
    EstimationError,
    contrast,
    estimate_from_moments,
    estimate_gamma,
    gamma_lower_bound,
    phase_aware_sigma,
    read_samples_csv,
    relative_contrast_loss,
    write_samples_csv,
)
from timecode_qkd.photonics import draw_phases, mz_sequence_counts


def simulated_samples(gamma, n_p, n_s, rng):
    a, b = mz_sequence_counts(n_p, gamma, draw_phases(n_s, rng), rng)
    return [ContrastSample(int(x), int(y), i) for i, (x, y) in enumerate(zip(a, b))]


def repeated_estimates(gamma, n_p, n_s, reps, seed):
    rng = np.random.default_rng(seed)
    return [estimate_gamma(simulated_samples(gamma, n_p, n_s, rng)) for _ in range(reps)]


def test_contrast_values():
    assert contrast(ContrastSample(100, 100)) == 0
    assert contrast(ContrastSample(150, 50)) == 0.5
    with pytest.raises(EstimationError):
        contrast(ContrastSample(0, 0))
    with pytest.raises(ValueError):
        ContrastSample(-1, 2)


def test_measured_chain():
    est = estimate_from_moments(0.15, 282.5, 290)
    assert est.gamma0 == pytest.approx(0.541, abs=0.001)
    assert est.sigma_seq**2 == pytest.approx(3.54e-3, abs=2e-5)
    assert est.sigma_total == pytest.approx(4.9e-3, abs=1e-4)
    assert gamma_lower_bound(est, 3) == pytest.approx(0.526, abs=0.001)


def test_pure_shot_noise_gives_zero():
    est = estimate_from_moments(1 / 300, 300, 100)
    assert est.gamma0 == 0.0
    low = estimate_from_moments(0.001, 300, 100)
    assert low.gamma0 == 0.0 and low.shot_noise_limited


def test_estimate_excludes_empty_sequences():
    samples = [ContrastSample(150, 50, 0), ContrastSample(0, 0, 1), ContrastSample(50, 150, 2)]
    with pytest.warns(UserWarning):
        est = estimate_gamma(samples)
    assert est.excluded == (1,)
    assert est.n_s == 2
    assert est.mean_c2 == pytest.approx(0.25)
    assert est.mean_c == pytest.approx(0.0)


def test_estimate_needs_two_valid():
    with pytest.raises(EstimationError), pytest.warns(UserWarning):
        estimate_gamma([ContrastSample(0, 0, 0), ContrastSample(0, 0, 1)])
    with pytest.raises(EstimationError):
        estimate_gamma([ContrastSample(10, 3, 0)])


def test_invariants_hold():
    est = estimate_from_moments(0.15, 282.5, 290)
    assert est.sigma_total == pytest.approx(math.sqrt(2 / (est.n_p * est.n_s)))
    assert est.gamma0**2 == pytest.approx(max(0.0, 2 * (est.mean_c2 - 1 / est.n_p)))


def test_duplication_scale(rng):
    samples = simulated_samples(0.5, 300, 200, rng)
    one = estimate_gamma(samples)
    two = estimate_gamma(samples + samples)
    assert two.gamma0 == pytest.approx(one.gamma0, abs=1e-12)
    assert two.sigma_total == pytest.approx(one.sigma_total / math.sqrt(2))


def test_lower_bound():
    est = estimate_from_moments(0.15, 282.5, 290)
    assert gamma_lower_bound(est, 0) == est.gamma0
    bounds = [gamma_lower_bound(est, k) for k in (0, 1, 2, 3, 5)]
    assert all(b2 <= b1 for b1, b2 in zip(bounds, bounds[1:]))
    assert all(b <= est.gamma0 for b in bounds)
    tiny = estimate_from_moments(1 / 300 + 0.5 * 0.01**2, 300, 100)
    assert tiny.gamma0 == pytest.approx(0.01)
    assert gamma_lower_bound(tiny, 3) == 0.0


def test_contrast_loss():
    assert relative_contrast_loss(0.526, 0.576) == pytest.approx(0.0868, abs=1e-4)
    assert relative_contrast_loss(0.541, 0.576) == pytest.approx(0.0608, abs=1e-4)
    assert relative_contrast_loss(0.576, 0.576) == 0
    assert relative_contrast_loss(0.6, 0.576) < 0
    with pytest.raises(ValueError):
        relative_contrast_loss(0.5, 0.0)


def test_second_moment_end_to_end(rng):
    gamma, n_p, n_s = 0.5, 300, 1000
    samples = simulated_samples(gamma, n_p, n_s, rng)
    c2 = np.array([contrast(s) ** 2 for s in samples])
    se = c2.std(ddof=1) / math.sqrt(n_s)
    assert abs(c2.mean() - (gamma**2 / 2 + 1 / n_p)) < 3 * se


def test_recovery_within_three_sigma_total():
    # gamma0 lands within 3 sigma_T of the truth in at least 99 % of runs
    ests = repeated_estimates(0.5, 300, 1000, 200, seed=11)
    hit = np.mean([abs(e.gamma0 - 0.5) <= 3 * e.sigma_total for e in ests])
    assert hit >= 0.99, f"coverage {hit:.3f}"


def test_lower_bound_coverage():
    # true gamma falls below gamma0 - 3 sigma_T at most 0.5 % of the time
    ests = repeated_estimates(0.5, 300, 1000, 500, seed=12)
    miss = np.mean([0.5 < e.gamma0 - 3 * e.sigma_total for e in ests])
    assert miss <= 0.005, f"miss rate {miss:.3f}"


def test_phase_aware_spread_covers():
    ests = repeated_estimates(0.5, 300, 1000, 500, seed=13)
    g0 = np.array([e.gamma0 for e in ests])
    sig = np.array([phase_aware_sigma(e) for e in ests])
    assert np.std(g0) == pytest.approx(np.mean(sig), rel=0.1)
    assert np.mean(np.abs(g0 - 0.5) <= 3 * sig) >= 0.99


def test_samples_csv_round_trip(tmp_path):
    samples = [ContrastSample(3, 4, 0), ContrastSample(10, 0, 7)]
    p = tmp_path / "s.csv"
    write_samples_csv(p, samples)
    assert read_samples_csv(p) == samples
    p.write_text("sequence_id,n_plus,n_minus\n1,2\n")
    with pytest.raises(ValueError):
        read_samples_csv(p)
