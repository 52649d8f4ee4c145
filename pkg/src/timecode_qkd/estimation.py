"""Autocorrelation estimate from interferometer contrast statistics.

Per sequence the contrast is ``C = (n+ - n-) / (n+ + n-)``. With a random
interferometer phase and shot noise, ``<C^2> = gamma^2 / 2 + 1 / N_p``, which
is inverted to estimate gamma. The estimate is treated as Gaussian with
variance ``2 / (N_p N_s)``.
"""
from __future__ import annotations

import csv
import logging
import math
import warnings
from collections.abc import Iterable
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)


class EstimationError(ValueError):
    pass


@dataclass(frozen=True)
class ContrastSample:
    n_plus: int
    n_minus: int
    sequence_id: int = 0

    def __post_init__(self) -> None:
        if self.n_plus < 0 or self.n_minus < 0:
            raise ValueError("counts must be non-negative")

    @property
    def total(self) -> int:
        return self.n_plus + self.n_minus


def contrast(sample: ContrastSample) -> float:
    """Normalized count difference; raises for an empty sample."""
    if sample.total == 0:
        raise EstimationError(f"sequence {sample.sequence_id} has no interferometer counts")
    return (sample.n_plus - sample.n_minus) / sample.total


@dataclass(frozen=True)
class GammaEstimate:
    gamma0: float
    sigma_seq: float
    sigma_total: float
    n_p: float
    n_s: int
    mean_c2: float
    mean_c: float = 0.0
    excluded: tuple[int, ...] = field(default=())
    shot_noise_limited: bool = False

    @property
    def sigma_seq2(self) -> float:
        return self.sigma_seq**2

    def as_dict(self) -> dict:
        d = asdict(self)
        d["excluded"] = list(self.excluded)
        return d


def estimate_gamma(samples: Iterable[ContrastSample]) -> GammaEstimate:
    """Aggregate per-sequence samples into a gamma estimate.

    Empty sequences are dropped and listed in ``excluded``. ``mean_c2`` is the
    raw mean of C^2 (phases average the contrast to zero); the sample mean of
    C is kept as a diagnostic.
    """
    samples = list(samples)
    valid = [s for s in samples if s.total > 0]
    excluded = tuple(s.sequence_id for s in samples if s.total == 0)
    if excluded:
        warnings.warn(f"excluded {len(excluded)} sequence(s) with no counts", stacklevel=2)
    if len(valid) < 2:
        raise EstimationError(f"need at least 2 sequences with counts, got {len(valid)}")
    n_plus = np.array([s.n_plus for s in valid], dtype=float)
    n_minus = np.array([s.n_minus for s in valid], dtype=float)
    total = n_plus + n_minus
    c = (n_plus - n_minus) / total
    return estimate_from_moments(float(np.mean(c * c)), float(total.mean()), len(valid),
                                 mean_c=float(c.mean()), excluded=excluded)


def estimate_from_moments(
    mean_c2: float,
    n_p: float,
    n_s: int,
    mean_c: float = 0.0,
    excluded: tuple[int, ...] = (),
) -> GammaEstimate:
    """Estimate from summary statistics: mean C^2, photons/sequence, sequences."""
    if n_p <= 0 or n_s < 1:
        raise EstimationError("need a positive photon number and at least one sequence")
    sigma2 = 1.0 / n_p
    g2 = 2.0 * (mean_c2 - sigma2)
    limited = g2 < 0
    if limited:
        logger.warning("mean C^2 %.4g below shot-noise level %.4g; gamma clamped to 0", mean_c2, sigma2)
    return GammaEstimate(
        gamma0=math.sqrt(max(0.0, g2)),
        sigma_seq=math.sqrt(sigma2),
        sigma_total=math.sqrt(2.0 / (n_p * n_s)),
        n_p=n_p,
        n_s=n_s,
        mean_c2=mean_c2,
        mean_c=mean_c,
        excluded=excluded,
        shot_noise_limited=limited,
    )


def gamma_lower_bound(est: GammaEstimate, k: float = 3.0) -> float:
    """``gamma0 - k * sigma_total``, clamped at zero."""
    if k < 0:
        raise ValueError("sigma multiplier must be non-negative")
    return max(0.0, est.gamma0 - k * est.sigma_total)


def phase_aware_sigma(est: GammaEstimate) -> float:
    """Spread of gamma0 including the random-phase term.

    ``sigma_total`` only carries shot noise. With a uniform phase per
    sequence, C^2 also fluctuates through cos^2(phi), adding
    ``gamma^2 / (8 n_s)`` to the variance of gamma0.
    """
    return math.sqrt(est.sigma_total**2 + est.gamma0**2 / (8.0 * est.n_s))


def relative_contrast_loss(gamma: float, gamma_th: float) -> float:
    """``(gamma_th - gamma) / gamma_th``. Negative values are returned as-is."""
    if gamma_th <= 0:
        raise ValueError("theoretical autocorrelation must be positive")
    return (gamma_th - gamma) / gamma_th


def read_samples_csv(path: str | Path) -> list[ContrastSample]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["sequence_id", "n_plus", "n_minus"]:
            raise ValueError(f"{path}: expected header sequence_id,n_plus,n_minus, got {header}")
        out = []
        for line, rec in enumerate(reader, start=2):
            try:
                sid, a, b = (int(x) for x in rec)
                out.append(ContrastSample(a, b, sid))
            except ValueError as exc:
                raise ValueError(f"{path}:{line}: malformed row {rec!r}") from exc
    return out


def write_samples_csv(path: str | Path, samples: Iterable[ContrastSample]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("sequence_id,n_plus,n_minus\n")
        for s in samples:
            fh.write(f"{s.sequence_id},{s.n_plus},{s.n_minus}\n")
