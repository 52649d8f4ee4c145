"""Security diagram: I_AB and intercept-resend I_AE versus QBER.

Eve's information at a given QBER ``q`` and relative contrast loss ``dc`` is
the best she can do with a random mixture of the intercept-resend strategies
in a :class:`StrategyGrid`, subject to inducing at most ``q`` errors and
lowering the mean autocorrelation by at most the fraction ``dc``. Errors
below the observed QBER can be hidden in the natural error floor, hence the
inequality.

Mixtures act linearly on per-pulse rates (sifted, wrong, Eve-known, and
autocorrelation-weighted arrivals), so maximizing the per-sifted-bit
information is a linear-fractional program, solved here as an LP after the
Charnes-Cooper change of variables.
"""
from __future__ import annotations

import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import optimize

from .adversary import AmbiguousAction, AttackOutcome, AttackStrategy, evaluate_strategy_exact
from .infotheory import binary_entropy, mutual_info_ab
from .photonics import fiber_transmission
from .protocol import ProtocolConfig

__all__ = [
    "binary_entropy",
    "mutual_info_ab",
    "StrategyGrid",
    "default_grid",
    "mutual_info_ae",
    "advantage",
    "SecurityCurve",
    "security_curve",
    "Crossing",
    "max_secure_qber",
    "LinkBudget",
    "RangePoint",
    "expected_qber_at",
    "range_projection",
    "secure_range_km",
]

RESEND_ACTIONS = (AmbiguousAction.GUESS_RESEND_FULL, AmbiguousAction.RESEND_SHORT_SLOT4)


@dataclass(frozen=True)
class StrategyGrid:
    strategies: tuple[AttackStrategy, ...]
    outcomes: tuple[AttackOutcome, ...]
    gamma_honest: float

    def __post_init__(self) -> None:
        if not self.strategies:
            raise ValueError("strategy grid is empty")
        if len(self.strategies) != len(self.outcomes):
            raise ValueError("one outcome per strategy is required")

    @classmethod
    def build(
        cls, strategies: Iterable[AttackStrategy], cfg: ProtocolConfig | None = None
    ) -> StrategyGrid:
        cfg = cfg or ProtocolConfig()
        strategies = tuple(strategies)
        outcomes = tuple(evaluate_strategy_exact(s, cfg) for s in strategies)
        honest = evaluate_strategy_exact(AttackStrategy(0.0), cfg)
        return cls(strategies, outcomes, honest.gamma_avg)

    @cached_property
    def rates(self) -> dict[str, np.ndarray]:
        o = self.outcomes
        return {
            "sift": np.array([x.sift_rate for x in o]),
            "wrong": np.array([x.wrong_rate for x in o]),
            "info": np.array([x.info_rate for x in o]),
            "gamma": np.array([x.gamma_rate for x in o]),
            "arrive": np.array([x.arrival_rate for x in o]),
        }


def default_grid(
    cfg: ProtocolConfig | None = None,
    step: float = 0.01,
    actions: Sequence[AmbiguousAction] = RESEND_ACTIONS,
) -> StrategyGrid:
    """Intercept fractions 0..1 in ``step`` for each of the resend actions."""
    n = round(1.0 / step)
    ps = np.linspace(0.0, 1.0, n + 1)
    return StrategyGrid.build((AttackStrategy(float(p), a) for a in actions for p in ps), cfg)


def mutual_info_ae(q: float, dc: float, grid: StrategyGrid) -> float:
    """Eve's best information per sifted bit at QBER ``q`` and contrast loss ``dc``."""
    if not 0 <= q <= 1:
        raise ValueError(f"QBER must lie in [0, 1], got {q}")
    r = grid.rates
    sift = r["sift"]
    keep = sift > 0
    if not np.any(keep):
        return 0.0
    sift, wrong, info = sift[keep], r["wrong"][keep], r["info"][keep]
    gamma, arrive = r["gamma"][keep], r["arrive"][keep]
    floor = (1.0 - dc) * grid.gamma_honest
    # y = t * weights, normalized so that sum(y * sift) == 1
    res = optimize.linprog(
        c=-info,
        A_ub=np.vstack([wrong - q * sift, floor * arrive - gamma]),
        b_ub=np.zeros(2),
        A_eq=sift[None, :],
        b_eq=np.ones(1),
        bounds=(0, None),
        method="highs",
    )
    if res.status == 2:  # infeasible
        return 0.0
    if res.status != 0:
        raise RuntimeError(f"I_AE optimization failed: {res.message}")
    return float(np.clip(-res.fun, 0.0, 1.0))


def advantage(q: float, dc: float, grid: StrategyGrid) -> float:
    """Bob's information advantage over Eve, bits per sifted bit."""
    return mutual_info_ab(q) - mutual_info_ae(q, dc, grid)


@dataclass(frozen=True)
class SecurityCurve:
    dc: float
    q: np.ndarray
    i_ab: np.ndarray
    i_ae: np.ndarray

    def check(self, atol: float = 1e-9) -> None:
        """Raise if the curve breaks its ordering invariants."""
        if np.any(np.diff(self.q) <= 0):
            raise AssertionError("q grid not increasing")
        if np.any(np.diff(self.i_ab) > atol):
            raise AssertionError("I_AB increases somewhere")
        if np.any(np.diff(self.i_ae) < -atol):
            raise AssertionError("I_AE decreases somewhere")

    def rows(self) -> list[tuple[float, float, float, float]]:
        return [(float(a), float(b), float(c), self.dc) for a, b, c in zip(self.q, self.i_ab, self.i_ae)]


def q_grid(step: float = 0.001, q_max: float = 0.5) -> np.ndarray:
    return np.linspace(0.0, q_max, round(q_max / step) + 1)


def security_curve(dc: float, grid: StrategyGrid, q: np.ndarray | None = None) -> SecurityCurve:
    q = q_grid() if q is None else np.asarray(q, dtype=float)
    i_ab = np.asarray(mutual_info_ab(q))
    i_ae = np.array([mutual_info_ae(float(x), dc, grid) for x in q])
    return SecurityCurve(dc, q, i_ab, i_ae)


@dataclass(frozen=True)
class Crossing:
    """Result of solving I_AB = I_AE.

    ``status`` is ``"crossing"`` with ``q_star`` set, or one of
    ``"secure_on_range"`` / ``"insecure_on_range"`` with ``q_star`` None.
    """

    status: str
    q_star: float | None = None

    @property
    def flagged(self) -> bool:
        return self.q_star is None


def max_secure_qber(
    dc: float, grid: StrategyGrid, curve: SecurityCurve | None = None, q_step: float = 0.001
) -> Crossing:
    """Largest QBER at which Bob still out-informs Eve."""
    if q_step > 0.001 + 1e-12:
        raise ValueError("the crossing needs a QBER grid step of at most 0.001")
    curve = curve or security_curve(dc, grid, q_grid(q_step))
    diff = curve.i_ab - curve.i_ae
    if diff[0] <= 0:
        return Crossing("insecure_on_range")
    # a crossing where both informations vanish carries no security meaning
    hit = np.flatnonzero((diff <= 0) & (curve.i_ae > 0))
    if hit.size == 0:
        return Crossing("secure_on_range")
    j = int(hit[0])

    def f(x: float) -> float:
        return float(np.interp(x, curve.q, curve.i_ab) - np.interp(x, curve.q, curve.i_ae))

    q_star = optimize.bisect(f, curve.q[j - 1], curve.q[j], xtol=1e-10)
    return Crossing("crossing", float(q_star))


@dataclass(frozen=True)
class LinkBudget:
    """Fiber link with a single gated photon counter."""

    loss_db_per_km: float = 0.2
    detector_efficiency: float = 0.10
    dark_rate: float = 1e5  # counts per second
    mu: float = 0.1
    slot_width: float = 10.0  # ns

    def __post_init__(self) -> None:
        for name in ("loss_db_per_km", "detector_efficiency", "dark_rate", "mu", "slot_width"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def dark_per_slot(self) -> float:
        return self.dark_rate * self.slot_width * 1e-9


@dataclass(frozen=True)
class RangePoint:
    distance: float
    qber: float
    secure: bool


def expected_qber_at(budget: LinkBudget, distance: float) -> float:
    """QBER from dark counts at ``distance`` km.

    Darks fall evenly over the slots; one wrong-slot dark per correct-slot
    dark. The signal term is the per-pulse detection probability
    mu * eta * T(d).
    """
    signal = budget.mu * budget.detector_efficiency * fiber_transmission(distance, budget.loss_db_per_km)
    dark = budget.dark_per_slot
    total = signal + dark
    return dark / (2 * total) if total > 0 else 0.0


def range_projection(
    budget: LinkBudget,
    distances: Iterable[float],
    q_threshold: float | Crossing,
) -> list[RangePoint]:
    """Expected QBER and security verdict per distance.

    ``q_threshold`` is the maximum secure QBER for the operational contrast
    loss, e.g. ``max_secure_qber(0.084, grid)``.
    """
    if isinstance(q_threshold, Crossing):
        if q_threshold.q_star is None:
            limit = 0.5 if q_threshold.status == "secure_on_range" else -math.inf
        else:
            limit = q_threshold.q_star
    else:
        limit = float(q_threshold)
    out = []
    for d in distances:
        q = expected_qber_at(budget, float(d))
        out.append(RangePoint(float(d), q, q < limit))
    return out


def secure_range_km(budget: LinkBudget, q_threshold: float, d_max: float = 1000.0) -> float:
    """Distance at which the expected QBER reaches ``q_threshold``."""
    f = lambda d: expected_qber_at(budget, d) - q_threshold  # noqa: E731
    if f(0.0) >= 0:
        return 0.0
    if f(d_max) < 0:
        return math.inf
    return float(optimize.bisect(f, 0.0, d_max, xtol=1e-6))
