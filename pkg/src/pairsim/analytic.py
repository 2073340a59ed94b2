"""Closed-form expected tallies of the gated coincidence experiment.

All rates are per SPD1 gate. For a pair-number distribution with probability
generating function ``G`` and per-photon detection probabilities
``a = eta_s p_j1 s`` and ``b = eta_i p_j2 s`` (``s`` the nonlinear-absorption
survival), the no-click probabilities factor as

    P(no SPD1 click) = G(1 - a) exp(-leak_s) (1 - d_s)
    P(no SPD2 click) = G(1 - b) exp(-leak_i) (1 - d_i)
    P(neither)       = G((1 - a)(1 - b)) exp(-leak_s - leak_i) (1 - d_s)(1 - d_i)

which gives exact singles and same-pulse coincidences. Accidentals are the
product of singles, because SPD2 then looks at an independent pulse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._validation import require, require_finite, require_probability

PAIR_STATISTICS = ("poisson", "thermal")


@dataclass(frozen=True)
class RatePoint:
    """Operating point of the analytic model.

    ``R`` is the SPD1 trigger rate in Hz and ``t`` the integration time in seconds.
    """

    mu: float
    eta_s: float
    eta_i: float
    d_s: float = 0.0
    d_i: float = 0.0
    leak_s: float = 0.0
    leak_i: float = 0.0
    p_j1: float = 1.0
    p_j2: float = 1.0
    R: float = 5e6
    t: float = 1800.0
    survival: float = 1.0
    pair_statistics: str = "poisson"

    def __post_init__(self):
        for name in ("eta_s", "eta_i", "d_s", "d_i", "p_j1", "p_j2", "survival"):
            require_probability(getattr(self, name), name)
        for name in ("mu", "leak_s", "leak_i"):
            require_finite(getattr(self, name), name)
            require(getattr(self, name) >= 0, name, "must be >= 0")
        for name in ("R", "t"):
            require_finite(getattr(self, name), name)
            require(getattr(self, name) > 0, name, "must be > 0")
        require(self.pair_statistics in PAIR_STATISTICS, "pair_statistics",
                f"must be one of {PAIR_STATISTICS}")

    @property
    def detect_s(self) -> float:
        return self.eta_s * self.p_j1 * self.survival

    @property
    def detect_i(self) -> float:
        return self.eta_i * self.p_j2 * self.survival


@dataclass(frozen=True)
class ExpectedCounts:
    """Per-gate probabilities. ``car`` is NaN when there are no accidentals."""

    singles_s: float
    singles_i: float
    coinc_raw: float
    accidental: float
    coinc_net: float
    car: float


def _no_click(mu: float, x: float, noise_free: float, stats: str) -> float:
    """``G(1 - x) * noise_free``."""
    if stats == "poisson":
        return math.exp(-mu * x) * noise_free
    return noise_free / (1.0 + mu * x)


def _click(mu: float, x: float, leak: float, dark: float, stats: str) -> float:
    """``1 - G(1 - x) exp(-leak)(1 - d)`` without cancellation at small rates."""
    if stats == "poisson":
        return -math.expm1(-mu * x - leak + math.log1p(-dark))
    c = -math.expm1(-leak + math.log1p(-dark))
    return 1.0 - (1.0 - c) / (1.0 + mu * x)


def _pair_excess(mu: float, a: float, b: float, stats: str) -> float:
    """``G((1-a)(1-b)) / (G(1-a) G(1-b)) - 1``, the same-pulse correlation factor."""
    if stats == "poisson":
        return math.expm1(mu * a * b)
    return mu * a * b * (1.0 + mu) / (1.0 + mu * (a + b - a * b))


def expected_counts(pt: RatePoint) -> ExpectedCounts:
    """Exact expected singles, coincidences and accidentals per SPD1 gate."""
    a, b = pt.detect_s, pt.detect_i
    stats = pt.pair_statistics
    s1 = _click(pt.mu, a, pt.leak_s, pt.d_s, stats)
    s2 = _click(pt.mu, b, pt.leak_i, pt.d_i, stats)
    true = (1.0 - s1) * (1.0 - s2) * _pair_excess(pt.mu, a, b, stats)
    acc = s1 * s2
    car = true / acc if acc > 0 else math.nan
    return ExpectedCounts(singles_s=s1, singles_i=s2, coinc_raw=true + acc,
                          accidental=acc, coinc_net=true, car=car)


def ideal_car(mu: float) -> float:
    """``1 / mu``, the CAR of a lossless, noise-free source."""
    if not mu > 0:
        raise ValueError(f"mu must be > 0, got {mu!r}")
    return 1.0 / mu


def infer_mu1_mu2(S_raw: float, D: float, C_net: float, pt: RatePoint) -> tuple[float, float]:
    """Pair rates inferred from signal singles and from net coincidences.

    ``mu1 = (S_raw - D) / (t eta_s R)`` and ``mu2 = C_net / (t eta_s eta_i R)``.
    Both use the channel transmissions only; detector jitter therefore lowers
    ``mu2`` more than ``mu1``.
    """
    if S_raw < D or D < 0 or C_net < 0:
        raise ValueError("need S_raw >= D >= 0 and C_net >= 0")
    scale = pt.t * pt.eta_s * pt.R
    if scale == 0 or pt.eta_i == 0:
        raise ValueError("t * eta * R is zero")
    return (S_raw - D) / scale, C_net / (scale * pt.eta_i)


def expected_tallies(pt: RatePoint) -> tuple[float, float, float]:
    """Expected ``(S_raw, D, C_net)`` counts over ``t`` seconds at trigger rate ``R``."""
    n = pt.t * pt.R
    ec = expected_counts(pt)
    return ec.singles_s * n, pt.d_s * n, ec.coinc_net * n


@dataclass(frozen=True)
class MuRatioCurve:
    powers: np.ndarray
    ratios: np.ndarray
    p_min: float
    ratio_min: float

    @property
    def interior_minimum(self) -> bool:
        i = int(np.argmin(self.ratios))
        return 0 < i < len(self.ratios) - 1


def mu_ratio_curve(points: Sequence[tuple[float, RatePoint]]) -> MuRatioCurve:
    """``mu1 / mu2`` from expected tallies at each ``(power, RatePoint)``."""
    if len(points) < 3:
        raise ValueError("mu_ratio_curve needs at least 3 points")
    points = sorted(points, key=lambda item: item[0])
    powers = np.array([p for p, _ in points], dtype=float)
    ratios = np.empty(len(points))
    for k, (_, pt) in enumerate(points):
        mu1, mu2 = infer_mu1_mu2(*expected_tallies(pt), pt)
        ratios[k] = mu1 / mu2 if mu2 > 0 else math.inf
    i = int(np.argmin(ratios))
    return MuRatioCurve(powers=powers, ratios=ratios, p_min=float(powers[i]),
                        ratio_min=float(ratios[i]))
