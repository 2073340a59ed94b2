"""Sweep drivers and fitters for the power, detuning and length studies.

The two fitters follow the scikit-learn estimator protocol so they compose
with ``clone``/``get_params`` tooling; ``fit_quadratic`` and ``fit_power_law``
are thin functional wrappers that return a :class:`FitResult`.
"""

from __future__ import annotations

import datetime as _dt
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.optimize import brentq
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted, column_or_1d

from ._validation import BoundaryMaximumError, StatisticalDegeneracyError
from .analytic import RatePoint, expected_counts, infer_mu1_mu2
from .config import config_hash
from .detection import pump_leakage_rate
from .device import pair_rate
from .montecarlo import CountsRecord, SimConfig, derive_seed, map_configs

AXES = ("power", "detuning", "length")


# ---------------------------------------------------------------- result types

@dataclass(frozen=True)
class DerivedMetrics:
    car: float
    car_err: float
    coinc_net: int
    mu1: float = math.nan
    mu2: float = math.nan

    @property
    def mu_ratio(self) -> float:
        return self.mu1 / self.mu2 if self.mu2 > 0 else math.nan

    @classmethod
    def from_record(cls, rec: CountsRecord, cfg: SimConfig, with_mu: bool = False) -> "DerivedMetrics":
        mu1 = mu2 = math.nan
        if with_mu:
            mu1, mu2 = infer_mu1_mu2(rec.s1_raw, rec.dark1, max(rec.coinc_net, 0), cfg.rate_point())
        return cls(car=rec.car, car_err=rec.car_err, coinc_net=rec.coinc_net, mu1=mu1, mu2=mu2)


@dataclass(frozen=True)
class SweepResult:
    """Ordered sweep points. ``metadata`` holds the config hash, seed and a timestamp."""

    axis: str
    points: list  # (axis value, CountsRecord, DerivedMetrics)
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"axis must be one of {AXES}")
        object.__setattr__(self, "points", sorted(self.points, key=lambda p: p[0]))

    @property
    def values(self) -> np.ndarray:
        return np.array([p[0] for p in self.points], dtype=float)

    def column(self, name: str) -> np.ndarray:
        """A :class:`CountsRecord` or :class:`DerivedMetrics` attribute across points."""
        out = []
        for _, rec, met in self.points:
            out.append(getattr(met, name) if hasattr(met, name) else getattr(rec, name))
        return np.array(out, dtype=float)


@dataclass(frozen=True)
class FitResult:
    model: str
    params: dict
    exponent: float
    residual_norm: float
    cov_diag: tuple
    onset: float = math.nan


def _metadata(cfg: SimConfig) -> dict:
    return {
        "config_hash": config_hash(cfg),
        "seed": cfg.seed,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }


def _as_1d(X) -> np.ndarray:
    x = np.asarray(X, dtype=float)
    return column_or_1d(x[:, 0] if x.ndim == 2 else x)


def _xy(X, y):
    x = _as_1d(X)
    y = column_or_1d(np.asarray(y, dtype=float))
    if x.shape != y.shape:
        raise ValueError("X and y have different lengths")
    return x, y


# ---------------------------------------------------------------- fitters

class QuadraticFit(RegressorMixin, BaseEstimator):
    """Least-squares ``C = a P**2`` with a deviation-onset estimate.

    Parameters
    ----------
    drop : float
        Fractional shortfall that defines the onset.
    weighted : bool
        Weight residuals by ``1 / max(C, 1)`` (Poissonian variance).

    Attributes
    ----------
    amplitude_ : float
        Fit over all points.
    onset_amplitude_ : float
        Reference amplitude fitted on the points below half the onset power
        (the low-power half of the quadratic regime), found by fixed-point
        iteration starting from the lower half of the grid.
    onset_power_ : float
        Power where the data starts to stay ``drop`` below the reference fit,
        linearly interpolated between grid points; NaN if it never does.
    """

    def __init__(self, drop: float = 0.1, weighted: bool = False):
        self.drop = drop
        self.weighted = weighted

    def _amplitude(self, p, c):
        w = 1.0 / np.maximum(c, 1.0) if self.weighted else np.ones_like(c)
        sxx = float(np.sum(w * p**4))
        a = float(np.sum(w * p**2 * c) / sxx)
        return a, w, sxx

    def fit(self, X, y):
        p, c = _xy(X, y)
        if p.size < 2:
            raise ValueError("quadratic fit needs at least 2 points")
        if np.any(p <= 0):
            raise ValueError("powers must be > 0")
        order = np.argsort(p)
        p, c = p[order], c[order]
        a, w, sxx = self._amplitude(p, c)
        resid = c - a * p**2
        self.amplitude_ = a
        self.residual_norm_ = float(np.sqrt(np.sum(w * resid**2)))
        dof = p.size - 1
        self.amplitude_var_ = float(np.sum(w * resid**2) / dof / sxx) if dof > 0 else math.nan
        self.onset_amplitude_, self.onset_power_ = self._onset(p, c)
        return self

    def _onset(self, p, c, max_iter: int = 50):
        # Reference fit on the low-power half of the quadratic regime: points
        # below half the onset, iterated to a fixed point.
        n_ref = max(2, math.ceil(p.size / 2))
        seen = set()
        for _ in range(max_iter):
            a, _, _ = self._amplitude(p[:n_ref], c[:n_ref])
            onset = _onset(p, c / (a * p**2), 1.0 - self.drop)
            if math.isnan(onset):
                return a, onset
            nxt = max(2, int(np.searchsorted(p, onset / 2.0, side="right")))
            if nxt == n_ref or nxt in seen:
                return a, onset
            seen.add(n_ref)
            n_ref = nxt
        return a, onset

    def predict(self, X):
        check_is_fitted(self, "amplitude_")
        return self.amplitude_ * _as_1d(X) ** 2


def _onset(p: np.ndarray, ratio: np.ndarray, level: float) -> float:
    """Start of the final run of ``ratio < level``, interpolated to the crossing."""
    below = ratio < level
    if not below[-1]:
        return math.nan
    k = len(below) - 1
    while k > 0 and below[k - 1]:
        k -= 1
    if k == 0:
        return float(p[0])
    r0, r1 = ratio[k - 1], ratio[k]
    return float(p[k - 1] + (r0 - level) / (r0 - r1) * (p[k] - p[k - 1]))


class PowerLawFit(RegressorMixin, BaseEstimator):
    """Straight-line fit in log-log space: ``y = prefactor * x**exponent``."""

    def fit(self, X, y):
        x, v = _xy(X, y)
        if x.size < 2:
            raise ValueError("power-law fit needs at least 2 points")
        if np.any(x <= 0) or np.any(v <= 0):
            raise ValueError("power-law fit needs positive values")
        lx, lv = np.log(x), np.log(v)
        dx = lx - lx.mean()
        sxx = float(dx @ dx)
        if sxx == 0:
            raise ValueError("all x values are equal")
        slope = float(dx @ (lv - lv.mean()) / sxx)
        icept = float(lv.mean() - slope * lx.mean())
        resid = lv - (icept + slope * lx)
        rss = float(resid @ resid)
        dof = x.size - 2
        s2 = rss / dof if dof > 0 else math.nan
        self.exponent_ = slope
        self.prefactor_ = math.exp(icept)
        self.residual_norm_ = math.sqrt(rss)
        self.cov_diag_ = (s2 * (1.0 / x.size + lx.mean() ** 2 / sxx), s2 / sxx)
        return self

    def predict(self, X):
        check_is_fitted(self, "exponent_")
        return self.prefactor_ * _as_1d(X) ** self.exponent_


def fit_quadratic(points: Sequence[tuple[float, float]], drop: float = 0.1,
                  weighted: bool = False) -> FitResult:
    """Fit ``C = a P**2`` to ``(P, C)`` pairs and locate the deviation onset."""
    if len(points) < 2:
        raise ValueError("quadratic fit needs at least 2 points")
    p, c = zip(*points)
    est = QuadraticFit(drop=drop, weighted=weighted).fit(p, c)
    return FitResult(model="quadratic", params={"amplitude": est.amplitude_,
                                                "onset_amplitude": est.onset_amplitude_},
                     exponent=2.0, residual_norm=est.residual_norm_,
                     cov_diag=(est.amplitude_var_,), onset=est.onset_power_)


def fit_power_law(points: Sequence[tuple[float, float]]) -> FitResult:
    """Fit ``y = A x**k`` to ``(x, y)`` pairs by least squares on logarithms."""
    if len(points) < 2:
        raise ValueError("power-law fit needs at least 2 points")
    x, v = zip(*points)
    est = PowerLawFit().fit(x, v)
    return FitResult(model="power-law", params={"prefactor": est.prefactor_,
                                                "exponent": est.exponent_},
                     exponent=est.exponent_, residual_norm=est.residual_norm_,
                     cov_diag=est.cov_diag_)


# ---------------------------------------------------------------- sweeps

def _run(cfgs: Sequence[SimConfig], n_jobs: int) -> list[CountsRecord]:
    seeded = [c.with_seed(derive_seed(c.seed, i)) for i, c in enumerate(cfgs)]
    return map_configs(seeded, n_jobs=n_jobs)


def _sweep(axis, values, cfgs, base, n_jobs, with_mu=False) -> SweepResult:
    recs = _run(cfgs, n_jobs)
    pts = [(float(v), r, DerivedMetrics.from_record(r, c, with_mu)) for v, r, c in zip(values, recs, cfgs)]
    return SweepResult(axis=axis, points=pts, metadata=_metadata(base))


def power_sweep(cfg: SimConfig, powers: Sequence[float], n_jobs: int = 1) -> SweepResult:
    return _sweep("power", powers, [cfg.with_power(p) for p in powers], cfg, n_jobs)


def detuning_sweep(cfg: SimConfig, detunings: Sequence[float], n_jobs: int = 1) -> SweepResult:
    """Monte Carlo at each detuning (Hz); every detuning must lie within the filter reach."""
    return _sweep("detuning", detunings, [cfg.with_detuning(d) for d in detunings], cfg, n_jobs)


def length_sweep(cfgs: Sequence[SimConfig], power: float | None = None,
                 n_jobs: int = 1) -> SweepResult:
    """One run per device config, optionally all at the same peak power."""
    if power is not None:
        cfgs = [c.with_power(power) for c in cfgs]
    lengths = [c.waveguide.length_m for c in cfgs]
    return _sweep("length", lengths, cfgs, cfgs[0], n_jobs)


def mu_ratio_experiment(cfg: SimConfig, powers: Sequence[float], n_jobs: int = 1) -> SweepResult:
    """``mu1 / mu2`` per power; ``metadata`` gains ``p_min`` and ``ratio_min``."""
    if len(powers) < 4:
        raise ValueError("mu_ratio_experiment needs at least 4 powers")
    res = _sweep("power", powers, [cfg.with_power(p) for p in powers], cfg, n_jobs, with_mu=True)
    ratios = res.column("mu_ratio")
    if np.all(np.isnan(ratios)):
        raise StatisticalDegeneracyError("no net coincidences at any power; increase gates_total")
    i = int(np.nanargmin(ratios))
    res.metadata.update(p_min=float(res.values[i]), ratio_min=float(ratios[i]),
                        interior_minimum=0 < i < len(ratios) - 1)
    return res


@dataclass(frozen=True)
class MaxCar:
    p_opt: float
    car_max: float
    record: CountsRecord
    sweep: SweepResult


def find_max_car(cfg: SimConfig, power_grid: Sequence[float], n_jobs: int = 1) -> MaxCar:
    """Grid argmax of the Monte Carlo CAR.

    Raises
    ------
    BoundaryMaximumError
        The largest CAR sits on the first or last grid point.
    StatisticalDegeneracyError
        Some grid point has no accidentals.
    """
    if len(power_grid) < 3:
        raise ValueError("find_max_car needs at least 3 grid points")
    res = power_sweep(cfg, power_grid, n_jobs)
    car = res.column("car")
    if np.any(np.isnan(car)):
        bad = res.values[np.isnan(car)]
        raise StatisticalDegeneracyError(
            f"zero accidentals at P = {bad.tolist()} W; increase gates_total")
    i = int(np.argmax(car))
    if i in (0, len(car) - 1):
        raise BoundaryMaximumError(
            f"CAR maximum at grid boundary P = {res.values[i]:g} W; widen the power grid")
    return MaxCar(p_opt=float(res.values[i]), car_max=float(car[i]),
                  record=res.points[i][1], sweep=res)


# ---------------------------------------------------------------- analytic helpers

def analytic_point(cfg: SimConfig, power: float | None = None, detuning_hz: float | None = None,
                   leakage: bool = True) -> RatePoint:
    """RatePoint at a power and detuning, bypassing the filter-reach check."""
    cfg = cfg if power is None else cfg.with_power(power)
    pt = cfg.rate_point()
    if detuning_hz is not None:
        pt = replace(pt, mu=pair_rate(cfg.pump, cfg.waveguide, detuning_hz).mu_pairs_per_pulse)
    if not leakage:
        pt = replace(pt, leak_s=0.0, leak_i=0.0)
    elif detuning_hz is not None:
        p = cfg.pump.peak_power_w
        pt = replace(pt, leak_s=pump_leakage_rate(p, cfg.signal_ch, detuning_hz),
                     leak_i=pump_leakage_rate(p, cfg.idler_ch, detuning_hz))
    return pt


def coinc_net_half_max(cfg: SimConfig, power: float = 0.01) -> float:
    """Detuning (Hz) where the analytic net coincidence rate halves, leakage disabled."""
    def level(df):
        return expected_counts(analytic_point(cfg, power, df, leakage=False)).coinc_net

    peak = level(0.0)
    if peak <= 0:
        raise StatisticalDegeneracyError("no net coincidences at zero detuning")
    hi = 1e11
    while level(hi) > 0.5 * peak:
        hi *= 1.5
        if hi > 1e15:
            raise ValueError("coincidences never halve; is beta2 zero?")
    return brentq(lambda df: level(df) - 0.5 * peak, 0.0, hi, xtol=1.0, rtol=1e-12)


def half_max_crossing(x: Sequence[float], y: Sequence[float]) -> float:
    """First ``x`` where ``y`` falls to half its first value, linearly interpolated."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    half = 0.5 * y[0]
    below = np.flatnonzero(y <= half)
    if below.size == 0:
        return math.nan
    k = int(below[0])
    if k == 0:
        return float(x[0])
    return float(x[k - 1] + (y[k - 1] - half) / (y[k - 1] - y[k]) * (x[k] - x[k - 1]))
