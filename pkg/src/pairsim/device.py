"""Pair generation in a slow-light photonic-crystal waveguide.

The mean number of signal/idler pairs per pump pulse at the waveguide output is

    mu = kappa_cal * (gamma_eff * p_eff * l_eff)**2 * phi

with the slow-light nonlinearity ``gamma_eff = gamma0 * (n_g / n_ref)**2``, the
loss-limited interaction length ``l_eff``, a saturable peak power ``p_eff`` that
stands in for two-photon absorption, and the sinc-squared phase-matching factor
``phi``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from ._validation import ConfigError, require, require_finite

DB_PER_NEPER = 10.0 * math.log10(math.e)

# Root of sinc(x)**2 = 1/2 on (0, pi).
SINC2_HALF_ARG = brentq(lambda x: (math.sin(x) / x) ** 2 - 0.5, 0.5, 2.5, xtol=1e-15)


@dataclass(frozen=True)
class WaveguideSpec:
    """Geometry, dispersion, nonlinearity and loss of one waveguide.

    Attributes
    ----------
    length_m : float
        Physical length of the slow-light section.
    group_index, reference_group_index : float
        Operating group index and the fast-light index at which ``gamma0`` is quoted.
    gamma0 : float
        Fast-light nonlinear parameter in 1/(W m).
    beta2 : float
        Group-velocity dispersion in s^2/m. Either sign is allowed.
    alpha_db_per_m : float
        Linear propagation loss.
    facet_loss_db : float
        Coupling loss per facet. Only used for reporting and loss inference.
    p_sat_w : float
        Saturation peak power of the nonlinear-loss map.
    kappa_cal : float
        Dimensionless pair-rate calibration constant.
    """

    length_m: float
    group_index: float = 30.0
    reference_group_index: float = 3.0
    gamma0: float = 5.0
    beta2: float = 1e-21
    alpha_db_per_m: float = 0.0
    facet_loss_db: float = 3.5
    p_sat_w: float = math.inf
    kappa_cal: float = 1.0

    def __post_init__(self):
        for name in ("length_m", "group_index", "reference_group_index", "gamma0",
                     "beta2", "alpha_db_per_m", "facet_loss_db", "kappa_cal"):
            require_finite(getattr(self, name), name)
        require(self.length_m > 0, "length_m", "must be > 0")
        require(self.reference_group_index >= 1, "reference_group_index", "must be >= 1")
        require(self.group_index >= self.reference_group_index, "group_index",
                "must be >= reference_group_index")
        require(self.gamma0 > 0, "gamma0", "must be > 0")
        require(self.alpha_db_per_m >= 0, "alpha_db_per_m", "must be >= 0")
        require(self.facet_loss_db >= 0, "facet_loss_db", "must be >= 0")
        require(isinstance(self.p_sat_w, (int, float)) and self.p_sat_w > 0,
                "p_sat_w", "must be > 0 (inf disables saturation)")
        require(self.kappa_cal > 0, "kappa_cal", "must be > 0")

    @property
    def alpha_np_per_m(self) -> float:
        return self.alpha_db_per_m / DB_PER_NEPER


@dataclass(frozen=True)
class PumpSpec:
    """Pulsed pump. ``peak_power_w`` is the coupled peak power inside the waveguide."""

    peak_power_w: float
    rep_rate_hz: float = 1e7
    wavelength_m: float = 1554.9e-9
    pulse_fwhm_s: float = 10e-12

    def __post_init__(self):
        for name in ("peak_power_w", "rep_rate_hz", "wavelength_m", "pulse_fwhm_s"):
            require_finite(getattr(self, name), name)
        require(self.peak_power_w >= 0, "peak_power_w", "must be >= 0")
        for name in ("rep_rate_hz", "wavelength_m", "pulse_fwhm_s"):
            require(getattr(self, name) > 0, name, "must be > 0")


@dataclass(frozen=True)
class PairRateBreakdown:
    mu_pairs_per_pulse: float
    gamma_eff: float
    l_eff_m: float
    phase_match_factor: float
    p_eff_w: float
    photon_survival: float = 1.0


def slow_light_enhancement(spec: WaveguideSpec) -> float:
    """Return ``(n_g / n_ref)**2``, the factor multiplying ``gamma0``."""
    return (spec.group_index / spec.reference_group_index) ** 2


def effective_gamma(spec: WaveguideSpec) -> float:
    return spec.gamma0 * slow_light_enhancement(spec)


def effective_length(spec: WaveguideSpec) -> float:
    """Loss-limited interaction length ``(1 - exp(-a L)) / a`` in meters."""
    x = spec.alpha_np_per_m * spec.length_m
    if x == 0.0:
        return spec.length_m
    # -expm1(-x) / x keeps precision for small and subnormal x
    return spec.length_m * (-math.expm1(-x) / x)


def nonlinear_effective_power(p_peak, spec: WaveguideSpec):
    """Saturable peak power ``P / (1 + P / p_sat)``.

    Works elementwise on arrays. ``p_sat_w = inf`` returns ``p_peak`` unchanged.
    """
    p = np.asarray(p_peak, dtype=float)
    if np.any(p < 0):
        raise ConfigError("peak_power_w: must be >= 0")
    out = p / (1.0 + p / spec.p_sat_w)
    return float(out) if out.ndim == 0 else out


def photon_survival(p_peak, spec: WaveguideSpec):
    """Probability that a generated signal or idler photon escapes nonlinear absorption.

    The photons share the pump's saturable loss, so the survival equals
    ``p_eff / p_peak = 1 / (1 + P / p_sat)``.
    """
    p = np.asarray(p_peak, dtype=float)
    out = 1.0 / (1.0 + p / spec.p_sat_w)
    return float(out) if out.ndim == 0 else out


def phase_mismatch(detuning_hz, p_eff, spec: WaveguideSpec):
    """``beta2 * (2 pi df)**2 + 2 gamma_eff p_eff`` in 1/m."""
    omega = 2.0 * math.pi * np.asarray(detuning_hz, dtype=float)
    return spec.beta2 * omega**2 + 2.0 * effective_gamma(spec) * np.asarray(p_eff, dtype=float)


def phase_matching_factor(detuning_hz, p_eff, spec: WaveguideSpec):
    """``sinc(dk L / 2)**2`` with ``sinc(x) = sin(x)/x``. Even in the detuning sign."""
    x = phase_mismatch(detuning_hz, p_eff, spec) * spec.length_m / 2.0
    out = np.sinc(x / math.pi) ** 2
    return float(out) if out.ndim == 0 else out


def pair_rate(pump: PumpSpec, spec: WaveguideSpec, detuning_hz: float) -> PairRateBreakdown:
    """Mean pairs per pulse at the waveguide output, with its ingredients."""
    gamma = effective_gamma(spec)
    l_eff = effective_length(spec)
    p_eff = nonlinear_effective_power(pump.peak_power_w, spec)
    phi = phase_matching_factor(detuning_hz, p_eff, spec)
    mu = spec.kappa_cal * (gamma * p_eff * l_eff) ** 2 * phi
    return PairRateBreakdown(
        mu_pairs_per_pulse=mu,
        gamma_eff=gamma,
        l_eff_m=l_eff,
        phase_match_factor=phi,
        p_eff_w=p_eff,
        photon_survival=photon_survival(pump.peak_power_w, spec),
    )


def infer_alpha(insertion_losses_db: Sequence[tuple[float, float]], facet_loss_db: float) -> float:
    """Propagation loss (dB/m) from insertion losses of several lengths.

    Least-squares slope of ``insertion - 2 * facet_loss_db`` against length.

    Raises
    ------
    ValueError
        Fewer than two entries or all lengths equal.
    """
    data = np.asarray(insertion_losses_db, dtype=float)
    if data.ndim != 2 or data.shape[0] < 2 or data.shape[1] != 2:
        raise ValueError("need at least two (length_m, loss_db) entries")
    lengths, losses = data[:, 0], data[:, 1] - 2.0 * facet_loss_db
    dl = lengths - lengths.mean()
    sxx = float(dl @ dl)
    if sxx <= 0.0:
        raise ValueError("slope undefined: all lengths are equal")
    return float(dl @ (losses - losses.mean()) / sxx)


def half_efficiency_detuning(spec: WaveguideSpec, p_eff: float = 0.0) -> float:
    """Smallest detuning (Hz) at which the phase-matching factor drops to 1/2.

    Returns 0 if the nonlinear phase alone already halves the efficiency and
    ``inf`` if the dispersion cannot reach the half point.
    """
    target = 2.0 * SINC2_HALF_ARG / spec.length_m
    dk0 = 2.0 * effective_gamma(spec) * p_eff
    if abs(dk0) >= target:
        return 0.0
    if spec.beta2 == 0.0:
        return math.inf
    roots = [(s * target - dk0) / spec.beta2 for s in (1.0, -1.0)]
    omega2 = min(r for r in roots if r > 0)
    return math.sqrt(omega2) / (2.0 * math.pi)


def calibrate_kappa(target_mu: float, pump: PumpSpec, spec: WaveguideSpec,
                    detuning_hz: float) -> float:
    """Return ``kappa_cal`` giving ``target_mu`` pairs per pulse at this operating point."""
    unit = pair_rate(pump, replace(spec, kappa_cal=1.0), detuning_hz).mu_pairs_per_pulse
    if unit <= 0:
        raise ValueError("operating point produces no pairs; cannot calibrate")
    return target_mu / unit


def calibrate_saturation_power(p_onset: float, drop: float = 0.1, exponent: float = 2.0) -> float:
    """Saturation power for which ``(p_eff / P)**exponent = 1 - drop`` at ``p_onset``.

    ``exponent=2`` matches the pair rate alone. The net coincidence rate also
    carries the photon survival squared, so it falls as ``exponent=4``.
    """
    if not 0.0 < drop < 1.0:
        raise ValueError("drop must lie in (0, 1)")
    return p_onset / ((1.0 - drop) ** (-1.0 / exponent) - 1.0)


def scaled_saturation_power(p_sat_ref: float, l_eff_ref: float, spec: WaveguideSpec) -> float:
    """Scale a saturation power measured on a reference device by ``l_eff_ref / l_eff``.

    Nonlinear absorption accumulates over the interaction length, so longer
    devices saturate at lower peak power.
    """
    return p_sat_ref * l_eff_ref / effective_length(spec)

