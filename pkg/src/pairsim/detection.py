"""Collection channels, pump leakage and gated single-photon detectors."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from ._validation import require, require_finite, require_probability
from .device import DB_PER_NEPER

FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))
AWG_REACH_HZ = 0.7e12
ROLES = ("signal", "idler")
JITTER_MODELS = ("gaussian", "uniform")
ACCIDENTAL_MODES = ("delayed-gate", "next-trigger")


@dataclass(frozen=True)
class FilterStage:
    """Super-Gaussian passband of one filter in a collection arm.

    The stage rejects light at offset ``df`` from its center by
    ``A = 10 log10(e) ln2 (2 df / fwhm)**(2 order)`` dB, softly capped at
    ``isolation_db`` so real filters do not reject infinitely.
    """

    name: str = "awg-bpf"
    center_offset_hz: float = 0.0
    fwhm_hz: float = 0.5e12
    order: int = 2
    isolation_db: float = 30.0

    def __post_init__(self):
        require_finite(self.center_offset_hz, "center_offset_hz")
        require_finite(self.fwhm_hz, "fwhm_hz")
        require(self.fwhm_hz > 0, "fwhm_hz", "must be > 0")
        require(isinstance(self.order, int) and self.order >= 1, "order",
                "must be an integer >= 1")
        require(isinstance(self.isolation_db, (int, float)) and self.isolation_db > 0,
                "isolation_db", "must be > 0 (inf for an ideal filter)")

    def suppression_db(self, pump_offset_hz):
        """Rejection (dB) of light ``pump_offset_hz`` away from the channel center."""
        df = np.abs(np.asarray(pump_offset_hz, dtype=float) + self.center_offset_hz)
        raw = DB_PER_NEPER * math.log(2.0) * (2.0 * df / self.fwhm_hz) ** (2 * self.order)
        if math.isinf(self.isolation_db):
            return raw
        return self.isolation_db * -np.expm1(-raw / self.isolation_db)


@dataclass(frozen=True)
class ChannelSpec:
    """One collection arm between the waveguide output and its detector.

    ``channel_loss_db`` is the full budget (output facet, filters, detector
    efficiency). ``leak_coeff_per_w`` converts coupled pump peak power into
    leaked photons per gate before any suppression.
    """

    role: str = "signal"
    channel_loss_db: float = 22.0
    detuning_hz: float = 0.7e12
    fbg_suppression_db: float = 12.0
    rolloff: tuple[FilterStage, ...] = field(default_factory=lambda: (FilterStage(),))
    leak_coeff_per_w: float = 0.28

    def __post_init__(self):
        require(self.role in ROLES, "role", f"must be one of {ROLES}, got {self.role!r}")
        require_finite(self.channel_loss_db, "channel_loss_db")
        require(self.channel_loss_db >= 0, "channel_loss_db", "must be >= 0")
        require_finite(self.detuning_hz, "detuning_hz")
        require(abs(self.detuning_hz) <= AWG_REACH_HZ * (1 + 1e-12), "detuning_hz",
                f"|detuning| must be <= {AWG_REACH_HZ:g} Hz (filter reach)")
        require_finite(self.fbg_suppression_db, "fbg_suppression_db")
        require(self.fbg_suppression_db >= 0, "fbg_suppression_db", "must be >= 0")
        require_finite(self.leak_coeff_per_w, "leak_coeff_per_w")
        require(self.leak_coeff_per_w >= 0, "leak_coeff_per_w", "must be >= 0")
        object.__setattr__(self, "rolloff", tuple(self.rolloff))


@dataclass(frozen=True)
class DetectorSpec:
    """Gated single-photon detector.

    ``afterpulse_prob`` is the probability that a detection triggers a click in
    the next gate; the trigger probability shrinks by ``afterpulse_decay`` per
    further gate.
    """

    dark_prob_per_gate: float = 2e-5
    effective_gate_s: float = 0.5e-9
    nominal_gate_s: float = 2.5e-9
    jitter_fwhm_s: float = 0.7e-9
    afterpulse_prob: float = 0.008
    afterpulse_decay: float = 0.5
    jitter_model: str = "gaussian"

    def __post_init__(self):
        require_probability(self.dark_prob_per_gate, "dark_prob_per_gate", upper_open=True)
        for name in ("effective_gate_s", "nominal_gate_s", "jitter_fwhm_s"):
            require_finite(getattr(self, name), name)
        require(self.effective_gate_s > 0, "effective_gate_s", "must be > 0")
        require(self.effective_gate_s <= self.nominal_gate_s, "effective_gate_s",
                "must be <= nominal_gate_s")
        require(self.jitter_fwhm_s >= 0, "jitter_fwhm_s", "must be >= 0")
        require_probability(self.afterpulse_prob, "afterpulse_prob")
        require_probability(self.afterpulse_decay, "afterpulse_decay", upper_open=True)
        require(self.jitter_model in JITTER_MODELS, "jitter_model",
                f"must be one of {JITTER_MODELS}")


@dataclass(frozen=True)
class GatingProtocol:
    """Trigger scheme: SPD1 gated on alternate laser pulses, SPD2 cascaded from SPD1."""

    laser_rate_hz: float = 1e7
    spd1_rate_hz: float = 5e6
    accidental_mode: str = "delayed-gate"
    gates_total: int = 9_000_000_000

    def __post_init__(self):
        require_finite(self.laser_rate_hz, "laser_rate_hz")
        require_finite(self.spd1_rate_hz, "spd1_rate_hz")
        require(self.laser_rate_hz > 0, "laser_rate_hz", "must be > 0")
        require(0 < self.spd1_rate_hz <= self.laser_rate_hz, "spd1_rate_hz",
                "must lie in (0, laser_rate_hz]")
        require(self.accidental_mode in ACCIDENTAL_MODES, "accidental_mode",
                f"must be one of {ACCIDENTAL_MODES}")
        gates = self.gates_total
        require(isinstance(gates, (int, float)) and math.isfinite(gates) and gates == int(gates),
                "gates_total", "must be a whole number")
        require(int(gates) >= 1, "gates_total", "must be >= 1")
        object.__setattr__(self, "gates_total", int(gates))

    @property
    def integration_time_s(self) -> float:
        return self.gates_total / self.spd1_rate_hz


def channel_transmission(ch: ChannelSpec) -> float:
    """Power transmission ``10**(-loss/10)`` of the whole arm."""
    return 10.0 ** (-ch.channel_loss_db / 10.0)


def total_suppression_db(ch: ChannelSpec, detuning_hz=None):
    """FBG notch plus every roll-off stage, evaluated at the pump offset."""
    df = ch.detuning_hz if detuning_hz is None else detuning_hz
    total = ch.fbg_suppression_db + np.zeros_like(np.asarray(df, dtype=float))
    for stage in ch.rolloff:
        total = total + stage.suppression_db(df)
    return float(total) if np.ndim(total) == 0 else total


def pump_leakage_rate(p_peak, ch: ChannelSpec, detuning_hz=None):
    """Mean leaked pump photons per gate, linear in ``p_peak``."""
    p = np.asarray(p_peak, dtype=float)
    out = ch.leak_coeff_per_w * p * 10.0 ** (-np.asarray(total_suppression_db(ch, detuning_hz)) / 10.0)
    return float(out) if np.ndim(out) == 0 else out


def gate_overlap_probability(det: DetectorSpec) -> float:
    """Probability that a photon at the nominal gate center falls inside the jittered gate.

    Gaussian model: ``2 Phi(W / 2 sigma) - 1`` with ``sigma = FWHM / 2.355``.
    Uniform model: ``min(1, W / FWHM)`` for a flat offset distribution of full width FWHM.
    """
    w, j = det.effective_gate_s, det.jitter_fwhm_s
    if det.jitter_model == "uniform":
        return 1.0 if j <= w else w / j
    r = j / w
    if r < 1e-3:
        return 1.0  # erf argument > 270: exactly 1 in double precision, and avoids overflow
    return float(erf(FWHM_PER_SIGMA / (2.0 * math.sqrt(2.0) * r)))


def click_probability(mean_photons, det: DetectorSpec, prior_detection=False, p_j=None):
    """Closed-form click probability of one gate.

    ``1 - (1 - p_photon)(1 - d)(1 - p_ap [prior])`` with
    ``p_photon = 1 - exp(-mean_photons p_j)``.
    """
    pj = gate_overlap_probability(det) if p_j is None else p_j
    mean = np.asarray(mean_photons, dtype=float)
    miss = np.exp(-mean * pj) * (1.0 - det.dark_prob_per_gate)
    miss = miss * (1.0 - det.afterpulse_prob * np.asarray(prior_detection, dtype=float))
    out = 1.0 - miss
    return float(out) if np.ndim(out) == 0 else out


def detect(mean_photons, det: DetectorSpec, prior_detection, rng_draw):
    """Click decisions for gates given uniform draws in [0, 1).

    Deterministic in ``rng_draw``: a gate clicks when its draw is below the
    closed-form click probability.
    """
    if np.any(np.asarray(mean_photons) < 0):
        raise ValueError("mean_photons must be >= 0")
    p = click_probability(mean_photons, det, prior_detection)
    out = np.asarray(rng_draw) < p
    return bool(out) if out.ndim == 0 else out
