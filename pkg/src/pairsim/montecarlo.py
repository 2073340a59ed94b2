"""Seeded simulation of the cascaded-gate coincidence protocol.

SPD1 is gated on alternate laser pulses. Each SPD1 click opens SPD2 on the same
pulse (coincidence pass) or on an uncorrelated later pulse (accidental pass);
the two passes run back to back with independent streams, as in a lab
acquisition.

Two samplers produce the same statistics:

``"sparse"`` (default)
    Exact and event driven. SPD1 clicks without after-pulsing form a Bernoulli
    process, so their positions are drawn from geometric gaps. The pulse
    content behind each click is then drawn from the pair-number distribution
    conditioned on that outcome. Cost scales with the number of clicks, which
    makes half-hour acquisitions (~10^10 gates) cheap.
``"dense"``
    Draws every pulse with :func:`simulate_pulse` and applies the detectors
    photon by photon. Used to cross-check the sparse sampler on small runs.

After-pulsing is a cluster process: every click independently triggers a
click ``o`` gates later with probability ``p_ap * decay**(o - 1)``, and
triggered clicks trigger in turn.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy import stats

from ._validation import ConfigError, require
from .analytic import PAIR_STATISTICS, RatePoint, expected_counts
from .detection import (ChannelSpec, DetectorSpec, GatingProtocol, channel_transmission,
                        gate_overlap_probability, pump_leakage_rate)
from .device import PairRateBreakdown, PumpSpec, WaveguideSpec, pair_rate

MIN_GATES = 10_000
_MASK64 = (1 << 64) - 1
_CHUNK = 1 << 20
# expected SPD1 clicks per sparse block; bounds memory at a few hundred MB
_CLICK_BUDGET = 20_000_000


def splitmix64(x: int) -> int:
    """One splitmix64 step: add the golden gamma and apply the avalanche finalizer."""
    z = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(master: int, index: int) -> int:
    """Independent 64-bit seed for sweep point ``index``."""
    return splitmix64((master & _MASK64) ^ splitmix64(index & _MASK64))


@dataclass(frozen=True)
class SimConfig:
    """Everything needed to simulate one operating point."""

    waveguide: WaveguideSpec
    pump: PumpSpec
    signal_ch: ChannelSpec
    idler_ch: ChannelSpec
    spd1: DetectorSpec
    spd2: DetectorSpec
    protocol: GatingProtocol
    seed: int = 2012
    pair_statistics: str = "poisson"

    def __post_init__(self):
        require(self.signal_ch.role == "signal", "signal_ch.role", "must be 'signal'")
        require(self.idler_ch.role == "idler", "idler_ch.role", "must be 'idler'")
        require(math.isclose(abs(self.signal_ch.detuning_hz), abs(self.idler_ch.detuning_hz),
                             rel_tol=1e-12, abs_tol=1e-3),
                "idler_ch.detuning_hz", "must mirror signal_ch.detuning_hz")
        require(isinstance(self.seed, int) and 0 <= self.seed <= _MASK64, "seed",
                "must be an integer in [0, 2**64)")
        require(self.pair_statistics in PAIR_STATISTICS, "pair_statistics",
                f"must be one of {PAIR_STATISTICS}")
        require(self.protocol.gates_total >= MIN_GATES, "protocol.gates_total",
                f"must be >= {MIN_GATES} for a meaningful CAR")

    @property
    def detuning_hz(self) -> float:
        return abs(self.signal_ch.detuning_hz)

    def pair_rate(self) -> PairRateBreakdown:
        return pair_rate(self.pump, self.waveguide, self.detuning_hz)

    def rate_point(self) -> RatePoint:
        br = self.pair_rate()
        p = self.pump.peak_power_w
        return RatePoint(
            mu=br.mu_pairs_per_pulse,
            eta_s=channel_transmission(self.signal_ch),
            eta_i=channel_transmission(self.idler_ch),
            d_s=self.spd1.dark_prob_per_gate,
            d_i=self.spd2.dark_prob_per_gate,
            leak_s=pump_leakage_rate(p, self.signal_ch),
            leak_i=pump_leakage_rate(p, self.idler_ch),
            p_j1=gate_overlap_probability(self.spd1),
            p_j2=gate_overlap_probability(self.spd2),
            R=self.protocol.spd1_rate_hz,
            t=self.protocol.integration_time_s,
            survival=br.photon_survival,
            pair_statistics=self.pair_statistics,
        )

    def with_power(self, peak_power_w: float) -> "SimConfig":
        return replace(self, pump=replace(self.pump, peak_power_w=peak_power_w))

    def with_detuning(self, detuning_hz: float) -> "SimConfig":
        return replace(self, signal_ch=replace(self.signal_ch, detuning_hz=detuning_hz),
                       idler_ch=replace(self.idler_ch, detuning_hz=detuning_hz))

    def with_gates(self, gates_total: int) -> "SimConfig":
        return replace(self, protocol=replace(self.protocol, gates_total=int(gates_total)))

    def with_seed(self, seed: int) -> "SimConfig":
        return replace(self, seed=seed)

    def without_afterpulsing(self) -> "SimConfig":
        return replace(self, spd1=replace(self.spd1, afterpulse_prob=0.0),
                       spd2=replace(self.spd2, afterpulse_prob=0.0))


@dataclass(frozen=True)
class CountsRecord:
    """Tallies of one coincidence pass plus one accidental pass.

    ``s1_raw`` counts SPD1 clicks in the coincidence pass and ``dark1`` is its
    expected dark share. ``s2_raw`` counts SPD2 clicks in the accidental pass
    over ``s2_gates`` SPD2 gates, so ``s2_raw / s2_gates`` estimates the SPD2
    singles probability. ``car`` is NaN when ``accidental`` is zero.
    """

    gates: int
    s1_raw: int
    s2_raw: int
    s2_gates: int
    dark1: float
    dark2: float
    coinc_raw: int
    accidental: int
    coinc_net: int
    car: float
    car_err: float

    @classmethod
    def from_tallies(cls, *, gates, s1_raw, s2_raw, s2_gates, dark1, dark2, coinc_raw,
                     accidental) -> "CountsRecord":
        net = coinc_raw - accidental
        if accidental > 0:
            car = net / accidental
            car_err = (abs(car) * math.sqrt(1.0 / coinc_raw + 1.0 / accidental)
                       if coinc_raw > 0 else math.inf)
        else:
            car = car_err = math.nan
        return cls(gates=gates, s1_raw=s1_raw, s2_raw=s2_raw, s2_gates=s2_gates,
                   dark1=dark1, dark2=dark2, coinc_raw=coinc_raw, accidental=accidental,
                   coinc_net=net, car=car, car_err=car_err)

    @property
    def degenerate(self) -> bool:
        return not self.accidental > 0


@dataclass(frozen=True)
class PulseOutcome:
    """Per-pulse photon numbers reaching each detector (before gate overlap)."""

    n_pairs: np.ndarray
    n_signal: np.ndarray
    n_idler: np.ndarray
    leak_s: np.ndarray
    leak_i: np.ndarray


def _draw_pairs(rng: np.random.Generator, mu: float, size: int, statistics: str) -> np.ndarray:
    if mu == 0.0:
        return np.zeros(size, dtype=np.int64)
    if statistics == "poisson":
        return rng.poisson(mu, size)
    # geometric on {0, 1, ...} with mean mu
    return rng.geometric(1.0 / (1.0 + mu), size) - 1


def simulate_pulse(cfg: SimConfig, rng: np.random.Generator, size: int = 1) -> PulseOutcome:
    """Draw ``size`` independent pump pulses.

    Pairs are Poisson (or geometric) with the configured mean. Each signal and
    idler photon survives nonlinear absorption and its channel independently;
    leaked pump photons are Poisson in each channel.
    """
    pt = cfg.rate_point()
    n = _draw_pairs(rng, pt.mu, size, cfg.pair_statistics)
    n_s = rng.binomial(n, pt.eta_s * pt.survival)
    n_i = rng.binomial(n, pt.eta_i * pt.survival)
    return PulseOutcome(n_pairs=n, n_signal=n_s, n_idler=n_i,
                        leak_s=rng.poisson(pt.leak_s, size), leak_i=rng.poisson(pt.leak_i, size))


# ---------------------------------------------------------------- after-pulsing

class _AfterpulseKernel:
    """Samples the set of gate offsets that one click triggers."""

    def __init__(self, det: DetectorSpec, tol: float = 1e-13):
        p, r = det.afterpulse_prob, det.afterpulse_decay
        self.active = p > 0.0
        if not self.active:
            return
        k = 1 if r == 0.0 else max(1, 1 + int(math.ceil(math.log(tol / p) / math.log(r))))
        k = min(k, 100_000)
        probs = p * r ** np.arange(k)
        with np.errstate(divide="ignore"):
            log_keep = np.log1p(-probs)
        # log_surv[o] = log P(no trigger at offsets 1..o), o = 0..k
        self.log_surv = np.concatenate([[0.0], np.cumsum(log_keep)])
        self.k = k

    def offsets(self, rng: np.random.Generator, n_sources: int):
        """Return ``(source_index, offset)`` arrays for every triggered gate."""
        src = np.arange(n_sources)
        start = np.zeros(n_sources, dtype=np.int64)  # offsets > start are still open
        out_src, out_off = [], []
        neg = -self.log_surv
        while src.size:
            u = rng.random(src.size)
            with np.errstate(divide="ignore"):
                target = neg[start] - np.log1p(-u)
            # first offset o > start with -log_surv[o] > target
            o = np.searchsorted(neg, target, side="right")
            hit = o <= self.k
            src, o = src[hit], o[hit]
            out_src.append(src)
            out_off.append(o)
            start = o
            more = start < self.k
            src, start = src[more], start[more]
        if not out_src:
            return np.empty(0, np.int64), np.empty(0, np.int64)
        return np.concatenate(out_src), np.concatenate(out_off)


def _cascade(rng, kernel: _AfterpulseKernel, base_clicks: np.ndarray, gates: np.ndarray | None,
             n_gates: int) -> np.ndarray:
    """Add after-pulse clicks to sorted ``base_clicks``.

    ``gates`` lists the gate positions that exist (sorted); ``None`` means every
    position in ``[0, n_gates)``. Returns sorted click positions.
    """
    if not kernel.active:
        return base_clicks
    added = np.empty(0, dtype=np.int64)  # sorted after-pulse clicks so far
    fresh = base_clicks
    while fresh.size:
        src, off = kernel.offsets(rng, fresh.size)
        cand = np.unique(fresh[src] + off)
        cand = cand[cand < n_gates]
        if gates is not None:
            cand = cand[_member(cand, gates)]
        fresh = cand[~(_member(cand, base_clicks) | _member(cand, added))]
        if fresh.size:
            added = np.union1d(added, fresh)
    if not added.size:
        return base_clicks
    out = np.concatenate([base_clicks, added])
    out.sort(kind="stable")
    return out


def _member(x: np.ndarray, sorted_ref: np.ndarray) -> np.ndarray:
    if sorted_ref.size == 0:
        return np.zeros(x.shape, dtype=bool)
    i = np.searchsorted(sorted_ref, x)
    i[i == sorted_ref.size] = 0
    return sorted_ref[i] == x


# ---------------------------------------------------------------- sparse sampler

def _bernoulli_positions(rng: np.random.Generator, q: float, n: int) -> np.ndarray:
    """Sorted indices in ``[0, n)`` of successes of ``n`` Bernoulli(q) trials."""
    if q <= 0.0:
        return np.empty(0, dtype=np.int64)
    if q >= 1.0:
        return np.arange(n, dtype=np.int64)
    parts, last = [], -1
    while True:
        remaining = n - 1 - last
        size = int(remaining * q + 6.0 * math.sqrt(remaining * q) + 64)
        pos = last + np.cumsum(rng.geometric(q, size))
        parts.append(pos)
        last = int(pos[-1])
        if last >= n:
            break
    pos = np.concatenate(parts)
    return pos[pos < n]


class _PairModel:
    """Truncated pair-number pmf with the conditional laws the sparse sampler needs."""

    def __init__(self, pt: RatePoint, tail: float = 1e-17):
        mu = pt.mu
        if mu == 0.0:
            n = np.zeros(1, dtype=np.int64)
            pmf = np.ones(1)
        elif pt.pair_statistics == "poisson":
            n_max = int(mu + 12.0 * math.sqrt(mu) + 25.0)
            n = np.arange(n_max + 1)
            pmf = stats.poisson.pmf(n, mu)
        else:
            p = 1.0 / (1.0 + mu)
            n_max = int(math.log(tail) / math.log1p(-p)) + 2
            n = np.arange(n_max + 1)
            pmf = stats.geom.pmf(n + 1, p)
        self.n = n
        self.pmf = pmf / pmf.sum()
        a, b = pt.detect_s, pt.detect_i
        self.miss_s = (1.0 - a) ** n
        self.miss_i = (1.0 - b) ** n
        self.noise_free_s = math.exp(-pt.leak_s) * (1.0 - pt.d_s)
        self.noise_free_i = math.exp(-pt.leak_i) * (1.0 - pt.d_i)

    def spd1_base_prob(self) -> float:
        return float(1.0 - self.pmf @ self.miss_s * self.noise_free_s)

    def spd2_base_prob(self) -> float:
        return float(1.0 - self.pmf @ self.miss_i * self.noise_free_i)

    def _cdf(self, fired: bool) -> np.ndarray:
        if fired:
            w = self.pmf * (1.0 - self.miss_s * self.noise_free_s)
        else:
            w = self.pmf * self.miss_s
        c = np.cumsum(w)
        return c / c[-1] if c[-1] > 0 else np.ones_like(c)

    def spd2_prob_given_spd1(self, rng, fired: np.ndarray) -> np.ndarray:
        """SPD2 base click probability on a pulse whose SPD1 base outcome is ``fired``."""
        n = np.empty(fired.size, dtype=np.int64)
        for flag in (True, False):
            sel = fired == flag
            if sel.any():
                u = rng.random(int(sel.sum()))
                idx = np.searchsorted(self._cdf(flag), u, side="right")
                n[sel] = self.n[np.minimum(idx, self.n.size - 1)]
        return 1.0 - self.miss_i[n] * self.noise_free_i


def _spd1_clicks_sparse(rng, model: _PairModel, kernel: _AfterpulseKernel, n_gates: int):
    base = _bernoulli_positions(rng, model.spd1_base_prob(), n_gates)
    clicks = _cascade(rng, kernel, base, None, n_gates)
    return base, clicks


def _spd2_tally(rng, kernel: _AfterpulseKernel, gates: np.ndarray, p_base: np.ndarray) -> int:
    base = gates[rng.random(gates.size) < p_base]
    return int(_cascade(rng, kernel, base, gates, int(gates[-1]) + 1 if gates.size else 0).size)


def _run_sparse(cfg: SimConfig, rngs) -> dict:
    """Sparse tallies, in consecutive gate blocks sized so click arrays stay bounded.

    After-pulse cascades and next-trigger lookups stop at block edges; with
    blocks of at least ``_CLICK_BUDGET / p1`` gates the effect is far below
    Poisson noise, and low-rate runs use a single block.
    """
    pt = cfg.rate_point()
    model = _PairModel(pt)
    k1, k2 = _AfterpulseKernel(cfg.spd1), _AfterpulseKernel(cfg.spd2)
    n_gates = cfg.protocol.gates_total
    block = max(MIN_GATES, int(_CLICK_BUDGET / max(model.spd1_base_prob(), 1e-300)))
    total = dict.fromkeys(("s1_raw", "coinc_raw", "accidental", "s2_raw", "s2_gates"), 0)
    for start in range(0, n_gates, block):
        part = _sparse_block(cfg, model, k1, k2, min(block, n_gates - start), rngs)
        for key in total:
            total[key] += part[key]
    return total


def _sparse_block(cfg: SimConfig, model: _PairModel, k1, k2, n_gates: int, rngs) -> dict:
    rng_c, rng_a = rngs

    # coincidence pass: SPD2 on the same pulse
    base, clicks = _spd1_clicks_sparse(rng_c, model, k1, n_gates)
    fired = _member(clicks, base)
    p2 = model.spd2_prob_given_spd1(rng_c, fired)
    coinc = _spd2_tally(rng_c, k2, clicks, p2)
    s1 = int(clicks.size)

    # accidental pass: SPD2 on an uncorrelated pulse
    base_a, clicks_a = _spd1_clicks_sparse(rng_a, model, k1, n_gates)
    if cfg.protocol.accidental_mode == "delayed-gate":
        # odd laser pulse between SPD1 gates, never seen by SPD1
        p2a = np.full(clicks_a.size, model.spd2_base_prob())
    else:
        # next SPD1-gated pulse; its content is tied to SPD1's outcome there
        p2a = model.spd2_prob_given_spd1(rng_a, _member(clicks_a + 1, base_a))
    acc = _spd2_tally(rng_a, k2, clicks_a, p2a)
    return dict(s1_raw=s1, coinc_raw=coinc, accidental=acc, s2_raw=acc, s2_gates=int(clicks_a.size))


# ---------------------------------------------------------------- dense sampler

def _dense_fire(cfg: SimConfig, rng, pt: RatePoint, n_pulses: int):
    """Base click decisions of SPD1 and SPD2 for ``n_pulses`` consecutive pulses."""
    fire1 = np.empty(n_pulses, dtype=bool)
    fire2 = np.empty(n_pulses, dtype=bool)
    for start in range(0, n_pulses, _CHUNK):
        size = min(_CHUNK, n_pulses - start)
        out = simulate_pulse(cfg, rng, size)
        sig = rng.binomial(out.n_signal, pt.p_j1)
        idl = rng.binomial(out.n_idler, pt.p_j2)
        fire1[start:start + size] = (sig > 0) | (out.leak_s > 0) | (rng.random(size) < pt.d_s)
        fire2[start:start + size] = (idl > 0) | (out.leak_i > 0) | (rng.random(size) < pt.d_i)
    return fire1, fire2


def _dense_pass(cfg: SimConfig, rng, pt: RatePoint, k1, k2, same_pulse: bool):
    n_gates = cfg.protocol.gates_total
    next_trigger = cfg.protocol.accidental_mode == "next-trigger"
    fire1, fire2 = _dense_fire(cfg, rng, pt, n_gates + 1)
    base = np.flatnonzero(fire1[:n_gates])
    clicks = _cascade(rng, k1, base, None, n_gates)
    if same_pulse:
        spd2_fire = fire2[clicks]
    elif next_trigger:
        spd2_fire = fire2[clicks + 1]
    else:
        # odd pulses between SPD1 gates; SPD1 never looks at them
        _, odd = _dense_fire(cfg, rng, pt, n_gates)
        spd2_fire = odd[clicks]
    spd2 = _cascade(rng, k2, clicks[spd2_fire], clicks, n_gates)
    return int(clicks.size), int(spd2.size)


def _run_dense(cfg: SimConfig, rngs) -> dict:
    pt = cfg.rate_point()
    k1, k2 = _AfterpulseKernel(cfg.spd1), _AfterpulseKernel(cfg.spd2)
    s1, coinc = _dense_pass(cfg, rngs[0], pt, k1, k2, same_pulse=True)
    s1a, acc = _dense_pass(cfg, rngs[1], pt, k1, k2, same_pulse=False)
    return dict(s1_raw=s1, coinc_raw=coinc, accidental=acc, s2_raw=acc, s2_gates=s1a)


# ---------------------------------------------------------------- public drivers

def run_counting(cfg: SimConfig, method: str = "sparse") -> CountsRecord:
    """Simulate one coincidence pass and one accidental pass of ``gates_total`` SPD1 gates.

    A record with ``accidental == 0`` carries ``car = NaN``; callers that need
    a CAR should raise :class:`~pairsim.StatisticalDegeneracyError` and rerun
    with more gates.
    """
    if method not in ("sparse", "dense"):
        raise ConfigError(f"method: must be 'sparse' or 'dense', got {method!r}")
    rngs = [np.random.Generator(np.random.PCG64(s))
            for s in np.random.SeedSequence(cfg.seed).spawn(2)]
    tallies = (_run_sparse if method == "sparse" else _run_dense)(cfg, rngs)
    n = cfg.protocol.gates_total
    return CountsRecord.from_tallies(
        gates=n,
        dark1=cfg.spd1.dark_prob_per_gate * n,
        dark2=cfg.spd2.dark_prob_per_gate * tallies["s2_gates"],
        **tallies,
    )


def pool_records(records: Sequence[CountsRecord]) -> CountsRecord:
    """One record from independent acquisitions of the same operating point."""
    if not records:
        raise ValueError("pool_records needs at least one record")
    keys = ("gates", "s1_raw", "s2_raw", "s2_gates", "dark1", "dark2", "coinc_raw", "accidental")
    return CountsRecord.from_tallies(**{k: sum(getattr(r, k) for r in records) for k in keys})


def run_pooled(cfg: SimConfig, blocks: int, method: str = "sparse") -> CountsRecord:
    """``blocks`` acquisitions of ``gates_total`` gates each, with seeds derived from ``cfg.seed``.

    Memory stays that of one block, so very long acquisitions remain affordable.
    """
    if blocks < 1:
        raise ValueError("blocks must be >= 1")
    return pool_records([run_counting(cfg.with_seed(derive_seed(cfg.seed, i)), method)
                         for i in range(blocks)])


def expected_record(cfg: SimConfig) -> dict:
    """Analytic expectation of the tallies in a :class:`CountsRecord` (no after-pulsing)."""
    ec = expected_counts(cfg.rate_point())
    n = cfg.protocol.gates_total
    return dict(s1_raw=ec.singles_s * n, coinc_raw=ec.coinc_raw * n,
                accidental=ec.accidental * n, s2_gates=ec.singles_s * n, car=ec.car)


def estimate_car_curve(cfg: SimConfig, powers: Sequence[float], n_jobs: int = 1,
                       method: str = "sparse") -> list[tuple[float, CountsRecord]]:
    """Run :func:`run_counting` at each power with seeds derived from ``(cfg.seed, index)``.

    Results do not depend on ``n_jobs``.
    """
    powers = [float(p) for p in powers]
    if len(powers) < 2:
        raise ValueError("estimate_car_curve needs at least 2 powers")
    cfgs = [cfg.with_power(p).with_seed(derive_seed(cfg.seed, i)) for i, p in enumerate(powers)]
    return list(zip(powers, map_configs(cfgs, n_jobs=n_jobs, method=method)))


def map_configs(cfgs: Sequence[SimConfig], n_jobs: int = 1, method: str = "sparse"):
    """``run_counting`` over many configs, optionally in parallel processes."""
    if n_jobs == 1 or len(cfgs) < 2:
        return [run_counting(c, method) for c in cfgs]
    from joblib import Parallel, delayed
    return Parallel(n_jobs=n_jobs)(delayed(run_counting)(c, method) for c in cfgs)
