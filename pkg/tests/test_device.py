import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import example, given
from hypothesis import strategies as st

from pairsim import ConfigError
from pairsim.config import preset
from pairsim.device import (PumpSpec, WaveguideSpec, calibrate_kappa, calibrate_saturation_power,
                            effective_gamma, effective_length, half_efficiency_detuning,
                            infer_alpha, nonlinear_effective_power, pair_rate,
                            phase_matching_factor, photon_survival, scaled_saturation_power,
                            slow_light_enhancement)

# Frozen from independent evaluations (plain math + scipy root finding).
L_EFF_96UM_10P3_DB_MM = 85.85564755228107e-6
HALF_EFF_HZ = {96e-6: 856.9393231104989e9, 196e-6: 599.7325948990647e9,
               396e-6: 421.92775584196594e9}


def wg(**kw):
    return WaveguideSpec(**{"length_m": 96e-6, **kw})


# ---------------------------------------------------------------- slow light

def test_enhancement_is_one_at_reference_index():
    assert slow_light_enhancement(wg(group_index=3.0)) == 1.0


def test_enhancement_at_operating_index():
    assert slow_light_enhancement(wg()) == pytest.approx(100.0, rel=1e-15)
    assert effective_gamma(wg()) == pytest.approx(500.0, rel=1e-15)


def test_enhancement_ratio_across_group_index_band():
    r = slow_light_enhancement(wg(group_index=33)) / slow_light_enhancement(wg(group_index=27))
    assert r == pytest.approx((33 / 27) ** 2, rel=1e-14)
    assert r == pytest.approx(1.494, abs=5e-4)


# ---------------------------------------------------------------- effective length

def test_effective_length_lossless_is_exact():
    assert effective_length(wg()) == 96e-6


def test_effective_length_lossy():
    assert effective_length(wg(alpha_db_per_m=10.3e3)) == pytest.approx(L_EFF_96UM_10P3_DB_MM, rel=1e-12)
    assert effective_length(wg(alpha_db_per_m=10.3e3)) == pytest.approx(85.8e-6, rel=1e-3)


@given(L=st.floats(1e-6, 1e-2), alpha=st.floats(0.0, 1e5))
@example(L=0.0078125, alpha=2.2250738585e-313)
def test_effective_length_bounded_by_length(L, alpha):
    leff = effective_length(WaveguideSpec(length_m=L, alpha_db_per_m=alpha))
    assert 0 < leff <= L
    if alpha > 0 and alpha * L > 1e-6:
        assert leff < L


# ---------------------------------------------------------------- saturation

def test_effective_power_is_half_at_saturation():
    spec = wg(p_sat_w=4.5)
    assert nonlinear_effective_power(4.5, spec) == pytest.approx(2.25, rel=1e-15)
    assert photon_survival(4.5, spec) == pytest.approx(0.5, rel=1e-15)


def test_effective_power_unsaturated_by_default():
    assert nonlinear_effective_power(0.37, wg()) == 0.37
    assert photon_survival(0.37, wg()) == 1.0


def test_effective_power_arrays_and_negative():
    out = nonlinear_effective_power(np.array([0.0, 1.0]), wg(p_sat_w=1.0))
    np.testing.assert_allclose(out, [0.0, 0.5])
    with pytest.raises(ConfigError):
        nonlinear_effective_power(-1.0, wg())


@given(p=st.floats(0.0, 50.0), ps=st.floats(0.01, 100.0))
def test_effective_power_never_exceeds_peak(p, ps):
    assert nonlinear_effective_power(p, wg(p_sat_w=ps)) <= p


def test_saturation_power_for_squared_rate():
    # pair rate ~ p_eff**2 falls 10 % below P**2 at 0.5 W
    ps = calibrate_saturation_power(0.5, 0.1, exponent=2)
    assert ps == pytest.approx(9.243416490252558, rel=1e-12)
    assert (nonlinear_effective_power(0.5, wg(p_sat_w=ps)) / 0.5) ** 2 == pytest.approx(0.9, rel=1e-12)


def test_saturation_power_linear_reading():
    # 4.5 W is the value that makes p_eff itself 10 % low at 0.5 W
    assert calibrate_saturation_power(0.5, 0.1, exponent=1) == pytest.approx(4.5, rel=1e-12)


def test_saturation_power_rejects_bad_drop():
    with pytest.raises(ValueError):
        calibrate_saturation_power(0.5, 1.0)


def test_scaled_saturation_power_shrinks_with_length():
    ref = wg(alpha_db_per_m=1e4)
    long = replace(ref, length_m=396e-6)
    ps = scaled_saturation_power(10.0, effective_length(ref), long)
    assert ps == pytest.approx(10.0 * effective_length(ref) / effective_length(long), rel=1e-14)
    assert ps < 10.0


# ---------------------------------------------------------------- phase matching

def test_phase_matching_unity_at_origin():
    assert phase_matching_factor(0.0, 0.0, wg()) == 1.0


@given(df=st.floats(0, 2e12), p=st.floats(0, 1.0), L=st.sampled_from([96e-6, 196e-6, 396e-6]))
def test_phase_matching_even_and_bounded(df, p, L):
    spec = wg(length_m=L)
    a = phase_matching_factor(df, p, spec)
    assert 0.0 <= a <= 1.0
    assert phase_matching_factor(-df, p, spec) == a


@pytest.mark.parametrize("L", sorted(HALF_EFF_HZ))
def test_half_efficiency_detuning(L):
    spec = wg(length_m=L)
    df = half_efficiency_detuning(spec)
    assert df == pytest.approx(HALF_EFF_HZ[L], rel=1e-9)
    assert phase_matching_factor(df, 0.0, spec) == pytest.approx(0.5, rel=1e-12)


def test_half_efficiency_detuning_scales_as_inverse_root_length():
    r = half_efficiency_detuning(wg()) / half_efficiency_detuning(wg(length_m=396e-6))
    assert r == pytest.approx(math.sqrt(396 / 96), rel=0.01)
    assert half_efficiency_detuning(wg(length_m=396e-6)) == pytest.approx(0.42e12, rel=0.01)
    assert half_efficiency_detuning(wg()) == pytest.approx(0.86e12, rel=0.01)


def test_half_efficiency_detuning_edge_cases():
    assert half_efficiency_detuning(wg(beta2=0.0)) == math.inf
    assert half_efficiency_detuning(wg(), p_eff=1e6) == 0.0
    # anomalous dispersion compensates a small nonlinear phase
    spec = wg(beta2=-1e-21)
    df = half_efficiency_detuning(spec, p_eff=1.0)
    assert phase_matching_factor(df, 1.0, spec) == pytest.approx(0.5, rel=1e-9)


# ---------------------------------------------------------------- pair rate

def test_pair_rate_zero_power():
    assert pair_rate(PumpSpec(0.0), wg(), 0.0).mu_pairs_per_pulse == 0.0


def test_calibrated_anchor_point():
    cfg = preset("paper-196um")
    assert cfg.pair_rate().mu_pairs_per_pulse == pytest.approx(0.004, rel=1e-12)


def test_calibrate_kappa_hits_target():
    spec = wg(alpha_db_per_m=1e4, p_sat_w=5.0)
    k = calibrate_kappa(0.01, PumpSpec(0.2), spec, 0.3e12)
    mu = pair_rate(PumpSpec(0.2), replace(spec, kappa_cal=k), 0.3e12).mu_pairs_per_pulse
    assert mu == pytest.approx(0.01, rel=1e-12)


def test_doubling_power_quadruples_rate_below_saturation():
    # preset dispersion and loss, saturation far away
    spec = replace(preset("paper-96um").waveguide, p_sat_w=math.inf)
    r = (pair_rate(PumpSpec(0.1), spec, 0.7e12).mu_pairs_per_pulse
         / pair_rate(PumpSpec(0.05), spec, 0.7e12).mu_pairs_per_pulse)
    assert 3.96 <= r <= 4.00


def test_doubling_power_with_calibrated_saturation():
    # the saturable map alone predicts 4 (1 + P/ps)**2 / (1 + 2P/ps)**2
    spec = preset("paper-96um").waveguide
    r = (pair_rate(PumpSpec(0.1), spec, 0.0).mu_pairs_per_pulse
         / pair_rate(PumpSpec(0.05), spec, 0.0).mu_pairs_per_pulse)
    ps = spec.p_sat_w
    assert r == pytest.approx(4 * ((1 + 0.05 / ps) / (1 + 0.1 / ps)) ** 2, rel=2e-4)


def test_local_slope_matches_saturable_map():
    # d ln mu / d ln P = 2 / (1 + P/ps) when the phase term is negligible
    spec = preset("paper-96um").waveguide
    p, h = 0.05, 1e-6
    mu = lambda x: pair_rate(PumpSpec(x), spec, 0.0).mu_pairs_per_pulse
    slope = (math.log(mu(p * (1 + h))) - math.log(mu(p * (1 - h)))) / (math.log1p(h) - math.log1p(-h))
    assert slope == pytest.approx(2.0 / (1 + p / spec.p_sat_w), abs=1e-4)


def test_low_power_slope_is_two_deep_below_saturation():
    spec = preset("paper-96um").waveguide
    p = 1e-4 * spec.p_sat_w
    mu = lambda x: pair_rate(PumpSpec(x), spec, 0.0).mu_pairs_per_pulse
    slope = math.log(mu(1.01 * p) / mu(p)) / math.log(1.01)
    assert slope == pytest.approx(2.0, abs=1e-3)


@pytest.mark.xfail(strict=True, reason="saturable map gives local slope 2/(1+P/ps) = 1.98 at P = 0.01 ps")
def test_low_power_slope_is_two_at_one_percent_of_saturation():
    spec = preset("paper-96um").waveguide
    p = 0.01 * spec.p_sat_w
    mu = lambda x: pair_rate(PumpSpec(x), spec, 0.7e12).mu_pairs_per_pulse
    slope = math.log(mu(1.001 * p) / mu(p)) / math.log(1.001)
    assert slope == pytest.approx(2.0, abs=1e-3)


@given(p1=st.floats(1e-4, 1.0), p2=st.floats(1e-4, 1.0), L=st.sampled_from([96e-6, 196e-6, 396e-6]))
def test_rate_monotone_in_power_at_zero_detuning(p1, p2, L):
    # gamma p_sat L < pi/2 keeps the phase term inside its first half-lobe
    spec = WaveguideSpec(length_m=L, p_sat_w=2.0, alpha_db_per_m=1e4)
    lo, hi = sorted((p1, p2))
    mu = lambda x: pair_rate(PumpSpec(x), spec, 0.0).mu_pairs_per_pulse
    assert mu(lo) <= mu(hi)
    assert mu(lo) >= 0.0


def test_group_index_interchange_with_kappa_at_low_power():
    # kappa (n_g/n_ref)**4 is what matters once the nonlinear phase is negligible
    a = wg(group_index=30.0, kappa_cal=1.0)
    b = wg(group_index=15.0, kappa_cal=16.0)
    pump = PumpSpec(1e-3)
    mu_a = pair_rate(pump, a, 0.5e12).mu_pairs_per_pulse
    mu_b = pair_rate(pump, b, 0.5e12).mu_pairs_per_pulse
    assert mu_b == pytest.approx(mu_a, rel=1e-5)


def test_breakdown_invariants():
    br = preset("paper-396um").with_power(0.6).pair_rate()
    assert 0 <= br.phase_match_factor <= 1
    assert br.l_eff_m <= 396e-6
    assert br.p_eff_w <= 0.6


# ---------------------------------------------------------------- loss inference

def test_infer_alpha_from_measured_insertion_losses():
    alpha = infer_alpha([(96e-6, 8.0), (196e-6, 9.0), (396e-6, 11.0)], 3.5)
    assert alpha == pytest.approx(10.0e3, rel=1e-12)


def test_infer_alpha_two_points_exact():
    assert infer_alpha([(1e-4, 7.5), (3e-4, 9.5)], 3.5) == pytest.approx(1e4, rel=1e-12)


def test_infer_alpha_errors():
    with pytest.raises(ValueError):
        infer_alpha([(1e-4, 8.0)], 3.5)
    with pytest.raises(ValueError):
        infer_alpha([(1e-4, 8.0), (1e-4, 9.0)], 3.5)


# ---------------------------------------------------------------- validation

@pytest.mark.parametrize("field,value", [
    ("length_m", 0.0), ("group_index", 2.0), ("gamma0", 0.0), ("alpha_db_per_m", -1.0),
    ("facet_loss_db", -0.1), ("p_sat_w", 0.0), ("kappa_cal", 0.0), ("beta2", math.nan),
])
def test_waveguide_invariants(field, value):
    with pytest.raises(ConfigError, match=field):
        wg(**{field: value})


@pytest.mark.parametrize("field", ["peak_power_w", "rep_rate_hz", "wavelength_m", "pulse_fwhm_s"])
def test_pump_invariants(field):
    kw = {"peak_power_w": 0.1, field: -1.0}
    with pytest.raises(ConfigError, match=field):
        PumpSpec(**kw)
