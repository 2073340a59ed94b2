"""Photon-pair generation and coincidence counting in slow-light waveguides."""

__version__ = "0.1.0"

from ._validation import BoundaryMaximumError, ConfigError, StatisticalDegeneracyError
from .analytic import (ExpectedCounts, MuRatioCurve, RatePoint, expected_counts, expected_tallies,
                       ideal_car, infer_mu1_mu2, mu_ratio_curve)
from .config import config_hash, from_dict, parse_config, preset, to_dict
from .detection import (ChannelSpec, DetectorSpec, FilterStage, GatingProtocol,
                        channel_transmission, click_probability, detect,
                        gate_overlap_probability, pump_leakage_rate, total_suppression_db)
from .device import (PairRateBreakdown, PumpSpec, WaveguideSpec, calibrate_kappa,
                     calibrate_saturation_power, effective_gamma, effective_length,
                     half_efficiency_detuning, infer_alpha, nonlinear_effective_power,
                     pair_rate, phase_matching_factor, phase_mismatch, photon_survival,
                     slow_light_enhancement)
from .experiments import (FitResult, MaxCar, PowerLawFit, QuadraticFit, SweepResult,
                          detuning_sweep, find_max_car, fit_power_law, fit_quadratic,
                          length_sweep, mu_ratio_experiment, power_sweep)
from .montecarlo import (CountsRecord, SimConfig, derive_seed, estimate_car_curve, pool_records,
                         run_counting, run_pooled, simulate_pulse)

__all__ = [name for name in dir() if not name.startswith("_")]
