"""Presets and the YAML configuration format.

A config file is a nested mapping. Every section is optional; missing values
come from the ``preset`` (``paper-196um`` when absent)::

    preset: paper-96um
    seed: 7
    pair_statistics: poisson        # or thermal
    detuning_hz: 0.6e12             # shorthand for both channels
    waveguide: {length_m: 96e-6, group_index: 30, p_sat_w: 18.7}
    pump: {peak_power_w: 0.17}
    signal_channel:
      channel_loss_db: 22
      fbg_suppression_db: 12
      rolloff: [{name: awg-bpf, fwhm_hz: 0.5e12, order: 2, isolation_db: 30}]
    idler_channel: {channel_loss_db: 22}
    spd1: {dark_prob_per_gate: 2e-5, jitter_fwhm_s: 0.7e-9, jitter_model: gaussian}
    spd2: {dark_prob_per_gate: 4e-5, jitter_fwhm_s: 1.1e-9}
    protocol: {gates_total: 9e9, accidental_mode: delayed-gate}

All quantities are SI. The environment variable ``PAIRSIM_SEED`` overrides
``seed``.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import fields, replace
from typing import Any, Mapping

import yaml

from ._validation import ConfigError
from .detection import ChannelSpec, DetectorSpec, FilterStage, GatingProtocol
from .device import (PumpSpec, WaveguideSpec, calibrate_kappa, effective_length, infer_alpha,
                     scaled_saturation_power)
from .montecarlo import SimConfig

SEED_ENV = "PAIRSIM_SEED"
DEFAULT_PRESET = "paper-196um"

# Measured insertion losses (length, dB) and the common facet loss.
INSERTION_LOSSES_DB = ((96e-6, 8.0), (196e-6, 9.0), (396e-6, 11.0))
FACET_LOSS_DB = 3.5
ALPHA_DB_PER_M = infer_alpha(INSERTION_LOSSES_DB, FACET_LOSS_DB)

# Saturation power of the 96 um device, chosen so that QuadraticFit places the
# deviation onset of the analytic net coincidences at 0.5 W (checked in tests).
P_SAT_96UM_W = 11.5

# Pair-rate anchor: 0.004 pairs/pulse at 0.13 W on the 196 um device at 0.7 THz.
MU_ANCHOR = 0.004
P_ANCHOR_W = 0.13
DETUNING_ANCHOR_HZ = 0.7e12

BETA2_S2_PER_M = 1e-21

PRESET_POINTS = {
    # name: (length, default peak power, detuning)
    "paper-96um": (96e-6, 0.17, 0.7e12),
    "paper-196um": (196e-6, 0.13, 0.7e12),
    "paper-396um": (396e-6, 0.13, 0.5e12),
}
PRESET_NAMES = tuple(PRESET_POINTS)


def _waveguide(length_m: float, kappa_cal: float = 1.0) -> WaveguideSpec:
    ref = WaveguideSpec(length_m=96e-6, alpha_db_per_m=ALPHA_DB_PER_M)
    wg = WaveguideSpec(length_m=length_m, beta2=BETA2_S2_PER_M, alpha_db_per_m=ALPHA_DB_PER_M,
                       facet_loss_db=FACET_LOSS_DB, kappa_cal=kappa_cal)
    return replace(wg, p_sat_w=scaled_saturation_power(P_SAT_96UM_W, effective_length(ref), wg))


KAPPA_CAL = calibrate_kappa(MU_ANCHOR, PumpSpec(P_ANCHOR_W), _waveguide(196e-6), DETUNING_ANCHOR_HZ)


def preset(name: str = DEFAULT_PRESET) -> SimConfig:
    """Calibrated configuration for one of the three measured devices."""
    if name not in PRESET_POINTS:
        raise ConfigError(f"preset: unknown preset {name!r}; choose from {PRESET_NAMES}")
    length, power, detuning = PRESET_POINTS[name]
    return SimConfig(
        waveguide=_waveguide(length, KAPPA_CAL),
        pump=PumpSpec(peak_power_w=power),
        signal_ch=ChannelSpec(role="signal", detuning_hz=detuning),
        idler_ch=ChannelSpec(role="idler", detuning_hz=detuning),
        spd1=DetectorSpec(dark_prob_per_gate=2e-5, jitter_fwhm_s=0.7e-9),
        spd2=DetectorSpec(dark_prob_per_gate=4e-5, jitter_fwhm_s=1.1e-9),
        protocol=GatingProtocol(),
    )


# ---------------------------------------------------------------- dict round trip

_SECTIONS = {
    "waveguide": ("waveguide", WaveguideSpec),
    "pump": ("pump", PumpSpec),
    "signal_channel": ("signal_ch", ChannelSpec),
    "idler_channel": ("idler_ch", ChannelSpec),
    "spd1": ("spd1", DetectorSpec),
    "spd2": ("spd2", DetectorSpec),
    "protocol": ("protocol", GatingProtocol),
}
_TOP_LEVEL = {"preset", "seed", "pair_statistics", "detuning_hz", *_SECTIONS}


def _plain(value):
    if dataclasses.is_dataclass(value):
        return {f.name: _plain(getattr(value, f.name)) for f in fields(value)}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def to_dict(cfg: SimConfig) -> dict:
    """Fully resolved nested mapping; :func:`from_dict` inverts it exactly."""
    out = {"seed": cfg.seed, "pair_statistics": cfg.pair_statistics}
    for key, (attr, _) in _SECTIONS.items():
        section = _plain(getattr(cfg, attr))
        if key.endswith("_channel"):
            section.pop("role")
        out[key] = section
    return out


def config_hash(cfg: SimConfig) -> str:
    """SHA-256 of the canonical JSON form; independent of key order in the source file."""
    blob = json.dumps(to_dict(cfg), sort_keys=True, separators=(",", ":"), default=repr)
    return hashlib.sha256(blob.encode()).hexdigest()


_YAML_INF = {".inf": "inf", "+.inf": "inf", "-.inf": "-inf"}


def _coerce(field_name: str, value, template):
    """Numbers written as ``9e9`` or ``.inf`` arrive as float or str from YAML."""
    if isinstance(value, bool):
        raise ConfigError(f"{field_name}: expected a number, got {value!r}")
    if isinstance(template, (int, float)) and not isinstance(template, bool):
        if isinstance(value, str):
            try:
                value = float(_YAML_INF.get(value.strip().lower(), value))
            except ValueError:
                raise ConfigError(f"{field_name}: expected a number, got {value!r}") from None
        if not isinstance(value, (int, float)):
            raise ConfigError(f"{field_name}: expected a number, got {value!r}")
        if isinstance(template, int) and isinstance(value, float) and value.is_integer():
            return int(value)
        return value
    if isinstance(template, str) and not isinstance(value, str):
        raise ConfigError(f"{field_name}: expected a string, got {value!r}")
    return value


def _merge(section: str, base, updates: Mapping[str, Any]):
    if not isinstance(updates, Mapping):
        raise ConfigError(f"{section}: expected a mapping, got {type(updates).__name__}")
    names = {f.name for f in fields(base)}
    changes = {}
    for key, value in updates.items():
        path = f"{section}.{key}"
        if key not in names or key == "role":
            raise ConfigError(f"{path}: unknown field")
        if key == "rolloff":
            changes[key] = tuple(_stage(f"{path}[{i}]", s) for i, s in enumerate(_as_list(path, value)))
        else:
            changes[key] = _coerce(path, value, getattr(base, key))
    try:
        return replace(base, **changes)
    except ConfigError as err:
        raise ConfigError(f"{section}.{err}") from None
    except TypeError as err:
        raise ConfigError(f"{section}: {err}") from None


def _as_list(path, value):
    if not isinstance(value, list):
        raise ConfigError(f"{path}: expected a list of filter stages")
    return value


def _stage(path: str, spec) -> FilterStage:
    return _merge(path, FilterStage(), spec or {})


def from_dict(data: Mapping[str, Any] | None, *, apply_env: bool = False) -> SimConfig:
    """Build a validated :class:`SimConfig` from a nested mapping."""
    data = dict(data or {})
    unknown = set(data) - _TOP_LEVEL
    if unknown:
        raise ConfigError(f"{sorted(unknown)[0]}: unknown field")
    cfg = preset(data.get("preset", DEFAULT_PRESET))
    parts = {attr: getattr(cfg, attr) for attr, _ in _SECTIONS.values()}
    for key, (attr, _) in _SECTIONS.items():
        if key in data:
            parts[attr] = _merge(key, parts[attr], data[key] or {})
    if "detuning_hz" in data:
        df = _coerce("detuning_hz", data["detuning_hz"], 0.0)
        parts["signal_ch"] = _merge("signal_channel", parts["signal_ch"], {"detuning_hz": df})
        parts["idler_ch"] = _merge("idler_channel", parts["idler_ch"], {"detuning_hz": df})
    seed = data.get("seed", cfg.seed)
    if apply_env and os.environ.get(SEED_ENV, "").strip():
        raw = os.environ[SEED_ENV].strip()
        try:
            seed = int(raw, 0)
        except ValueError:
            raise ConfigError(f"{SEED_ENV}: expected an integer, got {raw!r}") from None
    if isinstance(seed, float) and seed.is_integer():
        seed = int(seed)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ConfigError(f"seed: expected an integer, got {seed!r}")
    stats = data.get("pair_statistics", cfg.pair_statistics)
    return SimConfig(seed=seed, pair_statistics=stats, **parts)


def load_yaml(path) -> Any:
    """Read YAML, turning syntax errors into :class:`ConfigError` with the line number."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        return yaml.safe_load(text)
    except yaml.MarkedYAMLError as err:
        mark = err.problem_mark
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "unknown position"
        raise ConfigError(f"{path}: YAML parse error at {where}: {err.problem}") from None
    except yaml.YAMLError as err:
        raise ConfigError(f"{path}: YAML parse error: {err}") from None


def parse_config(path, *, apply_env: bool = True) -> SimConfig:
    """Load and validate a config file. An empty file yields the ``paper-196um`` preset."""
    data = load_yaml(path)
    if data is not None and not isinstance(data, Mapping):
        raise ConfigError(f"{path}: top level must be a mapping")
    return from_dict(data, apply_env=apply_env)


def dump_yaml(data, stream=None):
    return yaml.safe_dump(data, stream, sort_keys=False, default_flow_style=False)

