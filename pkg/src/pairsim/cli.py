"""Command-line front end.

Every command that writes files also writes ``manifest.yaml`` next to them;
``pairsim rerun manifest.yaml`` replays it and reproduces the CSVs byte for
byte. Exit codes: 0 success, 2 configuration error, 3 statistical
degeneracy, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from ._validation import ConfigError, StatisticalDegeneracyError
from .analytic import RatePoint, expected_counts, ideal_car
from .config import (DEFAULT_PRESET, PRESET_NAMES, dump_yaml, from_dict, load_yaml, parse_config,
                     preset, to_dict)
from .experiments import (SweepResult, detuning_sweep, find_max_car, fit_power_law,
                          fit_quadratic, length_sweep, mu_ratio_experiment, power_sweep)
from .montecarlo import SimConfig, derive_seed, run_counting

EXIT_OK, EXIT_CONFIG, EXIT_DEGENERATE, EXIT_IO = 0, 2, 3, 4
MANIFEST = "manifest.yaml"
FIGURES = ("fig3", "fig4", "fig5", "fig6", "fig7")

FIG3_POWERS = tuple(np.round(np.arange(0.025, 1.0001, 0.025), 3))
FIG4_DETUNINGS_THZ = (0.4, 0.45, 0.5, 0.55, 0.6, 0.65, 0.7)
FIG4_POWERS = (0.05, 0.1, 0.17, 0.25, 0.34)
FIG5_POWERS = tuple(np.round(np.arange(0.05, 0.6001, 0.05), 3))
FIG6_POWERS = tuple(np.round(np.arange(0.05, 0.4501, 0.04), 3))
FIG7_POWERS = tuple(np.round(np.geomspace(0.05, 1.4, 12), 3))
FIG7_CURVES = (("paper-196um", 0.7e12), ("paper-196um", 0.5e12), ("paper-96um", 0.5e12))


# ---------------------------------------------------------------- CSV output

def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(value).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        return format(v, ".9g")
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows) -> Path:
    """Header plus rows, 9 significant digits, ``\\n`` line endings."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


def _sweep_rows(res: SweepResult, scale: float = 1.0):
    for value, rec, met in res.points:
        yield (value * scale, rec.car, rec.car_err, rec.coinc_raw, rec.accidental,
               rec.coinc_net, rec.s1_raw)


SWEEP_HEADER = ("car", "car_err", "coinc_raw", "accidental", "coinc_net", "s1_raw")


# ---------------------------------------------------------------- figures

def _on_device(base: SimConfig, name: str) -> SimConfig:
    """``base`` with the waveguide, power and detuning of a preset device."""
    dev = preset(name)
    return replace(base, waveguide=dev.waveguide, pump=dev.pump).with_detuning(dev.detuning_hz)


def _length_um(cfg: SimConfig) -> float:
    return round(cfg.waveguide.length_m * 1e6, 6)


def _panel(base: SimConfig, index: int) -> SimConfig:
    return base.with_seed(derive_seed(base.seed, index))


def fig3(base: SimConfig, out: Path, n_jobs: int) -> list[Path]:
    rows = []
    for k, (mode, fbg) in enumerate((("fbg-aligned", None), ("fbg-offset", 0.0))):
        cfg = _panel(_on_device(base, "paper-96um"), k)
        if fbg is not None:
            cfg = replace(cfg, signal_ch=replace(cfg.signal_ch, fbg_suppression_db=fbg),
                          idler_ch=replace(cfg.idler_ch, fbg_suppression_db=fbg))
        res = power_sweep(cfg, FIG3_POWERS, n_jobs)
        cn = res.column("coinc_net")
        a = fit_quadratic(list(zip(res.values, cn))).params["onset_amplitude"]
        for p, rec, _ in res.points:
            rows.append((p, rec.car, rec.car_err, rec.coinc_net, a * p * p, mode))
    return [write_csv(out / "fig3.csv",
                      ("power_w", "car", "car_err", "coinc_net", "coinc_net_fit", "leak_mode"), rows)]


def fig4(base: SimConfig, out: Path, n_jobs: int) -> list[Path]:
    dev = _on_device(base, "paper-96um")
    res = detuning_sweep(_panel(dev.with_power(0.17), 0), [d * 1e12 for d in FIG4_DETUNINGS_THZ], n_jobs)
    a = write_csv(out / "fig4a.csv", ("detuning_thz", "car", "car_err"),
                  ((v / 1e12, rec.car, rec.car_err) for v, rec, _ in res.points))
    rows = []
    for k, p in enumerate(FIG4_POWERS):
        sw = detuning_sweep(_panel(dev.with_power(p), 1 + k), [d * 1e12 for d in FIG4_DETUNINGS_THZ], n_jobs)
        rows += [(p, v / 1e12, rec.coinc_net) for v, rec, _ in sw.points]
    b = write_csv(out / "fig4b.csv", ("power_w", "detuning_thz", "coinc_net"), rows)
    return [a, b]


def fig5(base: SimConfig, out: Path, n_jobs: int) -> list[Path]:
    rows_a, rows_b = [], []
    for k, name in enumerate(PRESET_NAMES):
        dev = _on_device(base, name)
        res = power_sweep(_panel(dev, k), FIG5_POWERS, n_jobs)
        cn = res.column("coinc_net")
        a = fit_quadratic(list(zip(res.values, cn))).params["onset_amplitude"]
        rows_a += [(p, _length_um(dev), rec.coinc_net, a * p * p) for p, rec, _ in res.points]
        sw = detuning_sweep(_panel(dev.with_power(0.17), 10 + k),
                            [d * 1e12 for d in FIG4_DETUNINGS_THZ], n_jobs)
        rows_b += [(v / 1e12, _length_um(dev), rec.coinc_net) for v, rec, _ in sw.points]
    return [write_csv(out / "fig5a.csv", ("power_w", "length_um", "coinc_net", "coinc_net_fit"), rows_a),
            write_csv(out / "fig5b.csv", ("detuning_thz", "length_um", "coinc_net"), rows_b)]


def fig6(base: SimConfig, out: Path, n_jobs: int) -> list[Path]:
    rows = []
    for k, name in enumerate(PRESET_NAMES):
        dev = _on_device(base, name)
        best = find_max_car(_panel(dev, k), FIG6_POWERS, n_jobs)
        rows.append((_length_um(dev), best.car_max, best.record.car_err, best.p_opt))
    return [write_csv(out / "fig6.csv", ("length_um", "car_max", "car_err", "p_opt_w"), rows)]


def fig7(base: SimConfig, out: Path, n_jobs: int) -> list[Path]:
    rows = []
    for k, (name, df) in enumerate(FIG7_CURVES):
        dev = _on_device(base, name).with_detuning(df)
        res = mu_ratio_experiment(_panel(dev, k), FIG7_POWERS, n_jobs)
        rows += [(p, _length_um(dev), df / 1e12, met.mu_ratio) for p, _, met in res.points]
    return [write_csv(out / "fig7.csv", ("power_w", "length_um", "detuning_thz", "mu_ratio"), rows)]


FIGURE_BUILDERS = {"fig3": fig3, "fig4": fig4, "fig5": fig5, "fig6": fig6, "fig7": fig7}


# ---------------------------------------------------------------- commands

def _load(args) -> SimConfig:
    if getattr(args, "config", None):
        cfg = parse_config(args.config)
    else:
        cfg = from_dict({"preset": getattr(args, "preset", None) or DEFAULT_PRESET}, apply_env=True)
    if getattr(args, "gates", None) is not None:
        cfg = cfg.with_gates(args.gates)
    if getattr(args, "power", None) is not None:
        cfg = cfg.with_power(args.power)
    return cfg


def _write_manifest(out: Path, command: str, params: dict, cfg: SimConfig, config_path,
                    outputs: Sequence[Path]) -> Path:
    manifest = {
        "command": command,
        "params": params,
        "config_path": None if config_path is None else str(config_path),
        "output_dir": str(out),
        "seed": cfg.seed,
        "version": __version__,
        "outputs": [p.name for p in outputs],
        "config": to_dict(cfg),
    }
    path = out / MANIFEST
    with open(path, "w", encoding="utf-8") as fh:
        dump_yaml(manifest, fh)
    return path


def _outdir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _execute(command: str, params: dict, cfg: SimConfig, out: Path) -> list[Path]:
    """Run a file-writing command from its resolved config; shared by ``rerun``."""
    n_jobs = params.get("n_jobs", 1)
    if command == "reproduce":
        return FIGURE_BUILDERS[params["figure"]](cfg, out, n_jobs)
    if command == "simulate":
        rec = run_counting(cfg)
        fields = ("gates", "s1_raw", "s2_raw", "s2_gates", "dark1", "dark2", "coinc_raw",
                  "accidental", "coinc_net", "car", "car_err")
        return [write_csv(out / "simulate.csv", fields, [[getattr(rec, f) for f in fields]])]
    if command == "sweep":
        axis, values = params["axis"], params["values"]
        if axis == "power":
            res = power_sweep(cfg, values, n_jobs)
            return [write_csv(out / "sweep_power.csv", ("power_w",) + SWEEP_HEADER, _sweep_rows(res))]
        if axis == "detuning":
            res = detuning_sweep(cfg, [v * 1e12 for v in values], n_jobs)
            return [write_csv(out / "sweep_detuning.csv", ("detuning_thz",) + SWEEP_HEADER,
                              _sweep_rows(res, 1e-12))]
        devices = [_on_device(cfg, name) for name in values]
        res = length_sweep(devices, params.get("power"), n_jobs)
        return [write_csv(out / "sweep_length.csv", ("length_um",) + SWEEP_HEADER,
                          _sweep_rows(res, 1e6))]
    raise ConfigError(f"command: {command!r} cannot be replayed")


def cmd_analytic(args) -> int:
    if args.mu is None:
        pt = _load(args).rate_point()
    else:
        eta_s = 10.0 ** (-(args.eta_db_s if args.eta_db_s is not None else args.eta_db) / 10.0)
        eta_i = 10.0 ** (-(args.eta_db_i if args.eta_db_i is not None else args.eta_db) / 10.0)
        pt = RatePoint(mu=args.mu, eta_s=eta_s, eta_i=eta_i, d_s=args.dark_s, d_i=args.dark_i,
                       leak_s=args.leak_s, leak_i=args.leak_i, p_j1=args.pj1, p_j2=args.pj2,
                       pair_statistics=args.pair_statistics)
    ec = expected_counts(pt)
    ideal = ideal_car(pt.mu) if pt.mu > 0 else math.inf
    print(f"mu: {_fmt(pt.mu)}")
    print(f"ideal CAR: {_fmt(ideal)}")
    print(f"modelled CAR: {_fmt(ec.car)}")
    print(f"singles per gate: signal {_fmt(ec.singles_s)}, idler {_fmt(ec.singles_i)}")
    print(f"net coincidences per gate: {_fmt(ec.coinc_net)}")
    print(f"accidentals per gate: {_fmt(ec.accidental)}")
    return EXIT_OK


def _run_writing(args, command: str, params: dict) -> int:
    cfg = _load(args)
    if args.out is None:
        rec = run_counting(cfg)
        sys.stdout.write(dump_yaml({k: getattr(rec, k) for k in rec.__dataclass_fields__}))
        return EXIT_OK
    out = _outdir(args.out)
    outputs = _execute(command, params, cfg, out)
    _write_manifest(out, command, params, cfg, args.config, outputs)
    for p in outputs:
        print(p)
    return EXIT_OK


def cmd_simulate(args) -> int:
    return _run_writing(args, "simulate", {})


def cmd_sweep(args) -> int:
    if args.axis == "length":
        values = list(args.values or PRESET_NAMES)
        for v in values:
            if v not in PRESET_NAMES:
                raise ConfigError(f"values: unknown preset {v!r}; choose from {PRESET_NAMES}")
    else:
        if not args.values:
            raise ConfigError("values: give at least two sweep values")
        try:
            values = [float(v) for v in args.values]
        except ValueError as err:
            raise ConfigError(f"values: {err}") from None
    params = {"axis": args.axis, "values": values, "n_jobs": args.n_jobs}
    if args.axis == "length" and args.power is not None:
        params["power"] = args.power
    cfg = _load(args)
    out = _outdir(args.out)
    outputs = _execute("sweep", params, cfg, out)
    _write_manifest(out, "sweep", params, cfg, args.config, outputs)
    for p in outputs:
        print(p)
    return EXIT_OK


def cmd_fit(args) -> int:
    with open(args.input, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    for col in (args.x, args.y):
        if not rows or col not in rows[0]:
            raise ConfigError(f"{col}: column not found in {args.input}")
    pts = [(float(r[args.x]), float(r[args.y])) for r in rows
           if not (math.isnan(float(r[args.x])) or math.isnan(float(r[args.y])))]
    if args.model == "quadratic":
        res = fit_quadratic(pts, drop=args.drop, weighted=args.weighted)
    else:
        res = fit_power_law(pts)
    sys.stdout.write(dump_yaml({"model": res.model,
                                "params": {k: float(v) for k, v in res.params.items()},
                                "exponent": float(res.exponent),
                                "residual_norm": float(res.residual_norm),
                                "cov_diag": [float(v) for v in res.cov_diag],
                                "onset": float(res.onset)}))
    return EXIT_OK


def cmd_reproduce(args) -> int:
    cfg = _load(args)
    params = {"figure": args.figure, "n_jobs": args.n_jobs}
    out = _outdir(args.out)
    outputs = _execute("reproduce", params, cfg, out)
    _write_manifest(out, "reproduce", params, cfg, args.config, outputs)
    for p in outputs:
        print(p)
    return EXIT_OK


def cmd_rerun(args) -> int:
    data = load_yaml(args.manifest)
    if not isinstance(data, dict) or "command" not in data or "config" not in data:
        raise ConfigError(f"{args.manifest}: not a pairsim manifest")
    cfg = from_dict(data["config"], apply_env=False)
    params = dict(data.get("params") or {})
    out = _outdir(args.out or data.get("output_dir") or Path(args.manifest).parent)
    outputs = _execute(data["command"], params, cfg, out)
    _write_manifest(out, data["command"], params, cfg, data.get("config_path"), outputs)
    for p in outputs:
        print(p)
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _config_args(p: argparse.ArgumentParser, power: bool = True) -> None:
    p.add_argument("-c", "--config", help="YAML config file (default: the preset)")
    p.add_argument("--preset", choices=PRESET_NAMES, help=f"preset when no config (default {DEFAULT_PRESET})")
    p.add_argument("--gates", type=int, help="override protocol.gates_total")
    if power:
        p.add_argument("--power", type=float, help="override the coupled peak power (W)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pairsim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analytic", help="closed-form CAR of one operating point")
    _config_args(p)
    p.add_argument("--mu", type=float, help="pairs per pulse; skips the config")
    p.add_argument("--eta-db", type=float, default=22.0, help="channel loss of both arms (dB)")
    p.add_argument("--eta-db-s", type=float)
    p.add_argument("--eta-db-i", type=float)
    p.add_argument("--dark-s", type=float, default=0.0)
    p.add_argument("--dark-i", type=float, default=0.0)
    p.add_argument("--leak-s", type=float, default=0.0)
    p.add_argument("--leak-i", type=float, default=0.0)
    p.add_argument("--pj1", type=float, default=1.0)
    p.add_argument("--pj2", type=float, default=1.0)
    p.add_argument("--pair-statistics", choices=("poisson", "thermal"), default="poisson")
    p.set_defaults(func=cmd_analytic)

    p = sub.add_parser("simulate", help="one Monte Carlo acquisition")
    _config_args(p)
    p.add_argument("-o", "--out", help="output directory (default: print the record)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="Monte Carlo sweep along one axis")
    p.add_argument("axis", choices=("power", "detuning", "length"))
    _config_args(p)
    p.add_argument("--values", nargs="+",
                   help="powers (W), detunings (THz) or preset names for length")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("-j", "--n-jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("fit", help="fit a CSV column pair")
    p.add_argument("model", choices=("quadratic", "power-law"))
    p.add_argument("input")
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--drop", type=float, default=0.1)
    p.add_argument("--weighted", action="store_true")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("reproduce", help="regenerate a figure as CSV")
    p.add_argument("figure", choices=FIGURES)
    _config_args(p, power=False)
    p.add_argument("-o", "--out", required=True)
    p.add_argument("-j", "--n-jobs", type=int, default=1)
    p.set_defaults(func=cmd_reproduce)

    p = sub.add_parser("rerun", help="replay a manifest")
    p.add_argument("manifest")
    p.add_argument("-o", "--out", help="output directory (default: the manifest's)")
    p.set_defaults(func=cmd_rerun)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"pairsim: config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except StatisticalDegeneracyError as err:
        print(f"pairsim: statistical degeneracy: {err}", file=sys.stderr)
        return EXIT_DEGENERATE
    except OSError as err:
        print(f"pairsim: I/O error: {err}", file=sys.stderr)
        return EXIT_IO
    except ValueError as err:
        print(f"pairsim: invalid input: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
