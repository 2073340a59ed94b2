import csv
import subprocess
import sys

import pytest
import yaml

from pairsim import __version__
from pairsim.cli import EXIT_CONFIG, EXIT_DEGENERATE, EXIT_IO, EXIT_OK, MANIFEST, main

FIG_HEADERS = {
    "fig3.csv": ["power_w", "car", "car_err", "coinc_net", "coinc_net_fit", "leak_mode"],
    "fig4a.csv": ["detuning_thz", "car", "car_err"],
    "fig4b.csv": ["power_w", "detuning_thz", "coinc_net"],
    "fig5a.csv": ["power_w", "length_um", "coinc_net", "coinc_net_fit"],
    "fig5b.csv": ["detuning_thz", "length_um", "coinc_net"],
    "fig6.csv": ["length_um", "car_max", "car_err", "p_opt_w"],
    "fig7.csv": ["power_w", "length_um", "detuning_thz", "mu_ratio"],
}


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# ---------------------------------------------------------------- analytic

def test_analytic_reference_point(capsys):
    assert main(["analytic", "--mu", "0.004", "--dark-s", "2e-5", "--dark-i", "4e-5"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "ideal CAR: 250" in out
    assert "modelled CAR: 53.9535443" in out


def test_analytic_from_preset(capsys):
    assert main(["analytic", "--preset", "paper-196um"]) == EXIT_OK
    assert "mu: 0.004" in capsys.readouterr().out


def test_analytic_rejects_bad_mu(capsys):
    assert main(["analytic", "--mu", "-1"]) == EXIT_CONFIG
    assert "mu" in capsys.readouterr().err


# ---------------------------------------------------------------- exit codes

def test_missing_config_is_io_error(tmp_path):
    assert main(["simulate", "-c", str(tmp_path / "absent.yaml")]) == EXIT_IO


def test_invalid_config_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("signal_channel: {channel_loss_db: -3}\n")
    assert main(["simulate", "-c", str(cfg)]) == EXIT_CONFIG
    assert "signal_channel.channel_loss_db" in capsys.readouterr().err


def test_degenerate_max_car_exit_code(tmp_path):
    assert main(["reproduce", "fig6", "--gates", "10000", "-o", str(tmp_path)]) == EXIT_DEGENERATE


def test_unwritable_output_is_io_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["simulate", "--gates", "100000", "-o", str(blocker / "sub")]) == EXIT_IO


def test_usage_error_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["reproduce", "fig9", "-o", "x"])
    assert exc.value.code == 2


def test_module_entry_point_version():
    out = subprocess.run([sys.executable, "-m", "pairsim", "--version"], capture_output=True,
                         text=True, check=True).stdout
    assert __version__ in out


# ---------------------------------------------------------------- simulate and sweep

def test_simulate_prints_record(capsys):
    assert main(["simulate", "--gates", "1000000", "--preset", "paper-96um"]) == EXIT_OK
    rec = yaml.safe_load(capsys.readouterr().out)
    assert rec["gates"] == 1_000_000


def test_simulate_writes_csv_and_manifest(tmp_path):
    assert main(["simulate", "--gates", "1000000", "-o", str(tmp_path)]) == EXIT_OK
    table = rows(tmp_path / "simulate.csv")
    assert table[0][:2] == ["gates", "s1_raw"] and table[1][0] == "1000000"
    manifest = yaml.safe_load((tmp_path / MANIFEST).read_text())
    assert manifest["command"] == "simulate"
    assert manifest["outputs"] == ["simulate.csv"]
    assert manifest["version"] == __version__


@pytest.mark.parametrize("axis,values,first", [
    ("power", ["0.1", "0.2"], "power_w"),
    ("detuning", ["0.5", "0.7"], "detuning_thz"),
    ("length", ["paper-96um", "paper-396um"], "length_um"),
])
def test_sweep_writes_one_row_per_value(tmp_path, axis, values, first):
    assert main(["sweep", axis, "--values", *values, "--gates", "1000000", "-o", str(tmp_path)]) == EXIT_OK
    table = rows(tmp_path / f"sweep_{axis}.csv")
    assert table[0][0] == first and "car" in table[0]
    assert len(table) == 1 + len(values)


def test_sweep_rejects_out_of_reach_detuning(tmp_path):
    assert main(["sweep", "detuning", "--values", "0.9", "--gates", "1000000", "-o", str(tmp_path)]) == EXIT_CONFIG


# ---------------------------------------------------------------- fit

def test_fit_quadratic_from_csv(tmp_path, capsys):
    path = tmp_path / "c.csv"
    path.write_text("p,c\n0.1,0.02\n0.2,0.08\n0.4,0.32\n")
    assert main(["fit", "quadratic", str(path), "--x", "p", "--y", "c"]) == EXIT_OK
    res = yaml.safe_load(capsys.readouterr().out)
    assert res["params"]["amplitude"] == pytest.approx(2.0)


def test_fit_power_law_from_csv(tmp_path, capsys):
    path = tmp_path / "l.csv"
    path.write_text("L,w\n1,4\n4,2\n16,1\n")
    assert main(["fit", "power-law", str(path), "--x", "L", "--y", "w"]) == EXIT_OK
    assert yaml.safe_load(capsys.readouterr().out)["exponent"] == pytest.approx(-0.5)


def test_fit_unknown_column(tmp_path):
    path = tmp_path / "c.csv"
    path.write_text("p,c\n0.1,1\n0.2,4\n")
    assert main(["fit", "quadratic", str(path), "--x", "p", "--y", "q"]) == EXIT_CONFIG


# ---------------------------------------------------------------- reproduce and rerun

@pytest.mark.parametrize("figure", ["fig3", "fig4", "fig5", "fig7"])
def test_reproduce_headers(tmp_path, figure):
    assert main(["reproduce", figure, "--gates", "100000000", "-o", str(tmp_path)]) == EXIT_OK
    manifest = yaml.safe_load((tmp_path / MANIFEST).read_text())
    assert manifest["outputs"]
    for name in manifest["outputs"]:
        table = rows(tmp_path / name)
        assert table[0] == FIG_HEADERS[name]
        assert len(table) > 2


def test_fig6_headers(tmp_path):
    assert main(["reproduce", "fig6", "--gates", "9000000000", "-o", str(tmp_path), "-j", "2"]) == EXIT_OK
    table = rows(tmp_path / "fig6.csv")
    assert table[0] == FIG_HEADERS["fig6.csv"]
    assert [r[0] for r in table[1:]] == ["96", "196", "396"]


def test_rerun_is_byte_identical(tmp_path):
    first, second = tmp_path / "a", tmp_path / "b"
    assert main(["reproduce", "fig4", "--gates", "100000000", "-o", str(first)]) == EXIT_OK
    assert main(["rerun", str(first / MANIFEST), "-o", str(second)]) == EXIT_OK
    for name in ("fig4a.csv", "fig4b.csv"):
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_rerun_rejects_missing_manifest(tmp_path):
    assert main(["rerun", str(tmp_path / MANIFEST)]) == EXIT_IO
