"""Command-line interface: exit codes, output routing, unit conversion."""
from __future__ import annotations

import json
import subprocess
import sys

import pytest

from srlaser import __version__
from srlaser.cli import main
from srlaser.model import to_hz


def run_cli(capsys, argv):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture
def desk_config(tmp_path):
    path = tmp_path / "desk.json"
    path.write_text(json.dumps({
        "n_atoms": 2,
        "g_hz": to_hz(0.25),
        "kappa_hz": to_hz(1.0),
        "gamma_hz": to_hz(0.01),
        "eta_hz": to_hz(0.2),
    }))
    return str(path)


# ------------------------------------------------------------------ exit codes

def test_no_subcommand_is_a_usage_error(capsys):
    code, _, _ = run_cli(capsys, [])
    assert code == 2


def test_unknown_preset_is_a_usage_error(capsys):
    code, _, _ = run_cli(capsys, ["steady", "--preset", "nope"])
    assert code == 2


def test_solver_failure_exits_one(capsys, tmp_path):
    # no coupling, no emission line: the scan is flat and the fit must fail
    path = tmp_path / "dark.json"
    path.write_text(json.dumps({
        "n_atoms": 2, "g_hz": 0.0, "kappa_hz": to_hz(1.0),
        "gamma_hz": to_hz(0.01), "eta_hz": to_hz(0.2),
    }))
    code, _, err = run_cli(capsys, ["spectrum", "--config", str(path)])
    assert code == 1
    assert "no line" in err


def test_version_flag(capsys):
    code, out, _ = run_cli(capsys, ["--version"])
    assert code == 0
    assert __version__ in out


def test_console_script_is_installed():
    result = subprocess.run(
        [sys.executable, "-m", "srlaser.cli", "--version"],
        capture_output=True, text=True,
    )
    assert result.returncode == 0
    assert __version__ in result.stdout


# -------------------------------------------------------------------- commands

def test_presets_lists_known_parameter_sets(capsys):
    code, out, _ = run_cli(capsys, ["presets"])
    assert code == 0
    payload = json.loads(out)
    assert set(payload) == {"sr87", "sr88"}
    assert payload["sr88"]["kappa_hz"] == pytest.approx(160e3)


def test_steady_flagship_point(capsys):
    code, out, err = run_cli(
        capsys, ["steady", "--preset", "sr88", "--n", "100000", "--eta-hz", "23870"]
    )
    assert code == 0
    payload = json.loads(out)
    assert payload["config"]["n_atoms"] == 100000
    assert payload["photon_number"] == pytest.approx(5114.69, rel=1e-3)
    assert payload["regime"] == "superradiant_lasing"
    assert payload["derived"]["purcell_hz"] == pytest.approx(2809.0, rel=1e-6)
    assert "photon number" in err


def test_steady_out_file_routes_json(capsys, tmp_path):
    out_path = tmp_path / "steady.json"
    code, out, err = run_cli(
        capsys,
        ["steady", "--preset", "sr88", "--n", "100", "--eta-hz", "75000",
         "--out", str(out_path)],
    )
    assert code == 0
    assert out == ""
    payload = json.loads(out_path.read_text())
    assert payload["photon_number"] == pytest.approx(13.8786, rel=1e-4)
    assert "regime" in err


def test_flags_override_config_file(capsys, tmp_path, desk_config):
    code, out, _ = run_cli(
        capsys, ["steady", "--config", desk_config, "--n", "3"]
    )
    assert code == 0
    payload = json.loads(out)
    assert payload["config"]["n_atoms"] == 3
    assert payload["config"]["eta_hz"] == pytest.approx(to_hz(0.2))


def test_limits_reports_closed_form_scales(capsys):
    code, out, _ = run_cli(capsys, ["limits", "--preset", "sr88", "--n", "100"])
    assert code == 0
    payload = json.loads(out)
    # 2 sqrt(N) g and N Gamma_c for the sr88 numbers
    assert payload["collective_rabi_hz"] == pytest.approx(212000.0, rel=1e-9)
    assert payload["n_purcell_hz"] == pytest.approx(280900.0, rel=1e-9)
    assert payload["delta_nu_eq3_hz"] is None  # unpumped: below lasing domain
    assert "delta_nu_eq3_note" in payload
    assert payload["delta_nu_eq4_hz"] == pytest.approx(146810.3, rel=1e-4)


def test_spectrum_stdout_convention(capsys, desk_config):
    code, out, err = run_cli(capsys, ["spectrum", "--config", desk_config])
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "omega_f_hz,intensity"
    assert len(lines) > 100
    record = json.loads(err[err.index("{"):])
    assert record["delta_nu_hz"] == pytest.approx(to_hz(0.2096), rel=5e-3)


def test_spectrum_out_file_convention(capsys, tmp_path, desk_config):
    csv_path = tmp_path / "scan.csv"
    code, out, _ = run_cli(
        capsys, ["spectrum", "--config", desk_config, "--out", str(csv_path)]
    )
    assert code == 0
    assert csv_path.read_text().splitlines()[0] == "omega_f_hz,intensity"
    record = json.loads(out)
    assert record["beta_hz"] > 0.0
    assert record["delta_nu_hz"] == pytest.approx(to_hz(0.2096), rel=5e-3)


def test_dicke_map_csv_header(capsys, desk_config):
    code, out, err = run_cli(capsys, ["dicke-map", "--config", desk_config])
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "N,eta_hz,J,M,J_over_N,M_over_N,regime"
    cells = lines[1].split(",")
    assert cells[0] == "2"
    assert float(cells[2]) <= 1.0 + 1e-9  # J <= N/2
    assert "collective threshold" in err


def test_sweep_jsonl_echo(capsys, tmp_path, desk_config):
    out_csv = tmp_path / "sweep.csv"
    config = json.loads(open(desk_config).read())
    config.update({
        "n_list": [2, 3],
        "eta_grid": {"min_hz": to_hz(0.05), "max_hz": to_hz(0.5), "points": 2},
        "output_path": str(out_csv),
    })
    del config["eta_hz"], config["n_atoms"]
    cfg_path = tmp_path / "sweep.json"
    cfg_path.write_text(json.dumps(config))
    code, out, err = run_cli(
        capsys, ["sweep", "--config", str(cfg_path), "--format", "jsonl"]
    )
    assert code == 0
    rows = [json.loads(line) for line in out.splitlines()]
    assert len(rows) == 4
    assert {row["n_atoms"] for row in rows} == {2, 3}
    assert all(row["status"] == "ok" for row in rows)
    assert out_csv.exists()
    assert "4 rows (4 ok)" in err


def test_sweep_requires_grid_and_output(capsys, tmp_path):
    code, _, err = run_cli(capsys, ["sweep", "--preset", "sr88", "--n", "2"])
    assert code == 2
    assert "usage error" in err
    code, _, err = run_cli(
        capsys, ["sweep", "--preset", "sr88", "--n", "2", "--eta-hz", "100"]
    )
    assert code == 2
    assert "output_path" in err


def test_oracle_check_reports_all_green(capsys, tmp_path):
    report_path = tmp_path / "report.json"
    code, _, err = run_cli(capsys, ["oracle-check", "--out", str(report_path)])
    assert code == 0
    assert "consistency checks passed" in err
    report = json.loads(report_path.read_text())
    assert len(report) == 6
    assert all(entry["pass"] for entry in report)
