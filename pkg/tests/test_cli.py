import json
import shutil

import pytest

from ruralv2x.cli import EXIT_CHECK, EXIT_INVALID, EXIT_OK, main
from ruralv2x.metrics import read_csv

FAST = ["--set", "density_rho=10", "--set", "sim_duration=1.2", "--set", "warmup=0.2"]


def test_analytic_default(capsys):
    assert main(["analytic", "--prr", "0", "--n", "10", "--v-kmh", "50.004", "--pps", "10"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "d_comm_m=13.89" in out
    assert "expected_attempts=3" in out
    assert "required Eb/N0 per MCS" in out


def test_analytic_energy_example(capsys):
    assert main(["analytic", "--prr", "0.5", "--pt-dbm", str(10 * 2.30102999566), "--l-bits", "2800",
                 "--rate-bps", "1e7", "--h-attempts", "2", "--n-pkt", "1"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "e_total_j=8.4e-05" in out


def test_analytic_grid(tmp_path):
    out = tmp_path / "grid.csv"
    assert main(["analytic", "--grid", "--grid-prr", "0.5,1.0", "--grid-pt", "23,26", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert len(rows) == 4
    assert rows[-1]["d_comm_m"] == "0"
    assert "infeasible" in rows[-1]["note"]


def test_invalid_config_exit(capsys):
    assert main(["simulate", "--set", "pt_dbm=abc", "--run-dir", "/tmp/never"]) == EXIT_INVALID
    assert "pt_dbm" in capsys.readouterr().err
    assert main(["sweep", "--axis", "nope=1,2"]) == EXIT_INVALID


def test_simulate_outputs(tmp_path):
    run = tmp_path / "sim"
    assert main(["simulate", *FAST, "--run-dir", str(run), "--ledger", "--trace"]) == EXIT_OK
    for name in ("config.yaml", "manifest.csv", "prr_by_distance.csv", "dcomm.csv", "energy.csv"):
        assert (run / name).exists()
    point = run / read_csv(run / "manifest.csv")[0]["outputs"]
    assert (point / "ledger.csv").exists() and (point / "trace.csv").exists()


def test_output_dir_env(tmp_path, monkeypatch):
    monkeypatch.setenv("RURALV2X_OUTPUT_DIR", str(tmp_path))
    assert main(["simulate", *FAST]) == EXIT_OK
    assert len(list(tmp_path.glob("simulate-*"))) == 1


def test_sweep_report_partial_and_strict(tmp_path, capsys):
    run = tmp_path / "sw"
    assert main(["sweep", *FAST, "--axis", "pt_dbm=23,26", "--run-dir", str(run)]) == EXIT_OK
    assert main(["report", str(run)]) == EXIT_OK
    rows = read_csv(run / "report.csv")
    assert {r["check"] for r in rows} >= {"prr_nondecreasing_in_pt", "energy_ratio_26_over_23"}
    energy = next(r for r in rows if r["check"] == "energy_ratio_26_over_23")
    assert energy["status"] == "PASS"

    manifest = read_csv(run / "manifest.csv")
    shutil.rmtree(run / manifest[1]["outputs"])
    assert main(["report", str(run), "--strict"]) == EXIT_CHECK
    assert main(["report", str(run), "--strict", "--allow-partial"]) in (EXIT_OK, EXIT_CHECK)
    rows = read_csv(run / "report.csv")
    assert any(r["status"] == "SKIPPED" for r in rows)
    assert not any(r["check"] == "energy_ratio_26_over_23" for r in rows)


def test_report_missing_dir(tmp_path):
    assert main(["report", str(tmp_path / "nothing")]) == EXIT_INVALID


def test_preset_meta(tmp_path):
    run = tmp_path / "p"
    assert main(["sweep", *FAST, "--preset", "scs", "--axis", "pt_dbm=23", "--run-dir", str(run)]) == 0
    meta = json.loads((run / "run.json").read_text())
    assert meta["preset"] == "scs" and meta["axes"]["scs_khz"] == [15, 30]
    assert len(read_csv(run / "manifest.csv")) == 2


def test_report_without_data_skips(tmp_path, capsys):
    run = tmp_path / "empty"
    args = ["--set", "density_rho=10", "--set", "sim_duration=0.5", "--set", "warmup=0.5"]
    assert main(["sweep", *args, "--axis", "pt_dbm=23,26", "--run-dir", str(run)]) == EXIT_OK
    assert main(["report", str(run), "--strict"]) == EXIT_OK
    rows = read_csv(run / "report.csv")
    assert rows and {r["status"] for r in rows} == {"SKIPPED"}
    assert "missing" not in capsys.readouterr().err
