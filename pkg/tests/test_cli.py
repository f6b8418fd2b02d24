"""Subcommand behaviour, artifacts, manifests, and exit codes."""

import json
import math

import numpy as np
import pytest

import ddphase.cli as cli
from ddphase.model import named_configuration, save_model
from ddphase.phase_diagram import scan_ground


def run(argv):
    return cli.main(argv)


# ---------------------------------------------------------------------------
# two-level


def test_two_level_csv_and_kink(tmp_path):
    out = tmp_path / "tl"
    assert run(["two-level", "--g", "0.5", "--x", "0:3:0.01",
                "--out", str(out)]) == 0
    lines = (out / "two_level.csv").read_text().splitlines()
    assert lines[0] == "x,e_min,de,d2e"
    assert len(lines) == 302
    rows = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    xc = math.sqrt(1.5)
    # E_min stays zero through the critical point and descends past it
    assert np.all(rows[rows[:, 0] <= xc, 1] == 0.0)
    assert rows[-1, 1] < -0.5
    jump = np.argmax(np.abs(np.diff(rows[:, 3])))
    assert abs(rows[jump, 0] - xc) < 0.02
    assert (out / "plot_two_level.gp").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "two-level"
    assert manifest["inputs"]["g"] == 0.5
    assert "two_level.csv" in manifest["artifacts"]
    assert manifest["versions"]["ddphase"]
    assert manifest["wall_time_s"] >= 0.0


def test_two_level_bad_range(tmp_path):
    assert run(["two-level", "--x", "0:3", "--out", str(tmp_path)]) == 2
    assert run(["two-level", "--x", "3:0:0.1", "--out", str(tmp_path)]) == 2


# ---------------------------------------------------------------------------
# grid commands


def test_scan_writes_all_artifacts(tmp_path):
    out = tmp_path / "scan"
    assert run(["scan", "--config", "V", "--grow", "g3", "--grid", "15",
                "--na", "50", "--out", str(out)]) == 0
    names = {p.name for p in out.iterdir()}
    for want in ("e_min.csv", "de.csv", "d2e.csv", "dc.csv", "bures.csv",
                 "separatrix.json", "separatrix.dat", "manifest.json",
                 "plot_e_min.gp", "plot_separatrix.gp"):
        assert want in names
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "scan"
    assert manifest["unconverged_cells"] == 0
    assert manifest["inputs"]["model"]["config"]["name"] == "V"
    assert set(manifest["artifacts"]) <= names


def test_scan_byte_identical_reruns(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert run(["scan", "--config", "V", "--grow", "g1", "--grid", "11",
                    "--na", "20", "--seed", "7", "--out", str(out)]) == 0
    for name in ("e_min.csv", "dc.csv", "bures.csv", "separatrix.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_separatrix_artifacts(tmp_path):
    out = tmp_path / "sep"
    assert run(["separatrix", "--config", "V", "--grow", "g3",
                "--grid", "21", "--out", str(out)]) == 0
    payload = json.loads((out / "separatrix.json").read_text())
    assert payload["curves"]
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["curves"] == len(payload["curves"])
    assert not (out / "e_min.csv").exists()


def test_bures_field(tmp_path):
    out = tmp_path / "bures"
    assert run(["bures", "--config", "V", "--grow", "g3", "--grid", "15",
                "--na", "5000", "--out", str(out)]) == 0
    lines = (out / "bures.csv").read_text().splitlines()
    assert lines[0] == "x_jk,x_lm,value"
    vals = np.array([float(ln.split(",")[2]) for ln in lines[1:]])
    assert vals.min() >= 0.0
    assert vals.max() <= math.sqrt(2.0) + 1e-12
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["bures_max"] == pytest.approx(vals.max())


def test_casimir_field_zero_rows_on_normal(tmp_path):
    out = tmp_path / "cas"
    assert run(["casimir", "--config", "V", "--grow", "g3", "--grid", "15",
                "--out", str(out)]) == 0
    lines = (out / "dc.csv").read_text().splitlines()
    rows = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    near_origin = (rows[:, 0] < 0.5) & (rows[:, 1] < 0.5)
    assert np.all(rows[near_origin, 2] == 0.0)


def test_model_file_roundtrip(tmp_path):
    spec = named_configuration("v", g="g2", x=(0.0, 0.0))
    path = tmp_path / "model.json"
    save_model(spec, path)
    out = tmp_path / "run"
    assert run(["scan", "--config", str(path), "--grid", "9",
                "--na", "10", "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["inputs"]["model"]["config"]["name"] == "V"
    # row labels apply to named configurations only
    assert run(["scan", "--config", str(path), "--grow", "g1",
                "--grid", "9", "--out", str(out)]) == 2


# ---------------------------------------------------------------------------
# oracle and selftest


def test_oracle_verdict(tmp_path, capsys):
    assert run(["oracle", "--config", "two_level", "--x", "1.5",
                "--na", "2"]) == 0
    verdict = json.loads(capsys.readouterr().out)
    assert set(verdict) >= {"E_var", "E_exact", "gap", "cutoffs", "converged"}
    assert verdict["converged"] is True
    assert verdict["gap"] >= -1e-8


def test_oracle_model_file(tmp_path, capsys):
    path = tmp_path / "model.json"
    save_model(named_configuration("v", g="g1", x=(1.2, 0.8)), path)
    assert run(["oracle", "--config", str(path), "--na", "2"]) == 0
    verdict = json.loads(capsys.readouterr().out)
    assert verdict["gap"] >= -1e-8


def test_selftest_passes(capsys):
    assert run(["selftest"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["passed"] is True
    assert len(report["cases"]) == 18


def test_selftest_failure_exit(monkeypatch, capsys):
    monkeypatch.setattr(
        cli, "algebra_selftest",
        lambda: {"tol": 0.0, "cases": {(2, 1): {"comm": 1.0}}, "passed": False},
    )
    assert run(["selftest"]) == 3


# ---------------------------------------------------------------------------
# failure modes


def test_unknown_config_and_row(tmp_path):
    assert run(["scan", "--config", "nosuch", "--out", str(tmp_path)]) == 2
    assert run(["scan", "--config", "V", "--grow", "g9",
                "--out", str(tmp_path)]) == 2


def test_bad_window(tmp_path):
    assert run(["scan", "--config", "V", "--window", "0:3",
                "--out", str(tmp_path)]) == 2


def test_unwritable_out(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    out = blocker / "sub"
    assert run(["scan", "--config", "V", "--grow", "g1", "--grid", "5",
                "--out", str(out)]) == 2


def test_bad_threads(tmp_path):
    assert run(["casimir", "--config", "V", "--grid", "5",
                "--threads", "0", "--out", str(tmp_path)]) == 2


def test_unconverged_nodes_exit_numeric(tmp_path, monkeypatch):
    grid = scan_ground("v", "g1", shape=(5, 5))
    grid.converged[2, 2] = False
    monkeypatch.setattr(cli, "scan_ground", lambda *a, **k: grid)
    out = tmp_path / "out"
    assert run(["casimir", "--config", "V", "--grid", "5",
                "--out", str(out)]) == 3
    # artifacts still written for diagnosis
    assert (out / "dc.csv").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["unconverged_cells"] == 1


def test_bad_subcommand_exits_via_argparse():
    with pytest.raises(SystemExit) as exc:
        run(["bogus"])
    assert exc.value.code == 2
