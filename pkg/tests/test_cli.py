import csv
import json

import numpy as np
import pytest

from rydsta import cli
from rydsta.cli import main
from rydsta.dynamo import IntegrationError

FAST = """
name = "fast"
[gate]
kind = "cnot"
[drive]
omega = { value = 30, unit = "2pi*MHz" }
detuning = { value = 15, unit = "omega" }
[pulse]
tau = { value = 0.2, unit = "1/omega_eff" }
samples = 2001
[model]
name = "effective"
dissipation = false
[integrator]
samples = 101
[sweep]
axes = [{ field = "tau", values = [0.2, 1.0], unit = "1/omega_eff" }]
"""


@pytest.fixture()
def scenario(tmp_path):
    p = tmp_path / "fast.toml"
    p.write_text(FAST)
    return p


def run(capsys, *argv):
    rc = main([str(a) for a in argv])
    return rc, capsys.readouterr()


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(line for line in fh if not line.startswith("#")))


def result_json(stdout):
    body = stdout.split("----- result -----\n")[1].split("----- files -----")[0]
    return json.loads(body)


def test_design_pulse_outputs(tmp_path, scenario, capsys):
    out = tmp_path / "d"
    rc, cap = run(capsys, "design-pulse", "--scenario", scenario, "--out", out)
    assert rc == 0
    res = result_json(cap.out)
    assert res["max_omega_new_over_omega_eff"] == pytest.approx(2.136, abs=3e-3)
    for f in ("waveform.csv", "design.json", "waveforms.png", "manifest.json"):
        assert (out / f).exists()
    lines = (out / "waveform.csv").read_text().splitlines()
    assert lines[0] == "# scenario = fast"
    assert json.loads((out / "manifest.json").read_text())["status"] == "ok"


def test_rab_solve_bundled(tmp_path, capsys):
    rc, cap = run(capsys, "rab-solve", "--scenario", "rab-solve-cnot", "--out", tmp_path)
    assert rc == 0
    assert result_json(cap.out)["relative_residual"] < 1e-9


def test_simulate_and_determinism(tmp_path, scenario, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(capsys, "simulate", "--scenario", scenario, "--out", a)[0] == 0
    rc, cap = run(capsys, "simulate", "--scenario", scenario, "--out", b)
    assert rc == 0
    res = result_json(cap.out)
    assert res["average_fidelity"] > 0.998
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    for f in ("truth_table.csv", "report.json", "truth_table.png", "populations.png", "sphere_paths.png",
              "trajectory_11.csv", "step1_table.csv", "sphere_step1.csv"):
        assert f in names
    for f in names:
        assert (a / f).read_bytes() == (b / f).read_bytes(), f
    report = json.loads((a / "report.json").read_text())
    assert next(iter(report)) == "scenario"
    rows = read_rows(a / "truth_table.csv")
    assert rows[0] == ["out\\in", "00", "01", "10", "11"]
    table = np.array([[float(x) for x in r[1:]] for r in rows[1:]])
    assert np.max(np.abs(table - np.eye(4)[[0, 1, 3, 2]])) < 1e-3


def test_truth_table_only(tmp_path, scenario, capsys):
    rc, _ = run(capsys, "truth-table", "--scenario", scenario, "--out", tmp_path)
    assert rc == 0
    names = {p.name for p in tmp_path.iterdir()}
    assert "truth_table.csv" in names and "populations.png" not in names


def test_sweep(tmp_path, scenario, capsys):
    rc, cap = run(capsys, "sweep", "--scenario", scenario, "--out", tmp_path)
    assert rc == 0
    rows = read_rows(tmp_path / "sweep.csv")
    assert rows[0] == ["tau", "average_fidelity", "min_correct_entry", "status"]
    assert len(rows) == 3 and all(r[-1] == "ok" for r in rows[1:])
    assert float(rows[1][1]) > 0.999
    assert (tmp_path / "sweep.png").exists()


def test_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text(FAST.replace('{ value = 30, unit = "2pi*MHz" }', "30"))
    rc, cap = run(capsys, "simulate", "--scenario", bad, "--out", tmp_path / "o")
    assert rc == 2
    assert "drive.omega" in cap.err
    rc, cap = run(capsys, "simulate", "--scenario", "no-such-scenario")
    assert rc == 2


def test_domain_error_exit_code(tmp_path, scenario, capsys, monkeypatch):
    def boom(sc, out):
        raise IntegrationError("step size underflow")
    monkeypatch.setattr(cli, "cmd_rab_solve", boom)
    rc, cap = run(capsys, "rab-solve", "--scenario", scenario, "--out", tmp_path)
    assert rc == 1
    assert "IntegrationError" in cap.err
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["status"] == "error"


def test_model_override(tmp_path, scenario, capsys):
    rc, cap = run(capsys, "design-pulse", "--scenario", scenario, "--model", "full-rw", "--out", tmp_path)
    assert rc == 0
    header = (tmp_path / "waveform.csv").read_text().splitlines()
    assert "# model = full-rotating-wave" in header
