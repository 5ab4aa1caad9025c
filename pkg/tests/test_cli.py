import json
import subprocess
import sys

import pytest

from radshoot.cli import run
from radshoot.io import read_table

TROY = ["--family", "troy", "--n", "3"]


def test_check_hypotheses_exit_codes(capsys):
    assert run(["check-hypotheses", *TROY, "--smax", "10"]) == 0
    out = capsys.readouterr().out
    assert "f4p         pass" in out and "failed=none" in out
    assert run(["check-hypotheses", "--family", "troy", "--n", "4"]) == 1
    assert "failed=f4p" in capsys.readouterr().out
    assert run(["check-hypotheses", *TROY, "--require", "f1p"]) == 1
    assert run(["check-hypotheses", "--family", "pure_power:q=0.5", "--n", "3"]) == 0


@pytest.mark.parametrize("argv", [
    ["bogus"],
    ["scan", *TROY, "--frob", "1"],
    ["scan", *TROY, "--grid", "1,2"],
    ["scan", "--family", "nope", "--n", "3", "--grid", "2,3,4"],
    ["classify", *TROY],                      # missing --alpha
    ["classify", *TROY, "--alpha", "0.5"],    # below b
    ["trace", "--family", "troy", "--n", "1.5", "--alpha", "2"],
    ["check-hypotheses", *TROY, "--require", "f9"],
    [],
])
def test_usage_errors(argv, tmp_path):
    out = tmp_path / "o"
    assert run([*argv, "--out", str(out)] if argv and argv[0] != "bogus" else argv) == 2
    assert not out.exists()


def test_numerical_failure_exit_code(tmp_path):
    assert run(["solve", *TROY, "--k", "1", "--bracket", "5,6"]) == 3
    assert run(["functional", *TROY, "--alpha", "9", "--functional", "dirichletP"]) == 3


def test_config_file_and_override(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# shared settings\nfamily = troy\nn = 3\nrtol = 1e-9\n")
    out = tmp_path / "o"
    assert run(["classify", "--config", str(cfg), "--alpha", "5", "--rtol", "1e-10",
                "--out", str(out)]) == 0
    head = (out / "classification.txt").read_text().splitlines()[0]
    assert "rtol=1e-10" in head and "family=troy" in head and "alpha=5" in head
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour=blue\n")
    assert run(["classify", "--config", str(bad), "--alpha", "5"]) == 2
    assert run(["classify", "--config", str(tmp_path / "missing.cfg"), "--alpha", "5"]) == 2


def test_trace_outputs(tmp_path):
    out = tmp_path / "o"
    assert run(["trace", *TROY, "--alpha", "4", "--rmax", "12", "--out", str(out)]) == 0
    cols, rows = read_table(out / "trajectory.csv")
    assert cols == ["r", "u", "du", "phi", "dphi", "I"]
    assert float(rows[0][1]) == pytest.approx(4.0)
    ecols, erows = read_table(out / "events.csv")
    assert {r[0] for r in erows} <= {"u-zero", "du-zero", "phi-zero", "I-zero"}
    text = (out / "trajectory.csv").read_text()
    assert text.startswith("# radshoot=") and "rmax=12" in text.splitlines()[0]


def test_json_format(tmp_path):
    out = tmp_path / "o"
    assert run(["solve", *TROY, "--k", "1", "--bracket", "2,8", "--out", str(out),
                "--format", "json"]) == 0
    doc = json.loads((out / "bound_state.json").read_text())
    assert doc["config"]["command"] == "solve"
    assert doc["alpha_lo"] < doc["alpha_star"] < doc["alpha_hi"]
    assert doc["alpha_star"] == pytest.approx(4.41033597779, rel=1e-8)


def test_byte_stable(tmp_path):
    argv = ["scan", *TROY, "--grid", "2,10,40", "--k", "2"]
    assert run([*argv, "--out", str(tmp_path / "a")]) == 0
    assert run([*argv, "--out", str(tmp_path / "b"), "--jobs", "2"]) == 0
    assert (tmp_path / "a/scan.csv").read_bytes() == (tmp_path / "b/scan.csv").read_bytes()


def test_functional_and_dirichlet(tmp_path, capsys):
    out = tmp_path / "o"
    assert run(["functional", *TROY, "--alpha", "9.2", "--functional", "Q", "--out", str(out)]) == 0
    cols, rows = read_table(out / "functional_Q.csv")
    assert cols == ["s", "r", "du", "value"] and rows
    assert run(["functional", *TROY, "--alpha", "9.2", "--alpha2", "9.21", "--functional",
                "S12", "--branch", "2", "--out", str(out)]) == 0
    assert run(["functional", *TROY, "--alpha", "9.2", "--branch", "40"]) == 2
    assert run(["dirichlet", "--family", "pure_power:q=0.5", "--n", "3", "--rho", "1",
                "--k", "1", "--out", str(out)]) == 0
    assert "dirichlet: pass" in (out / "dirichlet.txt").read_text()


def test_compare_and_verify(tmp_path, capsys):
    assert run(["compare", *TROY, "--k", "2", "--bracket", "8,10"]) == 0
    assert "verdict=pass" in capsys.readouterr().out
    plan = tmp_path / "plan.json"
    plan.write_text(json.dumps([{"check": "I_monotone", "alpha": 5.0},
                                {"check": "wronskian", "alpha": 5.0}]))
    assert run(["verify", *TROY, "--plan", str(plan), "--out", str(tmp_path), "--format",
                "json"]) == 0
    doc = json.loads((tmp_path / "verify.json").read_text())
    assert doc["failed"] == 0 and len(doc["checks"]) == 2
    plan.write_text(json.dumps([{"check": "nope", "alpha": 5.0}]))
    assert run(["verify", *TROY, "--plan", str(plan)]) == 1


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "radshoot", "--version"], capture_output=True,
                          text=True)
    assert proc.returncode == 0 and "radshoot" in proc.stdout
