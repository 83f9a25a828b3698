import csv
import json

import pytest

from conftest import two_bus_spec
from solargrid.cli import EXIT_ERROR, EXIT_NONCOMPLIANT, EXIT_OK, main, resolve_case


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_reference_alias_resolves(reference_path):
    assert resolve_case("reference") == reference_path
    assert resolve_case("reference_case.json") == reference_path


def test_sizing(tmp_path, capsys):
    out = tmp_path / "sizing.csv"
    assert main(["sizing", "--out", str(out)]) == EXIT_OK
    assert "8400" in capsys.readouterr().out
    assert len(_rows(out)) >= 10


def test_loadflow(tmp_path):
    assert main(["loadflow", "reference", "--out", str(tmp_path)]) == EXIT_OK
    rows = _rows(tmp_path / "loadflow.csv")
    assert {r["id"] for r in rows} >= {"Switch Gear", "LOADBUS", "GRID"}


def test_compensate_keeps_study_section(tmp_path):
    out = tmp_path / "comp.json"
    assert main(["compensate", "reference", "--bus", "SWGR", "--out", str(out)]) == EXIT_OK
    data = json.loads(out.read_text())
    assert "study" in data
    svc = [s for s in data["shunts"] if s["kind"] == "SvcFixedQ"]
    assert len(svc) == 1 and svc[0]["bus"] == "SWGR" and svc[0]["q_mvar"] > 0
    # the written case loads and solves
    assert main(["loadflow", str(out), "--out", str(tmp_path)]) == EXIT_OK


def test_compensate_unknown_meter(tmp_path):
    assert main(["compensate", "reference", "--bus", "SWGR", "--meter", "nope",
                 "--out", str(tmp_path / "x.json")]) == EXIT_ERROR


def test_harmonics_exit_codes(tmp_path):
    assert main(["harmonics", "reference", "--out", str(tmp_path)]) == EXIT_NONCOMPLIANT
    rows = _rows(tmp_path / "harmonics.csv")
    assert {int(r["order"]) for r in rows} == {5, 7, 11, 13}


def test_stability(tmp_path, capsys):
    spec = two_bus_spec(p_mw=100.0, x_pu=0.1)
    case = tmp_path / "two.json"
    case.write_text(json.dumps(spec))
    assert main(["stability", str(case), "--bus", "L", "--out", str(tmp_path)]) == EXIT_OK
    assert "loading margin" in capsys.readouterr().out
    curve = _rows(tmp_path / "nose_curve.csv")
    assert float(curve[0]["scale"]) == pytest.approx(1.0)


def test_train_and_eval(tmp_path, capsys):
    agent = tmp_path / "agent.json"
    log = tmp_path / "log.csv"
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"hyperparameters": {"episodes": 40}}))
    assert main(["train-svc", "--config", str(cfg), "--seed", "7", "--out", str(agent),
                 "--log", str(log)]) == EXIT_OK
    assert len(_rows(log)) == 40
    assert json.loads(agent.read_text())["config"]["seed"] == 7
    trace = tmp_path / "trace.csv"
    assert main(["eval-svc", "--agent", str(agent), "--disturbance", "step:-0.07@10",
                 "--steps", "20", "--out", str(trace)]) == EXIT_OK
    assert [r["step"] for r in _rows(trace)] == [str(k) for k in range(20)]


def test_eval_rejects_bad_disturbance(tmp_path):
    agent = tmp_path / "agent.json"
    assert main(["train-svc", "--episodes", "1", "--out", str(agent)]) == EXIT_OK
    assert main(["eval-svc", "--agent", str(agent), "--disturbance", "ramp"]) == EXIT_ERROR


def test_study_compliant(tmp_path, capsys):
    assert main(["study", "reference", "--out", str(tmp_path)]) == EXIT_OK
    assert "RESULT: COMPLIANT" in capsys.readouterr().out
    assert all(r["status"] == "PASS" for r in _rows(tmp_path / "compliance.csv"))


def test_study_no_filters_is_noncompliant(capsys):
    assert main(["study", "reference", "--no-filters"]) == EXIT_NONCOMPLIANT
    assert "Voltage THD" in capsys.readouterr().out


def test_study_flags_override_policy_file(tmp_path):
    pol = tmp_path / "policy.json"
    pol.write_text(json.dumps({"filters_enabled": False}))
    assert main(["study", "reference", "--policy", str(pol)]) == EXIT_NONCOMPLIANT
    pol.write_text(json.dumps({"pf_threshold": 0.5}))
    assert main(["study", "reference", "--policy", str(pol), "--pf-threshold", "0.95",
                 "--out", str(tmp_path / "r")]) == EXIT_OK
    assert "PF threshold: 0.95" in (tmp_path / "r" / "summary.txt").read_text()


def test_study_solver_failure_exits_2(tmp_path):
    case = tmp_path / "collapse.json"
    case.write_text(json.dumps(two_bus_spec(p_mw=2000.0, x_pu=0.2)))
    assert main(["study", str(case)]) == EXIT_ERROR


def test_missing_case_exits_2(tmp_path):
    assert main(["study", str(tmp_path / "nope.json")]) == EXIT_ERROR
