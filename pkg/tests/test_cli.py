from __future__ import annotations

import json

import pytest
from click.testing import CliRunner

from branecalc.cli import main, status_of

QUADRATIC = '{"coeffs": [{"i": 1, "j": 2, "monomial": [1, 1], "coeff": 1}]}'
CONSTANT = '{"coeffs": [{"i": 1, "j": 2, "monomial": [0, 0], "coeff": 1}]}'


def run(*args: str):
    result = CliRunner().invoke(main, list(args))
    report = json.loads(result.output) if result.exit_code in (0, 1, 3) and result.output.startswith("{") else None
    return result, report


def test_report_envelope():
    result, report = run("graphs", "--m", "2", "--n", "1")
    assert result.exit_code == 0
    assert set(report) == {"schema_version", "command", "config", "status", "checks", "result"}
    assert report["command"] == "graphs" and report["status"] == "pass"
    assert report["result"]["count"] == 1


def test_graphs_without_inputs_is_empty():
    result, report = run("graphs", "--m", "0", "--n", "0")
    assert result.exit_code == 0 and report["result"]["count"] == 0


def test_unit_weight_within_tolerance():
    result, report = run("weight", "--graph", "0 3 1 | 0>2 |", "--kind", "mp", "--samples", "20000", "--expect", "1")
    assert result.exit_code == 0, result.output
    (check,) = report["checks"]
    assert check["pass"] and check["mode"] == "numeric"


def test_pm_on_a_left_to_right_edge_is_zero():
    result, report = run("weight", "--graph", "0 3 1 | 0>2 |", "--kind", "pm", "--samples", "2000")
    assert result.exit_code == 0
    assert report["result"]["estimate"]["value"] == 0
    assert report["result"]["identically_zero_edges"] == [{"edge": "0>2", "kind": "pm", "non_vanishing_kinds": ["mp"]}]


def test_wrong_expectation_is_a_tolerance_failure():
    result, report = run("weight", "--graph", "0 3 1 | 0>2 |", "--kind", "mp", "--samples", "20000", "--expect", "3")
    assert result.exit_code == 3 and report["status"] == "tolerance_failure"


def test_reruns_are_byte_identical():
    args = ("weight", "--graph", "0 3 1 | 0>2 |", "--kind", "mp", "--samples", "30000", "--seed", "7")
    first, _ = run(*args)
    second, _ = run(*args)
    assert first.output == second.output


def test_out_file(tmp_path):
    target = tmp_path / "report.json"
    result, _ = run("graphs", "--m", "1", "--n", "1", "--out", str(target))
    assert result.exit_code == 0 and result.output == ""
    assert json.loads(target.read_text())["result"]["count"] == 1


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# defaults for a quick run\nsamples = 1500\nseed = 4\n")
    result = CliRunner().invoke(main, ["--config", str(cfg), "weight", "--graph", "0 3 1 | 0>2 |", "--kind", "mp"])
    assert result.exit_code == 0
    assert json.loads(result.output)["config"]["samples"] == 1500
    result = CliRunner().invoke(main, ["--config", str(cfg), "weight", "--graph", "0 3 1 | 0>2 |", "--kind", "mp", "--samples", "2500"])
    config = json.loads(result.output)["config"]
    assert config["samples"] == 2500 and config["seed"] == 4


@pytest.mark.parametrize(
    "args",
    [
        ("graphs", "--dims", "1,2"),
        ("graphs", "--dims", "a,b,c,d"),
        ("weight", "--graph", "not a graph"),
        ("weight", "--graph", "0 3 1 | 0>2 |", "--kind", "xx"),
        ("hochschild", "--degrees", "0,x"),
        ("graphs", "--type", "K", "--m", "2", "--n", "1"),
    ],
)
def test_usage_errors_exit_two(args):
    result = CliRunner().invoke(main, list(args))
    assert result.exit_code == 2


def test_forced_bimodule_passes():
    result, report = run("bimodule", "--forced", "--total-arity", "3", "--max-arity", "2,2", "--npoly", "1")
    assert result.exit_code == 0, result.output
    assert report["checks"] and all(c["pass"] for c in report["checks"])


def test_koszul_command():
    result, report = run("koszul", "--base", "1", "--fiber", "2", "--truncation", "3", "--pmax", "2")
    assert result.exit_code == 0, result.output
    assert report["status"] == "pass"


def test_hochschild_command():
    result, report = run("hochschild", "--window", "2", "--cases", "3", "--total-arity", "3", "--degrees", "0,1", "--internal", "0")
    assert result.exit_code == 0, result.output


def test_quantize_quadratic_bivector():
    result, report = run("quantize", "--dims", "0,0,2,0", "--poisson", QUADRATIC, "--samples", "20000")
    assert result.exit_code == 0, result.output
    names = {c["check"] for c in report["checks"]}
    assert {"grading_A", "grading_B", "bracket", "curvature", "concentration"} <= names


def test_quantize_constant_bivector_fails_grading():
    result, report = run("quantize", "--dims", "0,0,2,0", "--poisson", CONSTANT, "--samples", "5000")
    assert result.exit_code == 1 and report["status"] == "check_failure"


def test_status_rules():
    assert status_of([]) == ("pass", 0)
    assert status_of([{"pass": False, "mode": "numeric"}]) == ("tolerance_failure", 3)
    assert status_of([{"pass": False, "mode": "numeric"}, {"pass": False, "mode": "exact"}]) == ("check_failure", 1)
