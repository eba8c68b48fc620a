import json

import pytest

from timely_tracking.cli import main
from timely_tracking.experiments import read_csv


@pytest.fixture
def pop_file(tmp_path):
    def write(doc, name="pop.json"):
        path = tmp_path / name
        path.write_text(json.dumps(doc))
        return str(path)
    return write


UNIT = {"theta": 0.5, "total_rate": 2.0, "people": [{"lambda": 1.0, "mu": 1.0}],
        "policy": {"s": [1.0], "c": [1.0]}}


def test_eval_unit_example(pop_file, capsys):
    assert main(["eval", "--config", pop_file(UNIT), "--format", "json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["delta"] == pytest.approx(1 / 6, abs=1e-15)


def test_eval_csv(pop_file, capsys):
    assert main(["eval", "--config", pop_file(UNIT)]) == 0
    text = capsys.readouterr().out
    assert text.splitlines()[0] == "i,lambda,mu,s,c,fixed_label,delta1,delta2,delta"
    assert text.splitlines()[1].endswith(repr(1 / 6))


def test_eval_without_policy_fails(pop_file, capsys):
    doc = dict(UNIT)
    del doc["policy"]
    assert main(["eval", "--config", pop_file(doc)]) == 1
    assert "policy" in capsys.readouterr().err


def test_solve_twice_is_byte_identical(pop_file, tmp_path):
    cfg = pop_file({"theta": 0.5, "total_rate": 8.0,
                    "people": [{"lambda": 1.0, "mu": 0.5}, {"lambda": 0.3, "mu": 2.0},
                               {"lambda": 2.0, "mu": 0.2}]})
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["solve", "--config", cfg, "--seed", "7", "--format", "json", "--out", str(a)]) == 0
    assert main(["solve", "--config", cfg, "--seed", "7", "--format", "json", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    doc = json.loads(a.read_text())
    assert doc["reports"][0]["converged"]


def test_missing_config(capsys):
    assert main(["solve", "--config", "/nonexistent/pop.json"]) == 1
    assert "/nonexistent/pop.json" in capsys.readouterr().err


def test_unknown_flag(capsys):
    assert main(["solve", "--frobnicate"]) == 1
    assert "usage" in capsys.readouterr().err


def test_unknown_command(capsys):
    assert main(["plot"]) == 1


def test_invalid_population(pop_file, capsys):
    assert main(["solve", "--config", pop_file({"theta": 3, "total_rate": 1,
                                                "people": [{"lambda": 1, "mu": 1}]})]) == 1
    assert "theta" in capsys.readouterr().err


def test_bad_flag_values(pop_file):
    assert main(["solve", "--config", pop_file(UNIT), "--restarts", "0"]) == 1
    assert main(["simulate", "--config", pop_file(UNIT), "--horizon", "-1"]) == 1
    assert main(["solve", "--config", pop_file(UNIT), "--seed", "-3"]) == 1


def test_strict_non_convergence(pop_file, tmp_path):
    doc = {"theta": 0.5, "total_rate": 8.0, "solver": {"max_iter": 1, "restarts": 2},
           "people": [{"lambda": 1.0, "mu": 0.5}, {"lambda": 0.3, "mu": 2.0},
                      {"lambda": 0.9, "mu": 0.7}]}
    out = str(tmp_path / "x.csv")
    assert main(["solve", "--config", pop_file(doc), "--out", out]) == 0
    assert main(["solve", "--config", pop_file(doc), "--strict", "--out", out]) == 2


def test_simulate(pop_file, capsys):
    assert main(["simulate", "--config", pop_file(UNIT), "--horizon", "20000",
                 "--seed", "3", "--format", "json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert abs(doc["delta_hat"] - 1 / 6) <= 3 * doc["stderr"]


def test_fig_commands_write_files(tmp_path):
    out = tmp_path / "fig5.csv"
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"profile": {"n": 10}, "sweep": {"param": "C", "values": [5, 16]}}))
    assert main(["fig5", "--config", str(cfg), "--restarts", "5", "--out", str(out)]) == 0
    rows = read_csv(out.read_text())
    assert [r["C"] for r in rows] == [5.0, 16.0]
    assert rows[0]["delta"] > rows[1]["delta"]
