import csv
import json

import pytest

from txselect.cli import main


@pytest.fixture
def sim_dir(tmp_path):
    out = tmp_path / "sim"
    cfg = tmp_path / "sim.json"
    cfg.write_text(json.dumps({"simulate": {"n": 1500, "uncertainty_weight": 0.5}}))
    assert main(["simulate", "--config", str(cfg), "--seed", "2", "--out", str(out)]) == 0
    return out


def write_config(tmp_path, sim_dir, **kw):
    d = {"data": {"path": str(sim_dir / "data.csv")}, "method": "HT.ST",
         "estimator": {"heuristic_columns": [0, 1]},
         "constraints": [{"metric": 1, "direction": "band", "threshold": 0.05}],
         "optimizer": {"mcsa": {"N": 300, "L": 10}}, **kw}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(d))
    return str(path)


def test_simulate_writes_files(sim_dir):
    assert (sim_dir / "data.csv").exists()
    schema = json.loads((sim_dir / "data.schema.json").read_text())
    assert schema["counterfactual_columns"]


def test_stagewise_run(tmp_path, sim_dir, capsys):
    cfg = write_config(tmp_path, sim_dir)
    out = str(tmp_path / "run")
    for cmd in ("fit-effects", "merge", "optimize"):
        assert main([cmd, "--config", cfg, "--out", out]) == 0
    assert main(["bootstrap", "--config", cfg, "--out", out, "-B", "3"]) == 0
    pol = tmp_path / "run" / "policy_corrected.json"
    assert json.loads(pol.read_text())["bias_corrected"] is True
    capsys.readouterr()
    assert main(["evaluate", "--policy", str(pol), "--data", str(sim_dir / "data.csv")]) == 0
    result = json.loads(capsys.readouterr().out)
    assert result["units"] == 1500

    scored = tmp_path / "scored.csv"
    assert main(["score", "--policy", str(pol), "--features", str(sim_dir / "data.csv"),
                 "--out", str(scored)]) == 0
    rows = list(csv.reader(scored.open()))
    assert rows[0] == ["row", "p0", "p1", "p2", "p3"] and len(rows) == 1501
    assert main(["score", "--policy", str(pol), "--features", str(sim_dir / "data.csv"),
                 "--draw", "--out", str(scored)]) == 0
    assert {r[1] for r in list(csv.reader(scored.open()))[1:]} <= {"0", "1", "2", "3"}


def test_pipeline_single_tree_flag(tmp_path, sim_dir):
    cfg = write_config(tmp_path, sim_dir, method="CT.ST")
    out = tmp_path / "pipe"
    assert main(["pipeline", "--config", cfg, "--out", str(out), "--single-tree-objective"]) == 0
    pol = json.loads((out / "policy.json").read_text())
    assert all("&" not in c["id"] for c in pol["cohorts"]["cohorts"])


def test_config_error_exit_code(tmp_path, sim_dir):
    assert main(["pipeline", "--config", str(tmp_path / "missing.json")]) == 2
    cfg = write_config(tmp_path, sim_dir, method="CF.DT", optimizer={"kind": "stochastic"})
    assert main(["pipeline", "--config", cfg]) == 2


def test_infeasible_exit_code(tmp_path, sim_dir):
    cfg = write_config(tmp_path, sim_dir, method="TM.DT", optimizer={},
                       estimator={"regressor": {"n_estimators": 5}},
                       constraints=[{"metric": 1, "direction": "ge", "threshold": 50.0}])
    assert main(["pipeline", "--config", cfg, "--out", str(tmp_path / "o")]) == 3


def test_data_error_exit_code(tmp_path, sim_dir):
    bad = tmp_path / "bad.csv"
    lines = (sim_dir / "data.csv").read_text().splitlines()
    first = lines[1].split(",")
    first[-1] = "oops"
    bad.write_text("\n".join([lines[0], ",".join(first), *lines[2:]]) + "\n")
    (tmp_path / "bad.schema.json").write_text((sim_dir / "data.schema.json").read_text())
    cfg = write_config(tmp_path, sim_dir, data={"path": str(bad)})
    assert main(["pipeline", "--config", cfg, "--out", str(tmp_path / "o")]) == 4


def test_score_missing_columns(tmp_path, sim_dir):
    cfg = write_config(tmp_path, sim_dir)
    out = tmp_path / "o"
    assert main(["pipeline", "--config", cfg, "--out", str(out)]) == 0
    feats = tmp_path / "f.csv"
    feats.write_text("H1\n0.5\n")
    assert main(["score", "--policy", str(out / "policy.json"), "--features", str(feats)]) == 4
