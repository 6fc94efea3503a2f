import csv
import json
import subprocess
import sys

import pytest

from epicampaign.cli import _improvement, main

SMALL_NET = {"type": "poisson", "lambda": 5.0, "k_min": 2, "k_max": 8}


def write_scenario(tmp_path, **overrides):
    data = {"network": SMALL_NET, "n_grid": 41, "beta": {"type": "constant", "value": 0.5},
            "gamma": {"type": "constant", "value": 1.0}, "b": 5.0, "i0": 0.02}
    data.update(overrides)
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(data))
    return path


def run(args, tmp_path, name="out"):
    out = tmp_path / name
    code = main(args + ["--out", str(out)])
    return code, out


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_solve_without_dynamics_keeps_the_seed(tmp_path):
    scn = write_scenario(tmp_path, beta={"type": "constant", "value": 0.0},
                         gamma={"type": "constant", "value": 0.0})
    code, out = run(["solve", "--scenario", str(scn)], tmp_path)
    assert code == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["J"] == pytest.approx(0.02, abs=1e-12)
    for name in ("controls.csv", "states.csv", "adjoints.csv", "resource.csv", "provenance.json"):
        assert (out / name).exists()


def test_provenance_records_outputs(tmp_path):
    scn = write_scenario(tmp_path)
    code, out = run(["solve", "--scenario", str(scn), "--seed", "3"], tmp_path)
    assert code == 0
    prov = json.loads((out / "provenance.json").read_text())
    assert prov["rng_seed"] == 3
    assert prov["subcommand"] == "solve"
    assert len(prov["scenario_sha256"]) == 64
    assert set(prov["outputs"]) >= {"summary.json", "controls.csv"}


def test_reruns_are_byte_identical(tmp_path):
    scn = write_scenario(tmp_path)
    args = ["simulate", "--scenario", str(scn), "--n-nodes", "500", "--n-runs", "3",
            "--control", "static"]
    _, a = run(args, tmp_path, "a")
    _, b = run(args, tmp_path, "b")
    for name in ("simulation.csv", "summary.json", "provenance.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_sweep_over_cost_is_nonincreasing(tmp_path):
    scn = write_scenario(tmp_path)
    code, out = run(["sweep", "--scenario", str(scn), "--sweep-param", "b",
                     "--sweep-values", "1,5,25,100"], tmp_path)
    assert code == 0
    rows = read_csv(out / "sweep.csv")
    J = [float(r["J_optimal"]) for r in rows]
    assert all(a >= b - 1e-10 for a, b in zip(J, J[1:]))
    for r in rows:
        assert float(r["J_optimal"]) >= float(r["J_static"]) - 1e-8
        assert float(r["J_joint"]) >= float(r["J_optimal"]) - 1e-8
    prov = json.loads((out / "provenance.json").read_text())
    assert prov["sweep"] == {"param": "b", "values": [1.0, 5.0, 25.0, 100.0]}


def test_validate_reports_agreement(tmp_path):
    scn = write_scenario(tmp_path)
    code, out = run(["validate", "--scenario", str(scn), "--n-nodes", "2000", "--n-runs", "4"], tmp_path)
    assert code == 0
    summary = json.loads((out / "summary.json").read_text())
    assert {"model_i_T", "mean_i_T", "terminal_gap", "tolerance", "agree"} <= set(summary)
    header = (out / "validate.csv").read_text().splitlines()[0]
    assert header == "t,model_i,mean_i,std_i"


def test_check_writes_both_bounds(tmp_path):
    scn = write_scenario(tmp_path, gamma={"type": "constant", "value": 0.0})
    code, out = run(["check", "--scenario", str(scn)], tmp_path)
    assert code == 0
    check = json.loads((out / "check.json").read_text())
    assert check["convergence_bound"]["lhs"] == 0.0
    assert check["convergence_bound"]["holds"] is True
    assert "lhs" in check["uniqueness_bound"]


def test_heuristic_and_joint_outputs(tmp_path):
    scn = write_scenario(tmp_path, seed={"mode": "optimize", "B_i0": 0.05})
    code, out = run(["heuristic", "--scenario", str(scn)], tmp_path, "h")
    assert code == 0
    assert set(json.loads((out / "heuristics.json").read_text())) == {"static", "two_stage"}
    code, out = run(["solve-joint", "--scenario", str(scn)], tmp_path, "j")
    assert code == 0
    assert (out / "seed.csv").read_text().startswith("k,i0_k\n")


def test_bad_config_exits_2(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"network": {"type": "hexagonal"}, "beta": {"type": "constant", "value": 1}}))
    code, _ = run(["solve", "--scenario", str(path)], tmp_path)
    assert code == 2
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and err[0].startswith("epicampaign: config:")


def test_unreachable_budget_exits_3(tmp_path, capsys):
    scn = write_scenario(tmp_path)
    code, _ = run(["solve-budget", "--scenario", str(scn), "--budget", "1e-12"], tmp_path)
    assert code == 3
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and err[0].startswith("epicampaign: bracket:")


def test_step_size_exits_4(tmp_path, capsys):
    scn = write_scenario(tmp_path, n_grid=3, beta={"type": "constant", "value": 4.0})
    code, _ = run(["simulate", "--scenario", str(scn), "--n-nodes", "50", "--n-runs", "1"], tmp_path)
    assert code == 4
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and err[0].startswith("epicampaign: blowup:")


def test_nonpositive_sweep_values_rejected(tmp_path):
    scn = write_scenario(tmp_path)
    with pytest.raises(SystemExit):
        main(["sweep", "--scenario", str(scn), "--out", str(tmp_path / "o"),
              "--sweep-param", "b", "--sweep-values", "1,-2"])


def test_improvement_guard():
    assert _improvement(0.3, 0.2) == pytest.approx(50.0)
    assert _improvement(0.3, 0.0) == pytest.approx(0.3)


def test_console_script_entry_point(tmp_path):
    scn = write_scenario(tmp_path)
    proc = subprocess.run([sys.executable, "-m", "epicampaign.cli", "check", "--scenario", str(scn),
                           "--out", str(tmp_path / "c")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "c" / "check.json").exists()
