import hashlib

import pytest
import yaml

from bayesmfg import io
from bayesmfg.cli import EXIT_CONFIG, EXIT_GATE, EXIT_OK, EXIT_SOLVER, main

SMALL = {"grid": {"Nt": 40, "Nx": 32, "Nz": 32}, "solver": {"Q": 4}}


def write_config(path, **blocks):
    data = {k: dict(v) for k, v in SMALL.items()}
    for key, value in blocks.items():
        data.setdefault(key, {}).update(value)
    text = "# test run\n" + yaml.safe_dump(data, sort_keys=False)
    path.write_text(text)
    return path, text


def digest(directory):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(directory.iterdir())}


def test_solve_uncoupled_fixture(tmp_path):
    cfg, text = write_config(tmp_path / "c.yaml", model={"cost": {"name": "state_target"}})
    out = tmp_path / "run"
    assert main(["solve", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    summary = io.read_json(out / "diagnostics.json")
    assert summary["status"] == "converged" and summary["iterations"] == 1
    assert (out / "config.yaml").read_text() == text
    for name in ("u", "tau", "alpha", "mu"):
        header = io.read_json(out / f"{name}.json")
        assert header["schema_version"] == 1
        assert (out / f"{name}.bin").exists()
    u, header = io.read_field(out, "u")
    assert u.shape == (40, 32, 32) and header["axes"] == ["t", "z", "x"]
    assert io.read_table(out / "residuals.csv")["iteration"] == ["0", "1"]


def test_non_convergence_is_data_unless_strict(tmp_path):
    cfg, _ = write_config(tmp_path / "c.yaml", solver={"k_max": 1, "tol": 1e-12})
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path / "a")]) == EXIT_OK
    assert io.read_json(tmp_path / "a" / "diagnostics.json")["status"] == "non-converged"
    assert main(["--strict", "solve", "--config", str(cfg), "--out", str(tmp_path / "b")]) == EXIT_GATE
    env = {"BAYESMFG_STRICT": "1", "BAYESMFG_CONFIG": str(cfg), "BAYESMFG_OUT": str(tmp_path / "c")}
    assert main(["solve"], environ=env) == EXIT_GATE


def test_configuration_errors_exit_2(tmp_path, capsys):
    cfg, _ = write_config(tmp_path / "c.yaml", solver={"tol": -1}, sim={"N": 1})
    assert main(["solve", "--config", str(cfg)]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "solver.tol" in err and "sim.N" in err
    assert main(["solve", "--config", str(tmp_path / "missing.yaml")]) == EXIT_CONFIG
    assert main(["frobnicate"]) == EXIT_CONFIG
    assert main(["solve", "--workers", "0", "--out", str(tmp_path / "w")]) == EXIT_CONFIG


def test_solver_errors_exit_3_with_module(tmp_path, capsys):
    cfg, _ = write_config(tmp_path / "c.yaml", grid={"Nt": 3, "Nx": 64, "Nz": 16},
                          model={"cost": {"name": "crowd_aversion", "params": {"crowd": 40.0, "weight": 40.0}}})
    out = tmp_path / "run"
    assert main(["solve", "--config", str(cfg), "--out", str(out)]) == EXIT_SOLVER
    err = io.read_json(out / "error.json")
    assert err["module"] == "bayesmfg.hjb"
    assert "Nt >=" in err["message"]
    assert "bayesmfg.hjb" in capsys.readouterr().err


def test_simulate_with_equilibrium_deviation_reports_zero(tmp_path):
    cfg, _ = write_config(tmp_path / "c.yaml",
                          sim={"N": [20, 40], "replicas": 2, "n_probes": 4, "deviation": "equilibrium"})
    out = tmp_path / "run"
    assert main(["simulate", "--config", str(cfg), "--out", str(out), "--seed", "3"]) == EXIT_OK
    table = io.read_table(out / "epsilon.csv")
    assert [float(e) for e in table["epsilon"]] == [0.0, 0.0]
    costs = io.read_table(out / "costs_N40.csv")
    assert len(costs["cost"]) == 40
    summary = io.read_json(out / "simulate.json")
    assert summary["deviation"] == "equilibrium" and len(summary["runs"]) == 2
    assert io.read_json(out / "run.json")["effective_config"]["sim"]["seed"] == 3


def test_check_monotone_verdicts(tmp_path):
    good, _ = write_config(tmp_path / "g.yaml", model={"cost": {"name": "crowd_aversion"}})
    bad, _ = write_config(tmp_path / "b.yaml", model={"cost": {"name": "crowd_aversion", "params": {"crowd": -1.0}}})
    assert main(["check-monotone", "--config", str(good), "--out", str(tmp_path / "g")]) == EXIT_OK
    assert io.read_json(tmp_path / "g" / "monotone.json")["monotone"] is True
    assert main(["check-monotone", "--config", str(bad), "--out", str(tmp_path / "b")]) == EXIT_GATE


def test_validate_table_and_exit_code(tmp_path, capsys):
    cfg, _ = write_config(tmp_path / "c.yaml")
    out = tmp_path / "run"
    code = main(["validate", "--skip-orders", "--config", str(cfg), "--out", str(out)])
    report = io.read_json(out / "validate.json")
    assert code == (EXIT_OK if report["passed"] else EXIT_GATE)
    printed = capsys.readouterr().out
    assert "Bayes density identity" in printed and ("PASS" in printed)
    assert len(io.read_table(out / "validate.csv")["check"]) == len(report["checks"])


@pytest.mark.parametrize("command", ["solve", "simulate"])
def test_reruns_are_bit_identical(tmp_path, command):
    cfg, _ = write_config(tmp_path / "c.yaml", sim={"N": [20], "replicas": 2, "n_probes": 4})
    out = tmp_path / "run"
    assert main([command, "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    first = digest(out)
    assert main([command, "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    assert digest(out) == first
