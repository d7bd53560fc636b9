import json

import numpy as np
import pytest
import yaml

from bayesmfg import io
from bayesmfg.config import DEFAULTS, ConfigError, RunConfig, env_overrides


def test_field_roundtrip_with_sidecar(tmp_path, rng):
    arr = rng.standard_normal((3, 4, 5))
    io.write_field(tmp_path, "f", arr, ("t", "z", "x"), {"x": np.arange(5) / 5})
    back, header = io.read_field(tmp_path, "f")
    np.testing.assert_array_equal(back, arr)
    assert header["shape"] == [3, 4, 5] and header["axes"] == ["t", "z", "x"]
    assert header["dtype_width"] == 8 and header["schema_version"] == io.SCHEMA_VERSION
    assert (tmp_path / "f.bin").stat().st_size == arr.size * 8
    rows = io.read_table(tmp_path / "f.csv")
    assert len(rows["value"]) == arr.size
    assert float(rows["value"][7]) == arr.ravel()[7]
    assert rows["x"][1] == repr(0.2)


def test_large_fields_skip_csv(tmp_path):
    io.write_field(tmp_path, "big", np.zeros(io.CSV_MIRROR_LIMIT + 1), ("i",))
    assert not (tmp_path / "big.csv").exists()


def test_field_argument_checks(tmp_path):
    with pytest.raises(ValueError):
        io.write_field(tmp_path, "f", np.zeros((2, 2)), ("a",))
    with pytest.raises(ValueError):
        io.write_field(tmp_path, "f", np.zeros((2, 2)), ("a", "b"), {"a": [0, 1, 2]})


def test_json_is_canonical(tmp_path):
    io.write_json(tmp_path / "a.json", {"b": np.float64(1.5), "a": np.arange(2), "c": np.inf, "d": np.bool_(True)})
    text = (tmp_path / "a.json").read_text()
    data = json.loads(text)
    assert list(data) == ["a", "b", "c", "d", "schema_version"]
    assert data["c"] == "inf" and data["d"] is True


def test_table_lengths_must_match(tmp_path):
    with pytest.raises(ValueError):
        io.write_table(tmp_path / "t.csv", {"a": [1, 2], "b": [1]})


def test_defaults_validate_and_build():
    cfg = RunConfig.from_dict({})
    pb = cfg.build_problem()
    assert pb.grid.Nt == 100 and pb.Q == 8
    assert pb.grid.Zmax == pytest.approx(pb.quad.s_max + 8.0)
    assert cfg.sim_delta() == pytest.approx(0.005)
    assert cfg.sim_sizes() == [100, 1000, 10000]


def test_all_errors_are_reported_with_paths():
    with pytest.raises(ConfigError) as info:
        RunConfig.from_dict({"grid": {"Nt": 1, "Zmax": 1.0}, "solver": {"damping": "x", "theta": 0.2},
                             "model": {"cost": {"name": "nope"}}, "sim": {"seed": -1}})
    paths = {p for p, _ in info.value.errors}
    assert {"grid.Nt", "solver.damping", "solver.theta", "model.cost.name", "sim.seed"} <= paths


def test_zmax_lower_bound_is_enforced():
    with pytest.raises(ConfigError, match="grid.Zmax"):
        RunConfig.from_dict({"grid": {"Zmax": 5.0}})
    assert RunConfig.from_dict({"grid": {"Zmax": 20.0}}).build_problem().grid.Zmax == 20.0


def test_unknown_blocks_and_fields():
    with pytest.raises(ConfigError, match="unknown block"):
        RunConfig.from_dict({"solvr": {}})
    with pytest.raises(ConfigError, match="unknown field"):
        RunConfig.from_dict({"grid": {"nt": 3}})
    with pytest.raises(ConfigError, match="model.cost.params"):
        RunConfig.from_dict({"model": {"cost": {"name": "crowd_aversion", "params": {"bogus": 1}}}})


def test_yaml_loading_keeps_source_text(tmp_path):
    text = "# comment\nsolver:\n  Q: 4\n"
    (tmp_path / "c.yaml").write_text(text)
    cfg = RunConfig.load(tmp_path / "c.yaml")
    assert cfg.source_text == text and cfg.solver["Q"] == 4
    (tmp_path / "bad.yaml").write_text("grid: [")
    with pytest.raises(ConfigError, match="YAML"):
        RunConfig.load(tmp_path / "bad.yaml")


def test_overrides_and_environment():
    cfg = RunConfig.from_dict({}).with_overrides(out="elsewhere", seed=42)
    assert str(cfg.output_dir) == "elsewhere" and cfg.sim["seed"] == 42
    env = {"BAYESMFG_SEED": "7", "BAYESMFG_STRICT": "yes", "BAYESMFG_WORKERS": "3", "OTHER": "1"}
    assert env_overrides(env) == {"seed": 7, "strict": True, "workers": 3}
    with pytest.raises(ConfigError):
        env_overrides({"BAYESMFG_WORKERS": "many"})


def test_defaults_dump_as_yaml():
    assert yaml.safe_load(yaml.safe_dump(DEFAULTS)) == DEFAULTS
