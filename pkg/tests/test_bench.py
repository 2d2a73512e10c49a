import csv
import json

import numpy as np
import pytest

from proxtv.bench import (
    ConfigError,
    ExactSolution,
    ExperimentConfig,
    build_meshes,
    canned_config,
    exact_u,
    exact_z,
    l2_error_u,
    run_test,
)
from proxtv.bench import runner
from proxtv.bench.cli import main
from proxtv.fem import FESpace
from proxtv.mesh import uniform_mesh


def test_exact_values():
    assert exact_u(np.array([0.1, 0.2])) == pytest.approx(0.6)
    assert exact_u(np.array([0.6, 0.0])) == 0.0
    assert np.allclose(exact_z(np.array([0.25, 0.0])), [-0.5, 0.0])
    assert np.allclose(exact_z(np.array([0.0, 1.0])), [0.0, -0.5])
    # a small alpha flattens the plateau to zero
    assert exact_u(np.zeros(2), alpha=2.0) == 0.0


def test_exact_dual_is_continuous_and_admissible():
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, (2000, 2))
    assert np.linalg.norm(exact_z(x), axis=1).max() <= 1.0 + 1e-15
    theta = rng.uniform(0, 2 * np.pi, 50)
    on = 0.5 * np.stack([np.cos(theta), np.sin(theta)], axis=1)
    assert np.allclose(exact_z(on * (1 - 1e-10)), exact_z(on * (1 + 1e-10)), atol=1e-8)
    assert np.allclose(np.linalg.norm(exact_z(on), axis=1), 1.0)


@pytest.mark.parametrize("point", [(0.1, 0.2), (-0.3, 0.1), (0.7, 0.2), (-0.5, -0.6)])
def test_exact_pair_solves_the_optimality_condition(point):
    # alpha (u - g) = div z away from the circle, checked with central differences
    x, h = np.array(point), 1e-5
    div = sum((exact_z(x + h * e) - exact_z(x - h * e))[i] / (2 * h) for i, e in enumerate(np.eye(2)))
    g = float(np.linalg.norm(x) < 0.5)
    assert 10.0 * (exact_u(x) - g) == pytest.approx(div, abs=1e-6)


def test_exact_parameters_validated():
    with pytest.raises(ValueError):
        ExactSolution(r=1.5)
    with pytest.raises(ValueError):
        exact_u(np.zeros(2), alpha=0.0)


def test_l2_error_of_zero():
    space = FESpace(uniform_mesh(4))
    err = l2_error_u(space, np.zeros(space.mesh.n_vertices), ExactSolution())
    assert err == pytest.approx(0.6 * np.sqrt(np.pi / 4), abs=2e-2)


def test_config_round_trip(tmp_path):
    cfg = ExperimentConfig(name="x", levels=[1, 2], gammas=[0.5], strategies=["S2", "primal"], extra={"k": 1})
    path = tmp_path / "c.json"
    cfg.to_json(path)
    back = ExperimentConfig.from_json(path)
    assert back == cfg and back.levels == (1, 2)
    assert cfg.with_overrides(levels=[3], gammas=None).levels == (3,)


@pytest.mark.parametrize(
    "bad",
    [
        {"name": ""},
        {"name": "x", "mesh": "hex"},
        {"name": "x", "levels": [-1]},
        {"name": "x", "levels": [1.5]},
        {"name": "x", "epsilon_powers": [0]},
        {"name": "x", "gammas": []},
        {"name": "x", "strategies": ["S9"]},
        {"name": "x", "radius": 1.0},
        {"name": "x", "handoff": -0.1},
        {"name": "x", "tau": 0},
        {"name": "x", "colour": "red"},
        {},
    ],
)
def test_config_validation(bad):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(bad)


def test_malformed_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json(path)


def test_canned_configs():
    t1, t2, t3, t4 = (canned_config(f"test{i}") for i in range(1, 5))
    assert t1.levels == (7,) and set(t1.strategies) == {"S1", "S2"} and len(t1.epsilon_powers) >= 4
    assert t2.strategies == ("S1",) and min(t2.gammas) == 0.25 and max(t2.gammas) == 512
    assert t3.levels == tuple(range(8)) and t3.handoff == 0.2 and "primal" in t3.strategies
    assert t4.mesh == "graded" and max(t4.levels) == 10 and set(t4.strategies) == {"S1star", "S2star"}
    with pytest.raises(ConfigError):
        canned_config("test5")


def test_graded_meshes_come_from_one_sequence():
    meshes = build_meshes(ExperimentConfig(name="g", mesh="graded", levels=(3, 1)))
    assert list(meshes) == [1, 3]
    assert meshes[3].n_triangles > meshes[1].n_triangles


def test_run_test_writes_histories_and_summary(tmp_path):
    cfg = ExperimentConfig(name="tiny", levels=(2, 3), gammas=(1.0, 4.0), strategies=("S1", "S2", "primal"),
                           export_vtk=True)
    summary = run_test(cfg, tmp_path)
    runs = summary["runs"]
    assert len(runs) == 2 * 2 * 3
    assert all(r["status"] == "ok" and r["converged"] for r in runs), [r["message"] for r in runs]
    on_disk = json.loads((tmp_path / "summary.json").read_text())
    assert on_disk["config"]["name"] == "tiny" and len(on_disk["runs"]) == len(runs)
    assert [m["level"] for m in on_disk["meshes"]] == [2, 3]
    for r in runs:
        rows = list(csv.DictReader((tmp_path / r["csv"]).open()))
        assert float(rows[-1]["residual"]) == pytest.approx(r["final_residual"])
        assert (tmp_path / r["vtk"]).exists()
    # the flow handoff is shared across gamma and run kinds on one mesh
    k0 = {(r["level"], r["strategy"], r["gamma"]): r["k0"] for r in runs}
    assert k0[(3, "S1", 1.0)] == k0[(3, "S1", 4.0)] == k0[(3, "primal", 1.0)] > 0
    assert k0[(3, "S2", 1.0)] == 0
    l2 = {r["level"]: r["l2_error"] for r in runs if r["strategy"] == "S1"}
    assert l2[3] < l2[2]


def test_run_test_records_failures(tmp_path, monkeypatch):
    def boom(*args, **kwargs):
        raise FloatingPointError("synthetic failure")

    monkeypatch.setattr(runner, "run_single", boom)
    summary = run_test(ExperimentConfig(name="f", levels=(1,), strategies=("S2",)), tmp_path)
    (run,) = summary["runs"]
    assert run["status"] == "error" and not run["converged"]
    assert "synthetic failure" in run["message"]


def test_cli_run_and_overrides(tmp_path, capsys):
    cfg_path = tmp_path / "c.json"
    ExperimentConfig(name="c", levels=(2,), strategies=("S2",), out_dir=str(tmp_path / "out")).to_json(cfg_path)
    assert main(["run", str(cfg_path), "--gamma", "2", "--gamma", "8"]) == 0
    out = capsys.readouterr().out
    assert out.count("converged") == 2 and "gamma=8" in out
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["config"]["gammas"] == [2.0, 8.0]


def test_cli_canned_test_with_overrides(tmp_path, capsys):
    assert main(["test3", "--level", "2", "--epsilon-power", "1", "--out-dir", str(tmp_path)]) == 0
    assert (tmp_path / "summary.json").exists()
    assert "primal" in capsys.readouterr().out


def test_cli_errors(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"name": "b", "levels": [-3]}))
    assert main(["run", str(bad)]) == 2
    assert main(["run", str(tmp_path / "missing.json")]) == 2
    assert "error" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["test1", "--strategy", "newton"])


def test_cli_mesh_info(tmp_path, capsys):
    vtk = tmp_path / "m.vtk"
    assert main(["mesh-info", "--level", "3", "--graded", "--export-vtk", str(vtk)]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["conforming"] and info["graded"] and vtk.exists()
    assert main(["mesh-info", "--level", "2"]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["n_triangles"] == 32 and info["min_angle_deg"] == pytest.approx(45.0)
