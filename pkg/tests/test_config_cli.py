import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from tlsph.cases import build_case, column_stretch, initial_velocity, run_case
from tlsph.cli import cli
from tlsph.config import (CASE_IDS, ConfigError, builtin_path, from_dict, load_builtin,
                          load_config)
from tlsph.io import read_csv, read_snapshot, write_csv, write_report, write_snapshot

PRESETS = [(c, p) for c in CASE_IDS for p in ("quick", "paper")]


@pytest.mark.parametrize("case,preset", PRESETS)
def test_builtin_configs_round_trip(case, preset):
    path = builtin_path(case, preset)
    raw = yaml.safe_load(path.read_text())
    cfg = load_config(path)
    assert cfg.case == case and cfg.preset == preset
    assert cfg.to_dict() == raw
    assert from_dict(yaml.safe_load(cfg.dump())).to_dict() == raw


def _twisting_dict():
    return yaml.safe_load(builtin_path("twisting_column").read_text())


def test_missing_omega_is_named():
    d = _twisting_dict()
    del d["initial"]["omega3"]
    with pytest.raises(ConfigError) as info:
        from_dict(d)
    assert "initial.omega3" in [p for p, _ in info.value.problems]


@pytest.mark.parametrize("mutate,path", [
    (lambda d: d.update(case="nope"), "case"),
    (lambda d: d["material"].update(poisson_ratio=0.5), "material.poisson_ratio"),
    (lambda d: d["kernel"].update(correction="W2"), "kernel.correction"),
    (lambda d: d["time"].update(alpha_cfl=1.5), "time.alpha_cfl"),
    (lambda d: d["jst"].update(harmonic="exact"), "jst.harmonic"),
    (lambda d: d["jst"].update(eta4=-1.0), "jst.eta4"),
    (lambda d: d["geometry"].update(extents=[1.0, 1.0]), "geometry.extents"),
    (lambda d: d["boundary"][0].update(kind="glue"), "boundary[0].kind"),
    (lambda d: d.update(colour="red"), "colour"),
    (lambda d: d.pop("time"), "time"),
])
def test_validation_reports_field_paths(mutate, path):
    d = _twisting_dict()
    mutate(d)
    with pytest.raises(ConfigError) as info:
        from_dict(d)
    assert any(p.startswith(path) for p, _ in info.value.problems), info.value.problems


def test_initial_velocities():
    cfg = load_builtin("spinning_plate")
    case = build_case(cfg)
    X = case.domain.ref_positions
    v = case.state.velocity(case.domain)
    assert np.allclose(v, 105.0 * np.stack([-X[:, 1], X[:, 0]], axis=1))

    cfg = load_builtin("twisting_column")
    from tlsph.cases import build_domain, material_of
    dom = build_domain(cfg)
    X = dom.ref_positions
    v = initial_velocity(cfg, dom, material_of(cfg))
    w = 105.0 * np.sin(np.pi * X[:, 2] / 12.0)
    assert np.allclose(v, np.stack([-w * X[:, 1], w * X[:, 0], 0 * w], axis=1))

    cfg = load_builtin("bending_column")
    dom = build_domain(cfg)
    v = initial_velocity(cfg, dom, material_of(cfg))
    assert np.allclose(v, np.stack([0 * dom.ref_positions[:, 2], 5.0 * dom.ref_positions[:, 2] / 3,
                                    0 * dom.ref_positions[:, 2]], axis=1))


def test_column_stretch_formula():
    cfg = load_builtin("pulling_column")
    case = build_case(cfg)
    st = case.state.copy()
    st.x[:, 2] *= 1.25
    assert column_stretch(st, case.domain) == pytest.approx(
        100 * 0.25 * st.x[case.domain.face(2, "max"), 2].mean() / 1.25 / 6.0)


def test_cases_lists_seven(capsys):
    assert cli(["cases"]) == 0
    lines = [ln for ln in capsys.readouterr().out.splitlines() if ln.strip()]
    assert len(lines) == 7
    assert [ln.split()[0] for ln in lines] == list(CASE_IDS)


def test_validate_cli(tmp_path, capsys):
    assert cli(["validate", "twisting_column"]) == 0
    d = _twisting_dict()
    del d["initial"]["omega3"]
    bad = tmp_path / "bad.yaml"
    bad.write_text(yaml.safe_dump(d))
    assert cli(["validate", str(bad)]) == 1
    assert "initial.omega3" in capsys.readouterr().err


def test_usage_errors_exit_1(tmp_path):
    assert cli(["run", "no_such_case"]) == 1
    assert cli(["run", "spinning_plate", "--threads", "4"]) == 1
    assert cli(["bogus-command"]) == 1
    assert cli(["run", "grad1d_study"]) == 1


def test_snapshot_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    x = rng.normal(size=(5, 2))
    data = {"displacement": rng.normal(size=(5, 2)), "von_mises": rng.normal(size=5) * 1e6,
            "detFc": np.array([1.0, np.nan, 0.5, 2.0, 1.0])}
    p = tmp_path / "s.vtk"
    write_snapshot(p, x, data)
    pts, arrays = read_snapshot(p)
    assert np.array_equal(pts[:, :2], x) and np.all(pts[:, 2] == 0.0)
    assert np.array_equal(arrays["displacement"][:, :2], data["displacement"])
    assert np.array_equal(arrays["von_mises"], data["von_mises"])
    assert np.array_equal(arrays["detFc"], data["detFc"], equal_nan=True)


def test_single_particle_snapshot(tmp_path):
    p = tmp_path / "one.vtk"
    write_snapshot(p, np.zeros((1, 3)), {"velocity": np.zeros((1, 3)), "von_mises": np.zeros(1)})
    text = p.read_text().splitlines()
    assert text[0] == "# vtk DataFile Version 3.0"
    assert "POINTS 1 double" in text and "VERTICES 1 2" in text and "POINT_DATA 1" in text
    pts, arrays = read_snapshot(p)
    assert pts.shape == (1, 3) and arrays["velocity"].shape == (1, 3)


def test_snapshot_io_error_names_path(tmp_path):
    target = tmp_path / "missing" / "dir" / "x.vtk"
    (tmp_path / "missing").write_text("a file, not a directory")
    with pytest.raises(OSError) as info:
        write_snapshot(target, np.zeros((1, 3)), {})
    assert str(target) in str(info.value)


def test_csv_and_report(tmp_path):
    write_csv(tmp_path / "a.csv", ("x", "y"), [{"x": 0.1, "y": 2}, [1e-300, "z"]])
    rows = read_csv(tmp_path / "a.csv")
    assert rows[0] == {"x": "0.1", "y": "2"} and float(rows[1]["x"]) == 1e-300
    write_report(tmp_path / "r.json", {"b": np.float64(1.5), "a": [1, 2]})
    assert json.loads((tmp_path / "r.json").read_text()) == {"a": [1, 2], "b": 1.5}


def _small_spin(tmp_path, **out):
    d = yaml.safe_load(builtin_path("spinning_plate").read_text())
    d["geometry"]["counts"] = [10, 10]
    d["time"]["end"] = 2e-3
    d["output"].update(out)
    p = tmp_path / "spin.yaml"
    p.write_text(yaml.safe_dump(d))
    return p


def test_snapshot_cadence(tmp_path):
    cfg = load_config(_small_spin(tmp_path, every=2, snapshot_every=4))
    res = run_case(build_case(cfg), tmp_path / "o")
    steps = res.report["steps"]
    expect = sorted(set(list(range(0, steps + 1, 4)) + [steps]))
    assert res.report["snapshot_steps"] == expect
    names = sorted(p.name for p in (tmp_path / "o").glob("snapshot_*.vtk"))
    assert names == [f"snapshot_{k:07d}.vtk" for k in expect]
    ledger = read_csv(tmp_path / "o" / "ledger.csv")
    assert [int(r["step"]) for r in ledger] == sorted(set(list(range(0, steps + 1, 2)) + [steps]))


def test_run_is_deterministic(tmp_path):
    cfg = _small_spin(tmp_path, every=1)
    for k in (1, 2):
        assert cli(["run", str(cfg), "--out-dir", str(tmp_path / f"r{k}"), "--no-snapshots"]) == 0
    a = (tmp_path / "r1" / "ledger.csv").read_bytes()
    assert a == (tmp_path / "r2" / "ledger.csv").read_bytes()
    rep = json.loads((tmp_path / "r1" / "report.json").read_text())
    assert rep["status"] == "finished" and rep["exit_code"] == 0


def test_jitter_changes_run_only_with_seed(tmp_path):
    cfg = _small_spin(tmp_path, every=1)
    args = ["run", str(cfg), "--no-snapshots", "--jitter", "0.1"]
    assert cli(args + ["--out-dir", str(tmp_path / "a"), "--seed", "3"]) == 0
    assert cli(args + ["--out-dir", str(tmp_path / "b"), "--seed", "3"]) == 0
    assert cli(args + ["--out-dir", str(tmp_path / "c")]) == 0
    a, b, c = ((tmp_path / k / "ledger.csv").read_bytes() for k in "abc")
    assert a == b and a != c


def test_grad1d_cli(tmp_path):
    assert cli(["grad1d", "grad1d_study", "--out-dir", str(tmp_path)]) == 0
    rmse = read_csv(tmp_path / "rmse.csv")
    assert len(rmse) == 12
    lin = [r for r in rmse if r["field"] == "linear"]
    assert all(float(r["improved_W1"]) < 1e-10 for r in lin)
    assert Path(tmp_path / "grad1d.csv").exists()


def test_pulling_run_stops_with_stretch(tmp_path):
    d = yaml.safe_load(builtin_path("pulling_column").read_text())
    d["geometry"]["counts"] = [4, 4, 24]
    d["initial"]["pull_velocity"] = [0.0, 0.0, 60.0]
    p = tmp_path / "pull.yaml"
    p.write_text(yaml.safe_dump(d))
    assert cli(["run", str(p), "--out-dir", str(tmp_path / "o")]) == 2
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert rep["status"] == "instability" and rep["exit_code"] == 2
    assert rep["stretch_percent"] > 0.0
