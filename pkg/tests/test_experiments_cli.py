import json

import numpy as np
import pytest

from kvhsim.cli import main
from kvhsim.compare import ComparisonError, compare_runs
from kvhsim.config import PRESETS, parse_config, preset_config
from kvhsim.errors import BoundaryMassExceeded
from kvhsim.experiments import OUTPUT_ROOT_ENV, oracle_config, resolve_output_dir, run_experiment
from kvhsim.snapshot import read_snapshot

SMALL_GRID = {"nq": "64", "np": "64", "q_min": "-8", "q_max": "8", "p_min": "-8", "p_max": "8"}
SMALL_TIME = {"dt": "0.005", "t_final": "1", "checkpoint_interval": "0.5"}

KVH = """
[experiment]
model = kvh
[grid]
nq = 64
np = 64
q_min = -8
q_max = 8
p_min = -8
p_max = 8
[initial]
state = gaussian
q0 = 1
[time]
dt = 0.01
t_final = 1
checkpoint_interval = 0.5
"""


def small(name, **over):
    over.setdefault("grid", SMALL_GRID)
    over.setdefault("time", SMALL_TIME)
    return preset_config(name, **over)


def test_kvh_run_layout(tmp_path):
    res = run_experiment(parse_config(KVH), tmp_path / "run")
    d = res.directory
    m = json.loads((d / "manifest.json").read_text())
    assert m["status"] == "ok" and m["model"] == "kvh"
    assert [c["t"] for c in m["checkpoints"]] == [0.0, 0.5, 1.0]
    assert (d / "timeseries.csv").read_text().splitlines()[0].startswith("t,n_x,n_y,n_z,purity")
    chi = read_snapshot(d / m["checkpoints"][-1]["files"]["chi"])
    assert chi.shape == (64, 64)
    assert m["checks"]["norm_drift"]["pass"] and m["checks"]["energy_drift"]["pass"]
    assert not (d / "error.json").exists()
    assert np.all(np.isnan(res.column("n_x")))


def test_runs_are_deterministic(tmp_path):
    cfg = parse_config(KVH)
    a = run_experiment(cfg, tmp_path / "a").directory
    b = run_experiment(cfg, tmp_path / "b").directory
    assert (a / "timeseries.csv").read_bytes() == (b / "timeseries.csv").read_bytes()
    rep = compare_runs(a, b, render=False)
    s = rep.summary
    assert s["max_field_l2"] == 0 and s["max_density_l1"] == 0
    assert (a / "compare_b" / "report.json").exists()
    assert (a / "compare_b" / "metrics.csv").exists()


def test_oscillator_period(tmp_path):
    """After one period of the unit oscillator the KvH state returns to itself."""
    T = 2 * np.pi
    cfg = parse_config(KVH).replace(time={"dt": T / 2000, "t_final": T, "checkpoint_interval": T / 2})
    res = run_experiment(cfg, tmp_path / "p", keep_fields=True)
    chi0, chi1 = res.fields[0]["chi"], res.fields[-1]["chi"]
    assert np.linalg.norm(chi1 - chi0) / np.linalg.norm(chi0) < 1e-5
    ex = run_experiment(oracle_config(cfg), tmp_path / "pe", keep_fields=True)
    assert np.linalg.norm(ex.fields[-1]["chi"] - chi0) / np.linalg.norm(chi0) < 1e-12


def test_rk4_against_oracle_run(tmp_path):
    cfg = parse_config(KVH)
    a = run_experiment(cfg, tmp_path / "rk4").directory
    b = run_experiment(oracle_config(cfg), tmp_path / "exact").directory
    rep = compare_runs(a, b, render=False)
    assert rep.summary["max_field_l2"] < 1e-6
    assert rep.source_a == rep.source_b == "kvh"


def test_boundary_abort(tmp_path):
    cfg = parse_config(KVH.replace("q0 = 1", "q0 = 6"))
    with pytest.raises(BoundaryMassExceeded):
        run_experiment(cfg, tmp_path / "edge")
    rec = json.loads((tmp_path / "edge" / "error.json").read_text())
    assert rec["invariant"] == "boundary_mass"
    m = json.loads((tmp_path / "edge" / "manifest.json").read_text())
    assert m["status"] == "aborted"


def test_output_root_env(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path))
    cfg = parse_config(KVH)
    assert resolve_output_dir(cfg) == tmp_path / "runs" / "kvh"
    assert resolve_output_dir(oracle_config(cfg)) == tmp_path / "runs" / "kvh_exact"
    assert resolve_output_dir(cfg, tmp_path / "x") == tmp_path / "x"


@pytest.mark.parametrize("name", ["figure1", "figure1_quantum", "figure1_ehrenfest",
                                  "nqcle_figure1", "kvn_oscillator"])
def test_small_preset_runs(tmp_path, name):
    over = {}
    if name == "nqcle_figure1":
        # the nonlinear field leaks more into the boundary band on small boxes
        over["grid"] = {}
    res = run_experiment(small(name, **over), tmp_path / name)
    assert res.manifest["status"] == "ok"
    assert len(res.rows) == 3
    if name != "kvn_oscillator":
        n = np.array([[r["n_x"], r["n_y"], r["n_z"]] for r in res.rows])
        assert np.all(np.linalg.norm(n, axis=1) <= 1 + 1e-9)
        assert np.allclose(n[0], [1, 0, 0])
    if name == "figure1_ehrenfest":
        assert (res.directory / "trajectory.csv").exists()


def test_hybrid_vs_quantum_report(tmp_path):
    a = run_experiment(small("figure1"), tmp_path / "hyb").directory
    b = run_experiment(small("figure1_quantum"), tmp_path / "q").directory
    rep = compare_runs(a, b, tmp_path / "cmp")
    assert rep.source_b == "quantum"
    d = rep.to_dict()
    assert set(d["checkpoints"][0]) >= {"bloch_deviation", "purity_gap", "density_l1"}
    assert d["checkpoints"][0]["bloch_deviation"] < 1e-10
    assert all(p.endswith(".png") for p in rep.figures)
    assert (tmp_path / "cmp" / "density.png").exists()


def test_compare_misaligned(tmp_path):
    a = run_experiment(parse_config(KVH), tmp_path / "a").directory
    b = run_experiment(parse_config(KVH.replace("checkpoint_interval = 0.5",
                                                "checkpoint_interval = 1")), tmp_path / "b").directory
    with pytest.raises(ComparisonError, match="misaligned"):
        compare_runs(a, b, render=False)


def test_cli_exit_codes(tmp_path, capsys):
    good = tmp_path / "good.ini"
    good.write_text(KVH)
    assert main(["run", str(good), "--output", str(tmp_path / "g")]) == 0
    assert (tmp_path / "g" / "timeseries.png").exists()
    assert main(["oracle", str(good), "--output", str(tmp_path / "ge"), "--no-plots"]) == 0
    assert main(["compare", str(tmp_path / "g"), str(tmp_path / "ge"), "--no-plots"]) == 0

    bad = tmp_path / "bad.ini"
    bad.write_text(KVH.replace("t_final = 1", "t_final = -1"))
    assert main(["run", str(bad)]) == 2
    assert "NegativeDuration" in capsys.readouterr().err

    edge = tmp_path / "edge.ini"
    edge.write_text(KVH.replace("q0 = 1", "q0 = 6"))
    assert main(["run", str(edge), "--output", str(tmp_path / "e"), "--no-plots"]) == 3
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["invariant"] == "boundary_mass"
    assert json.loads((tmp_path / "e" / "error.json").read_text()) == err

    assert main(["compare", str(tmp_path / "g"), str(tmp_path / "e")]) == 2


def test_cli_validate_and_presets(capsys):
    assert main(["presets"]) == 0
    assert capsys.readouterr().out.split() == sorted(PRESETS)
    assert main(["validate", "figure1"]) == 0
    text = capsys.readouterr().out
    assert parse_config(text).to_dict() == preset_config("figure1").to_dict()
    assert main(["validate", "no_such_thing"]) == 2
