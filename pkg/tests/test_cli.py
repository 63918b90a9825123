import json
import os

import pytest

from mfcontrol.cli import default_config, run_subcommand, validate_config


def test_default_config_values():
    fig1 = default_config("fig1")
    assert fig1["model"]["sigma"] == 0.05
    assert fig1["model"]["N"] == 99
    assert fig1["model"]["k"] == 10.0
    assert fig1["model"]["k_L"] == 5.0
    assert fig1["model"]["lambda"] == 0.01
    assert fig1["control"]["m"] == 5
    assert fig1["control"]["Y0"] == 0.8
    assert fig1["run"]["n_paths"] == 10_000

    fig4 = default_config("fig4-sigma02")
    assert fig4["model"]["sigma"] == 0.2
    assert fig4["model"]["N"] == 99  # all else as the base scenario

    fig5 = default_config("fig5")
    assert fig5["meanfield"]["n_cells"] == 64

    with pytest.raises(Exception):
        default_config("fig9")


def test_validate_config_catches_violations():
    cfg = default_config("fig1")
    cfg["model"]["lambda"] = 0.0
    assert any("lam" in v for v in validate_config(cfg))

    cfg = default_config("fig1")
    cfg["model"]["R"] = 0.6
    assert any("R" in v for v in validate_config(cfg))

    cfg = default_config("fig5")
    assert validate_config(cfg) == []  # dt = 1e-3 satisfies the bound
    cfg["grid"]["dt"] = 5e-3
    assert any("stability" in v for v in validate_config(cfg))


def test_strict_keys_rejected(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("[model]\nsgima = 0.05\n")
    rc = run_subcommand(["simulate", "--config", str(bad), "--out", str(tmp_path / "o")])
    assert rc == 2
    assert not (tmp_path / "o").exists()


def test_chaos_empty_n_list_exits_2(tmp_path):
    cfgf = tmp_path / "chaos.toml"
    cfgf.write_text(
        '[run]\nscenario = "chaos"\nout_dir = "%s"\n[chaos]\nN_list = []\nreps = 2\n'
        % (tmp_path / "o")
    )
    rc = run_subcommand(["chaos", "--config", str(cfgf)])
    assert rc == 2
    assert not (tmp_path / "o").exists()


def _small_sim_config(tmp_path, out, seed=4242):
    cfgf = tmp_path / "sim.toml"
    cfgf.write_text(
        f"""
[model]
N = 99

[grid]
dt = 0.001

[run]
scenario = "fig1"
seed = {seed}
out_dir = "{out}"
store_paths = 1
"""
    )
    return cfgf


def test_simulate_writes_artifacts_and_reproduces(tmp_path):
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    cfg1 = _small_sim_config(tmp_path, out1)
    rc = run_subcommand(["simulate", "--config", str(cfg1)])
    assert rc == 0
    traj = out1 / "trajectory.csv"
    manifest = json.loads((out1 / "manifest.json").read_text())
    assert traj.exists() and traj.stat().st_size > 0
    header = traj.read_text().splitlines()[0].split(",")
    assert header[:4] == ["path_id", "step", "t", "Y"]
    assert len(header) == 4 + 99  # one column per follower
    assert set(manifest["files"]) == {"trajectory.csv", "noise.csv"}
    for f in manifest["files"]:
        assert (out1 / f).stat().st_size > 0

    cfg2 = _small_sim_config(tmp_path, out2)
    assert run_subcommand(["simulate", "--config", str(cfg2)]) == 0
    assert (out1 / "trajectory.csv").read_bytes() == (out2 / "trajectory.csv").read_bytes()
    assert (out1 / "noise.csv").read_bytes() == (out2 / "noise.csv").read_bytes()


def test_env_seed_override(tmp_path, monkeypatch):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    monkeypatch.setenv("MFC_SEED", "777")
    assert run_subcommand(["simulate", "--config", str(_small_sim_config(tmp_path, out1))]) == 0
    manifest = json.loads((out1 / "manifest.json").read_text())
    assert manifest["seed"] == 777
    monkeypatch.delenv("MFC_SEED")
    assert run_subcommand(["simulate", "--config", str(_small_sim_config(tmp_path, out2))]) == 0
    assert (out1 / "trajectory.csv").read_bytes() != (out2 / "trajectory.csv").read_bytes()


def test_check_gradient_toy_exit_zero(tmp_path):
    out = tmp_path / "o"
    cfgf = tmp_path / "toy.toml"
    cfgf.write_text(
        f"""
[model]
k = 0.0
k_L = 0.0
sigma = 2.0
lambda = 0.5
N = 0

[grid]
dt = 0.01

[control]
a0 = [0.8, -0.6, 0.7, 1.0, -0.9]

[run]
seed = 12
n_paths = 2000000
out_dir = "{out}"
"""
    )
    rc = run_subcommand(["check-gradient", "--config", str(cfgf)])
    assert rc == 0
    rep = json.loads((out / "gradient_check.json").read_text())
    assert rep["max_rel_error_resolved"] < 0.01


def _tiny_config(tmp_path, out, extra=""):
    cfgf = tmp_path / "tiny.toml"
    cfgf.write_text(
        f"""
[model]
N = 5
T = 1.0

[grid]
dt = 0.01

[control]
m = 2
a0 = [0.0, 0.0]

[run]
seed = 31
n_paths = 40
max_iter = 2
hess = "score"
out_dir = "{out}"
{extra}
"""
    )
    return cfgf


@pytest.mark.parametrize(
    "command,expected",
    [
        ("optimize", {"iterations.csv", "derivatives.json"}),
        ("markov", {"trajectory.csv", "markov_summary.json"}),
        ("meanfield", {"density.csv"}),
        ("mf-optimize", {"density.csv", "markov_summary.json"}),
    ],
)
def test_runner_smoke_writes_declared_artifacts(tmp_path, command, expected):
    out = tmp_path / command
    extra = "[meanfield]\nn_cells = 16\n" if command.startswith(("mean", "mf")) else ""
    cfg = _tiny_config(tmp_path, out, extra)
    assert run_subcommand([command, "--config", str(cfg)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert set(manifest["files"]) == expected
    for f in manifest["files"]:
        assert (out / f).stat().st_size > 0


def test_chaos_runner_smoke(tmp_path):
    out = tmp_path / "chaos"
    cfg = _tiny_config(
        tmp_path, out,
        "[meanfield]\nn_cells = 16\n[chaos]\nN_list = [4, 8, 16]\nreps = 2\nm_atoms = 16\n",
    )
    assert run_subcommand(["chaos", "--config", str(cfg)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert "slope" in summary and len(summary["per_N"]) == 3
    study = (out / "study.csv").read_text().splitlines()
    assert study[0] == "N,rep,sup_w2_sq,sup_dy_sq"
    assert len(study) == 1 + 6


def test_missing_config_and_scenario_exits_2():
    assert run_subcommand(["simulate"]) == 2


def test_unknown_flag_exits_2():
    with pytest.raises(SystemExit) as exc:
        run_subcommand(["simulate", "--bogus"])
    assert exc.value.code == 2
