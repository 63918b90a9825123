"""Experiment runner.

Every workflow is a subcommand driven by a TOML config (or a named default
scenario); each run writes its CSV/JSON artefacts plus a manifest that the
figure scripts discover outputs through.

Exit codes: 0 success, 2 configuration error, 1 numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import os
import sys
import time

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .core import ModelParams, SeedSpec, SystemState, TimeGrid, sample_von_mises_mixture
from .chaos import convergence_study, export_study_csv, export_study_summary, fit_slope
from .dynamics import export_noise_csv, export_trajectory_csv, simulate
from .estimators import PiecewiseConstantControl, derivative_report
from .meanfield import GridDensity, cfl_max_dt, export_density_csv, simulate_mf
from .optimize import (
    FiniteSystem,
    MeanFieldState,
    MeanFieldSystem,
    NewtonError,
    fd_gradient_check,
    markov_solve,
    newton_solve,
    write_iteration_log,
)

SUBCOMMANDS = ("simulate", "optimize", "markov", "meanfield", "mf-optimize", "chaos", "check-gradient")
SCENARIOS = ("fig1", "fig2-3", "fig4-sigma01", "fig4-sigma02", "fig5", "chaos")


class ConfigError(Exception):
    pass


# allowed keys per config section; parsing is strict
_SCHEMA = {
    "model": {"k", "k_L", "sigma", "R", "lambda", "T", "N"},
    "grid": {"dt"},
    "control": {"m", "a0", "Y0"},
    "run": {"scenario", "seed", "n_paths", "out_dir", "threads", "max_iter", "tol", "hess", "store_paths"},
    "meanfield": {"n_cells"},
    "chaos": {"N_list", "reps", "m_atoms"},
}

_BASE_CONFIG = {
    "model": {"k": 10.0, "k_L": 5.0, "sigma": 0.05, "R": 0.15, "lambda": 0.01, "T": 1.0, "N": 99},
    "grid": {"dt": 1e-3},
    "control": {"m": 5, "a0": [0.0] * 5, "Y0": 0.8},
    "run": {
        "scenario": "fig2-3",
        "seed": 20260810,
        "n_paths": 10000,
        "out_dir": "out",
        "threads": 0,
        "max_iter": 200,
        "tol": 0.0,
        "hess": "classic",
        "store_paths": 1,
    },
}


def default_config(scenario: str) -> dict:
    """The built-in parameter blocks, keyed by figure."""
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}; choose from {SCENARIOS}")
    cfg = copy.deepcopy(_BASE_CONFIG)
    cfg["run"]["scenario"] = scenario
    if scenario == "fig4-sigma01":
        cfg["model"]["sigma"] = 0.1
    elif scenario == "fig4-sigma02":
        cfg["model"]["sigma"] = 0.2
    elif scenario == "fig5":
        cfg["meanfield"] = {"n_cells": 64}
    elif scenario == "chaos":
        cfg["chaos"] = {"N_list": [16, 32, 64, 128, 256], "reps": 20, "m_atoms": 256}
        cfg["meanfield"] = {"n_cells": 64}
    return cfg


def _check_keys(cfg: dict):
    for section, body in cfg.items():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        if not isinstance(body, dict):
            raise ConfigError(f"config section [{section}] must be a table")
        for key in body:
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")


def load_config(path: str) -> dict:
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    _check_keys(raw)
    base = default_config(raw.get("run", {}).get("scenario", "fig2-3"))
    cfg = copy.deepcopy(base)
    for section, body in raw.items():
        cfg.setdefault(section, {}).update(body)
    return cfg


def validate_config(cfg: dict) -> list:
    """All invariant violations as strings; empty when the config is runnable."""
    out = []
    try:
        _check_keys(cfg)
    except ConfigError as e:
        return [str(e)]
    m = cfg.get("model", {})
    try:
        params = ModelParams(
            k=m["k"], k_L=m["k_L"], sigma=m["sigma"], R=m["R"],
            lam=m["lambda"], T=m["T"], N=int(m["N"]),
        )
    except (KeyError, ValueError) as e:
        out.append(f"model: {e}")
        params = None
    dt = cfg.get("grid", {}).get("dt", 0.0)
    if not (isinstance(dt, (int, float)) and dt > 0):
        out.append("grid: dt must be positive")
    ctl = cfg.get("control", {})
    m_int = ctl.get("m", 0)
    if not (isinstance(m_int, int) and m_int >= 1):
        out.append("control: m must be a positive integer")
    a0 = ctl.get("a0", [])
    if not (isinstance(a0, list) and all(isinstance(v, (int, float)) for v in a0)):
        out.append("control: a0 must be a list of numbers")
    elif m_int >= 1 and len(a0) != m_int:
        out.append("control: a0 must have one entry per interval")
    y0 = ctl.get("Y0", 0.8)
    if not (isinstance(y0, (int, float)) and 0.0 <= y0 < 1.0):
        out.append("control: Y0 must lie in [0, 1)")
    run = cfg.get("run", {})
    for key in ("n_paths", "max_iter", "store_paths"):
        if key in run and not (isinstance(run[key], int) and run[key] >= 1):
            out.append(f"run: {key} must be a positive integer")
    if run.get("hess", "classic") not in ("classic", "score"):
        out.append("run: hess must be 'classic' or 'score'")
    if params is not None and dt > 0:
        try:
            TimeGrid.from_horizon(params.T, dt)
        except ValueError as e:
            out.append(f"grid: {e}")
    if params is not None and "meanfield" in cfg:
        n_cells = cfg["meanfield"].get("n_cells", 0)
        if not (isinstance(n_cells, int) and n_cells >= 2):
            out.append("meanfield: n_cells must be an integer >= 2")
        elif dt > 0 and dt > cfl_max_dt(params, 1.0 / n_cells):
            out.append(
                f"meanfield: dt={dt} violates the stability bound "
                f"{cfl_max_dt(params, 1.0 / n_cells):.4e}"
            )
    if "chaos" in cfg:
        ch = cfg["chaos"]
        n_list = ch.get("N_list", [])
        if not n_list or sorted(n_list) != list(n_list):
            out.append("chaos: N_list must be non-empty and ascending")
        if ch.get("reps", 0) < 1:
            out.append("chaos: reps must be >= 1")
    return out


def _unpack(cfg: dict):
    m = cfg["model"]
    params = ModelParams(
        k=m["k"], k_L=m["k_L"], sigma=m["sigma"], R=m["R"],
        lam=m["lambda"], T=m["T"], N=int(m["N"]),
    )
    grid = TimeGrid.from_horizon(params.T, cfg["grid"]["dt"])
    ctl = cfg["control"]
    control = PiecewiseConstantControl.equal_intervals(params.T, np.asarray(ctl["a0"], dtype=float))
    seed = SeedSpec(int(cfg["run"]["seed"]))
    return params, grid, control, seed


def _config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:16]


def _write_manifest(cfg, out_dir, files, t_start):
    manifest = {
        "scenario": cfg["run"].get("scenario", ""),
        "config_hash": _config_hash(cfg),
        "files": files,
        "seed": int(cfg["run"]["seed"]),
        "wall_time_s": time.time() - t_start,
        "model": cfg["model"],
        "control": cfg["control"],
        "grid": cfg["grid"],
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2)
    return path


def _initial_state(params, control_cfg, seed):
    X0 = sample_von_mises_mixture(seed, params.N) if params.N > 0 else np.empty(0)
    return SystemState(X=X0, Y=control_cfg["Y0"])


def _run_simulate(cfg, out_dir):
    params, grid, control, seed = _unpack(cfg)
    n_store = int(cfg["run"].get("store_paths", 1))
    bundles = []
    for pid in range(n_store):
        init = _initial_state(params, cfg["control"], seed.derive(f"sim-init-{pid}"))
        bundles.append(simulate(params, grid, control, init, seed, path_id=pid))
    traj = os.path.join(out_dir, "trajectory.csv")
    noise = os.path.join(out_dir, "noise.csv")
    export_trajectory_csv(bundles, traj)
    export_noise_csv(bundles, noise)
    return [traj, noise]


def _solver_kwargs(cfg):
    run = cfg["run"]
    tol = run.get("tol", 0.0)
    return {
        "n_paths": int(run["n_paths"]),
        "tol": None if tol == 0.0 else float(tol),
        "max_iter": int(run["max_iter"]),
        "hess_mode": run.get("hess", "classic"),
    }


def _run_optimize(cfg, out_dir):
    params, grid, control, seed = _unpack(cfg)
    system = FiniteSystem(params, grid.dt, y0=cfg["control"]["Y0"])
    kw = _solver_kwargs(cfg)
    rep = newton_solve(system, control, None, kw["n_paths"], seed,
                       tol=kw["tol"], max_iter=kw["max_iter"], hess_mode=kw["hess_mode"])
    log = os.path.join(out_dir, "iterations.csv")
    write_iteration_log(rep, log)
    final_control = control.with_coeffs(rep.final_a)
    batch = system.batch(final_control, None, kw["n_paths"], seed, 0, grid.M)
    deriv = os.path.join(out_dir, "derivatives.json")
    derivative_report(batch, final_control, seed, path=deriv)
    return [log, deriv]


def _run_markov(cfg, out_dir):
    params, grid, control, seed = _unpack(cfg)
    system = FiniteSystem(params, grid.dt, y0=cfg["control"]["Y0"])
    state0 = _initial_state(params, cfg["control"], seed.derive("markov-init"))
    kw = _solver_kwargs(cfg)
    res = markov_solve(system, control.breakpoints, control.coeffs, state0, seed,
                       kw["n_paths"], tol=kw["tol"], max_iter=kw["max_iter"],
                       hess_mode=kw["hess_mode"])
    traj = os.path.join(out_dir, "trajectory.csv")
    export_trajectory_csv([res.trajectory], traj)
    summary = os.path.join(out_dir, "markov_summary.json")
    with open(summary, "w") as fh:
        json.dump(
            {
                "committed": res.committed.tolist(),
                "breakpoints": control.breakpoints.tolist(),
                "realized_cost": res.realized_cost,
                "capture": res.capture,
                "stage_iterations": [len(r.iterates) for r in res.stage_reports],
            },
            fh,
            indent=2,
        )
    return [traj, summary]


def _mf_initial(cfg):
    n_cells = cfg.get("meanfield", {}).get("n_cells", 64)
    return GridDensity.from_mixture(int(n_cells))


def _run_meanfield(cfg, out_dir):
    params, grid, control, seed = _unpack(cfg)
    g0 = _mf_initial(cfg)
    traj = simulate_mf(params, grid, control, g0, cfg["control"]["Y0"], seed)
    dens = os.path.join(out_dir, "density.csv")
    export_density_csv(traj, dens)
    return [dens]


def _run_mf_optimize(cfg, out_dir):
    params, grid, control, seed = _unpack(cfg)
    g0 = _mf_initial(cfg)
    system = MeanFieldSystem(params, grid.dt)
    state0 = MeanFieldState(g=g0, Y=cfg["control"]["Y0"])
    kw = _solver_kwargs(cfg)
    res = markov_solve(system, control.breakpoints, control.coeffs, state0, seed,
                       kw["n_paths"], tol=kw["tol"], max_iter=kw["max_iter"],
                       hess_mode=kw["hess_mode"])
    dens = os.path.join(out_dir, "density.csv")
    export_density_csv(res.trajectory, dens)
    summary = os.path.join(out_dir, "markov_summary.json")
    with open(summary, "w") as fh:
        json.dump(
            {
                "committed": res.committed.tolist(),
                "breakpoints": control.breakpoints.tolist(),
                "realized_cost": res.realized_cost,
                "capture": res.capture,
            },
            fh,
            indent=2,
        )
    return [dens, summary]


def _run_chaos(cfg, out_dir):
    params, grid, control, seed = _unpack(cfg)
    ch = cfg["chaos"]
    study = convergence_study(
        params, grid, control, [int(n) for n in ch["N_list"]], int(ch["reps"]), seed,
        n_cells=int(cfg.get("meanfield", {}).get("n_cells", 64)),
        m_atoms=int(ch.get("m_atoms", 256)),
        Y0=cfg["control"]["Y0"],
    )
    fit = fit_slope(study)
    study_csv = os.path.join(out_dir, "study.csv")
    summary = os.path.join(out_dir, "summary.json")
    export_study_csv(study, study_csv)
    export_study_summary(study, fit, summary)
    return [study_csv, summary]


def _run_check_gradient(cfg, out_dir):
    params, grid, control, seed = _unpack(cfg)
    system = FiniteSystem(params, grid.dt, y0=cfg["control"]["Y0"])
    state = None if params.N > 0 else SystemState(X=np.empty(0), Y=cfg["control"]["Y0"])
    rep = fd_gradient_check(system, control, state, int(cfg["run"]["n_paths"]), seed)
    path = os.path.join(out_dir, "gradient_check.json")
    with open(path, "w") as fh:
        json.dump(
            {
                "a": control.coeffs.tolist(),
                "grad_est": rep.grad_est.tolist(),
                "grad_se": rep.grad_se.tolist(),
                "grad_fd": rep.grad_fd.tolist(),
                "fd_se": rep.fd_se.tolist(),
                "rel_err": rep.rel_err.tolist(),
                "resolved": rep.resolved.tolist(),
                "max_rel_error_resolved": rep.max_rel_error_resolved,
            },
            fh,
            indent=2,
        )
    return [path]


_RUNNERS = {
    "simulate": _run_simulate,
    "optimize": _run_optimize,
    "markov": _run_markov,
    "meanfield": _run_meanfield,
    "mf-optimize": _run_mf_optimize,
    "chaos": _run_chaos,
    "check-gradient": _run_check_gradient,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mfcontrol", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=str, default=None, help="TOML config file")
        sp.add_argument("--scenario", type=str, default=None, choices=SCENARIOS)
        sp.add_argument("--out", type=str, default=None, help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        sp.add_argument("--threads", type=int, default=None, help="cap worker threads")
    return ap


def run_subcommand(argv) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        if args.config is not None:
            cfg = load_config(args.config)
        elif args.scenario is not None:
            cfg = default_config(args.scenario)
        else:
            raise ConfigError("one of --config or --scenario is required")
        if args.seed is not None:
            cfg["run"]["seed"] = args.seed
        env_seed = os.environ.get("MFC_SEED")
        if env_seed is not None:
            cfg["run"]["seed"] = int(env_seed)
        if args.out is not None:
            cfg["run"]["out_dir"] = args.out
        threads = args.threads if args.threads is not None else cfg["run"].get("threads", 0)
        if threads and threads > 0:
            import numba

            numba.set_num_threads(threads)
        if args.command == "chaos" and "chaos" not in cfg:
            cfg["chaos"] = default_config("chaos")["chaos"]
            cfg.setdefault("meanfield", {"n_cells": 64})
        if args.command in ("meanfield", "mf-optimize") and "meanfield" not in cfg:
            cfg["meanfield"] = {"n_cells": 64}
        violations = validate_config(cfg)
        if violations:
            for v in violations:
                print(f"config error: {v}", file=sys.stderr)
            return 2
    except (ConfigError, FileNotFoundError, OSError, tomllib.TOMLDecodeError, ValueError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2

    out_dir = cfg["run"]["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    t_start = time.time()
    try:
        files = _RUNNERS[args.command](cfg, out_dir)
    except (NewtonError, FloatingPointError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 1
    manifest = _write_manifest(cfg, out_dir, [os.path.basename(f) for f in files], t_start)
    print(f"wrote {len(files)} artefact(s) + {manifest}")
    return 0


def main():
    sys.exit(run_subcommand(sys.argv[1:]))
