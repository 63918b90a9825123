import numpy as np
import pytest

from mfcontrol.core import (
    ModelParams,
    SeedSpec,
    SystemState,
    TimeGrid,
    sample_initial_followers,
    wrap,
)
from mfcontrol.dynamics import (
    export_noise_csv,
    export_trajectory_csv,
    hk_drift,
    hk_kernel,
    running_cost,
    simulate,
    simulate_batch,
)
from mfcontrol.estimators import PiecewiseConstantControl, path_functionals


def make_params(**kw):
    base = dict(k=10.0, k_L=5.0, sigma=0.05, R=0.15, lam=0.01, T=1.0, N=99)
    base.update(kw)
    return ModelParams(**base)


def test_hk_kernel_examples():
    assert hk_kernel(0.10, 0.15) == 1.0
    assert hk_kernel(0.20, 0.15) == 0.0
    assert hk_kernel(0.15, 0.15) == 1.0
    with pytest.raises(ValueError):
        hk_kernel(-0.1, 0.15)


def test_hk_drift_examples():
    p = make_params(N=1)
    # self-term zero, leader antipodal (distance 0.5 > R)
    assert hk_drift(0.3, 0.8, np.array([0.3]), p) == 0.0
    # leader in range at displacement +0.1
    assert hk_drift(0.3, 0.4, np.array([0.3]), p) == pytest.approx(0.5)
    # pair at distance 0.2 > R and leader out of range
    p2 = make_params(N=2)
    assert hk_drift(0.3, 0.8, np.array([0.3, 0.5]), p2) == 0.0


def test_running_cost_examples():
    assert running_cost(0.5, np.array([0.5, 0.5])) == 0.0
    assert running_cost(0.0, np.array([0.5])) == pytest.approx(0.25)
    assert running_cost(0.1, np.array([0.2, 0.9])) == pytest.approx(0.025)
    with pytest.raises(ValueError):
        running_cost(0.1, np.array([]))


def test_simulate_frozen_when_isolated():
    # sigma = 0, no control, all agents mutually out of range
    p = make_params(sigma=0.0, N=3)
    grid = TimeGrid(dt=1e-3, M=200)
    ctrl = PiecewiseConstantControl.zero(1.0, 2)
    state = SystemState(X=np.array([0.0, 0.25, 0.5]), Y=0.75)
    b = simulate(p, grid, ctrl, state, SeedSpec(1))
    assert np.array_equal(b.X[0], b.X[-1])
    assert b.Y[0] == b.Y[-1]


def test_simulate_deterministic_drift_only_leader():
    p = make_params(sigma=0.0, N=0)
    grid = TimeGrid(dt=1e-3, M=1000)
    c = 0.37
    ctrl = PiecewiseConstantControl.equal_intervals(1.0, [c])
    b = simulate(p, grid, ctrl, SystemState(X=np.empty(0), Y=0.8), SeedSpec(2))
    assert b.Y[-1] == pytest.approx(wrap(0.8 + c * 1.0), abs=1e-12)


def test_simulate_determinism_bit_identical():
    p = make_params(N=12)
    grid = TimeGrid(dt=1e-3, M=100)
    ctrl = PiecewiseConstantControl.equal_intervals(1.0, [0.5, -0.5])
    st = SystemState(X=sample_initial_followers(SeedSpec(3), 1, 12)[0], Y=0.8)
    b1 = simulate(p, grid, ctrl, st, SeedSpec(3))
    b2 = simulate(p, grid, ctrl, st, SeedSpec(3))
    assert np.array_equal(b1.X, b2.X)
    assert np.array_equal(b1.Y, b2.Y)
    assert np.array_equal(b1.dBY, b2.dBY)


def test_exchangeability_under_joint_permutation():
    # permuting initial positions together with noise substreams permutes
    # the follower trajectories identically
    p = make_params(N=8)
    grid = TimeGrid(dt=1e-3, M=150)
    ctrl = PiecewiseConstantControl.zero(1.0, 2)
    seed = SeedSpec(17)
    X0 = sample_initial_followers(seed, 1, 8)[0]
    perm = np.array([3, 1, 7, 0, 5, 2, 6, 4], dtype=np.int64)
    base = simulate(p, grid, ctrl, SystemState(X=X0, Y=0.4), seed)
    permuted = simulate(
        p, grid, ctrl, SystemState(X=X0[perm], Y=0.4), seed, follower_slots=perm
    )
    assert np.array_equal(permuted.X, base.X[:, perm])
    assert np.array_equal(permuted.Y, base.Y)


def test_leader_increment_moments():
    # mean of unwrapped leader displacement ~ 0; variance of sigma*B_T ~ sigma^2 T
    p = make_params(sigma=0.05, N=0)
    grid = TimeGrid(dt=1e-3, M=1000)
    ctrl = PiecewiseConstantControl.zero(1.0, 1)
    batch = simulate_batch(p, grid, ctrl, SystemState(X=np.empty(0), Y=0.5), 10_000, SeedSpec(4))
    b_T = batch.dB_sums[:, 0]  # total Brownian displacement per path
    disp = p.sigma * b_T
    se = disp.std(ddof=1) / np.sqrt(disp.size)
    assert abs(disp.mean()) < 3 * se
    assert np.var(disp, ddof=1) == pytest.approx(p.sigma**2 * 1.0, rel=0.05)


def test_per_step_increment_moments():
    # over >= 1e4 path-steps: increments average to zero and their per-step
    # variance matches dt
    p = make_params(N=0)
    grid = TimeGrid(dt=1e-3, M=20_000)
    ctrl = PiecewiseConstantControl.zero(20.0, 1)
    b = simulate(p, grid, ctrl, SystemState(X=np.empty(0), Y=0.5), SeedSpec(10))
    se = b.dBY.std(ddof=1) / np.sqrt(b.dBY.size)
    assert abs(b.dBY.mean()) < 3 * se
    assert np.var(b.dBY, ddof=1) == pytest.approx(grid.dt, rel=0.05)


def test_fused_kernel_matches_trajectory_recomputation():
    p = make_params(N=25)
    grid = TimeGrid(dt=2e-3, M=500)
    ctrl = PiecewiseConstantControl.equal_intervals(1.0, [0.5, -0.3, 0.2, 0.0, 1.0])
    seed = SeedSpec(777)
    batch = simulate_batch(p, grid, ctrl, None, 16, seed)
    X0 = sample_initial_followers(seed, 16, 25)
    for pid in (0, 5, 15):
        bun = simulate(p, grid, ctrl, SystemState(X=X0[pid], Y=0.8), seed, path_id=pid)
        pf = path_functionals(bun, ctrl)
        assert batch.phi[pid] == pytest.approx(pf.phi_T, abs=1e-13)
        assert np.allclose(batch.dB_sums[pid] / p.sigma, pf.M_e, atol=0, rtol=0)
        assert np.array_equal(batch.X_T[pid], bun.X[-1])
        assert batch.Y_T[pid] == bun.Y[-1]


def test_windowed_drift_matches_direct_reference():
    # one noiseless step equals the direct O(N^2) drift formula
    p = make_params(sigma=0.0, N=40)
    seed = SeedSpec(5)
    x0 = sample_initial_followers(seed, 1, 40)[0]
    grid = TimeGrid(dt=1e-3, M=1)
    ctrl = PiecewiseConstantControl.zero(1e-3, 1)
    b = simulate(p, grid, ctrl, SystemState(X=x0, Y=0.8), seed)
    expected = np.array([wrap(xi + hk_drift(xi, 0.8, x0, p) * grid.dt) for xi in x0])
    assert np.allclose(b.X[1], expected, atol=1e-12)


def test_simulate_rejects_uncovered_window():
    p = make_params(N=0)
    grid = TimeGrid(dt=1e-3, M=1000)
    short = PiecewiseConstantControl.zero(0.5, 2)
    with pytest.raises(ValueError):
        simulate(p, grid, short, SystemState(X=np.empty(0), Y=0.5), SeedSpec(1))


def test_capture_fraction():
    p = make_params(sigma=0.0, k=0.0, k_L=0.0, N=4)
    grid = TimeGrid(dt=1e-3, M=10)
    ctrl = PiecewiseConstantControl.zero(0.01, 1)
    st = SystemState(X=np.array([0.5, 0.52, 0.9, 0.1]), Y=0.5)
    batch = simulate_batch(p, grid, ctrl, st, 2, SeedSpec(1))
    assert batch.capture[0] == pytest.approx(0.5)


def test_csv_export_schema_and_reproducibility(tmp_path):
    p = make_params(N=3)
    grid = TimeGrid(dt=1e-3, M=20)
    ctrl = PiecewiseConstantControl.zero(0.02, 1)
    st = SystemState(X=np.array([0.1, 0.2, 0.3]), Y=0.8)
    b = simulate(p, grid, ctrl, st, SeedSpec(6))
    f1, f2 = tmp_path / "a.csv", tmp_path / "b.csv"
    export_trajectory_csv([b], f1)
    export_trajectory_csv([b], f2)
    assert f1.read_bytes() == f2.read_bytes()
    header = f1.read_text().splitlines()[0]
    assert header == "path_id,step,t,Y,X_0,X_1,X_2"
    n_lines = len(f1.read_text().splitlines())
    assert n_lines == 1 + 21
    fn = tmp_path / "noise.csv"
    export_noise_csv([b], fn)
    assert fn.read_text().splitlines()[0] == "path_id,step,dBY"
