"""The noisy bounded-confidence leader-follower system and its integrator.

Followers attract each other and are attracted by the leader inside an
interaction radius R; all agents carry independent Brownian noise with a
common diffusion coefficient.  The integrator is explicit Euler-Maruyama on
a uniform grid.  Leader Brownian increments are retained because the
cost-derivative estimators integrate against them.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core import ModelParams, SeedSpec, SystemState, TimeGrid, geodesic_disp


def hk_kernel(r: float, R: float) -> float:
    """Indicator interaction kernel: 1 if r <= R else 0 (boundary inclusive)."""
    if r < 0:
        raise ValueError("hk_kernel: r must be non-negative")
    return 1.0 if r <= R else 0.0


def hk_drift(x: float, Y: float, X: np.ndarray, params: ModelParams) -> float:
    """Follower drift at position x against follower vector X and leader Y.

    ``k * mean_j a(|d_j|) d_j + k_L * a(|d_Y|) d_Y`` with signed geodesic
    displacements; the empirical mean includes the particle itself (its term
    is zero).
    """
    X = np.asarray(X, dtype=float)
    if X.size == 0:
        raise ValueError("hk_drift: follower vector must be non-empty")
    d = geodesic_disp(x, X)
    b = params.k * float(np.sum(np.where(np.abs(d) <= params.R, d, 0.0))) / X.size
    dY = geodesic_disp(x, Y)
    if abs(dY) <= params.R:
        b += params.k_L * dY
    return b


def running_cost(Y: float, X: np.ndarray) -> float:
    """Mean squared geodesic distance from the leader to the followers."""
    X = np.asarray(X, dtype=float)
    if X.size == 0:
        raise ValueError("running_cost: follower vector must be non-empty")
    d = geodesic_disp(Y, X)
    return float(np.mean(d * d))


@dataclass(frozen=True)
class TrajectoryBundle:
    """One realised path: states at every grid node plus leader increments."""

    X: np.ndarray  # (M+1, N)
    Y: np.ndarray  # (M+1,)
    dBY: np.ndarray  # (M,)
    grid: TimeGrid
    params: ModelParams

    def __post_init__(self):
        M = self.grid.M
        if self.X.shape != (M + 1, self.params.N):
            raise ValueError("TrajectoryBundle: X must have shape (M+1, N)")
        if self.Y.shape != (M + 1,) or self.dBY.shape != (M,):
            raise ValueError("TrajectoryBundle: Y/dBY lengths do not match grid")
        if np.any(self.X < 0) or np.any(self.X >= 1) or np.any(self.Y < 0) or np.any(self.Y >= 1):
            raise ValueError("TrajectoryBundle: stored positions must lie in [0, 1)")

    def state(self, j: int) -> SystemState:
        return SystemState(X=self.X[j].copy(), Y=float(self.Y[j]))


@dataclass(frozen=True)
class FunctionalBatch:
    """Per-path reduced functionals from an ensemble run.

    phi      left-Riemann integral of the running cost per path
    dB_sums  per-interval sums of leader Brownian increments (B, K)
    X_T/Y_T  terminal states
    capture  fraction of followers within radius R of the leader at T
    """

    phi: np.ndarray
    dB_sums: np.ndarray
    X_T: np.ndarray
    Y_T: np.ndarray
    capture: np.ndarray
    u_steps: np.ndarray
    interval_dt: np.ndarray  # quadrature length of each accumulation interval
    grid: TimeGrid
    params: ModelParams

    @property
    def n_paths(self) -> int:
        return self.phi.shape[0]

    def martingale_integrals(self) -> np.ndarray:
        """M^{e_k} per path: sigma^{-1} times the interval increment sums."""
        if self.params.sigma <= 0:
            raise ValueError("martingale integrals require sigma > 0")
        return self.dB_sums / self.params.sigma


def _steps_setup(grid: TimeGrid, control, j0: int):
    """Per-step control values and accumulation-interval ids.

    Steps are attributed to basis intervals by their midpoint, which realises
    the left-endpoint rule exactly for grid-aligned breakpoints while staying
    robust to floating-point ties at the breakpoints themselves.
    """
    t_mid = (j0 + np.arange(grid.M) + 0.5) * grid.dt
    u_steps = control.eval(t_mid)
    interval_id = control.interval_index(t_mid)
    return (
        np.ascontiguousarray(u_steps, dtype=float),
        np.ascontiguousarray(interval_id, dtype=np.int64),
    )


def _check_cover(grid: TimeGrid, control, j0: int):
    t0 = j0 * grid.dt
    t1 = (j0 + grid.M) * grid.dt
    eps = 1e-9 * max(1.0, t1)
    if control.breakpoints[0] > t0 + eps or control.breakpoints[-1] < t1 - eps:
        raise ValueError("control does not cover the simulated time window")


def simulate(
    params: ModelParams,
    grid: TimeGrid,
    control,
    init: SystemState,
    seed: SeedSpec,
    path_id: int = 0,
    j0: int = 0,
    follower_slots: np.ndarray | None = None,
) -> TrajectoryBundle:
    """Integrate one path, storing every grid node and leader increment.

    Bit-identical to path ``path_id`` of :func:`simulate_batch` with the same
    seed.  ``j0`` offsets the absolute step index (receding-horizon restarts
    keep their own time coordinates).  ``follower_slots`` remaps followers to
    noise substreams; the default is the identity.
    """
    _check_cover(grid, control, j0)
    N = params.N
    if init.X.shape[0] != N:
        raise ValueError("simulate: init state size does not match params.N")
    u_steps, interval_id = _steps_setup(grid, control, j0)
    K = control.n_intervals
    M = grid.M
    if follower_slots is None:
        follower_slots = np.arange(N, dtype=np.int64)
    else:
        follower_slots = np.ascontiguousarray(follower_slots, dtype=np.int64)
    X0 = init.X[None, :].copy()
    Y0 = np.array([init.Y], dtype=float)
    X_traj = np.empty((1, M + 1, N))
    Y_traj = np.empty((1, M + 1))
    dB_traj = np.empty((1, M))
    phi = np.empty(1)
    dBsum = np.empty((1, K))
    XT = np.empty((1, N))
    YT = np.empty(1)
    cap = np.empty(1)
    _kernels.hk_paths(
        np.uint64(seed.master_seed), seed.follower_stream, seed.leader_stream,
        X0, Y0, path_id, j0, M, grid.dt, u_steps, interval_id,
        params.k, params.k_L, params.sigma, params.R, follower_slots,
        True, X_traj, Y_traj, dB_traj,
        phi, dBsum, XT, YT, cap,
    )
    return TrajectoryBundle(X=X_traj[0], Y=Y_traj[0], dBY=dB_traj[0], grid=grid, params=params)


def simulate_batch(
    params: ModelParams,
    grid: TimeGrid,
    control,
    init: SystemState | None,
    n_paths: int,
    seed: SeedSpec,
    path0: int = 0,
    j0: int = 0,
    y0: float = 0.8,
) -> FunctionalBatch:
    """Ensemble run returning per-path functionals only.

    ``init=None`` samples follower initial positions i.i.d. from the von
    Mises mixture (per path, per follower, from the init stream) and starts
    the leader at ``y0``; otherwise every path starts from the given state.
    """
    from .core import sample_initial_followers

    _check_cover(grid, control, j0)
    N = params.N
    u_steps, interval_id = _steps_setup(grid, control, j0)
    K = control.n_intervals
    M = grid.M
    if init is None:
        X0 = sample_initial_followers(seed, n_paths, N, path0=path0)
        Y0 = np.full(n_paths, float(y0))
    else:
        if init.X.shape[0] != N:
            raise ValueError("simulate_batch: init state size does not match params.N")
        X0 = np.tile(init.X, (n_paths, 1))
        Y0 = np.full(n_paths, init.Y)
    dummy3 = np.empty((1, 1, 1))
    dummy2 = np.empty((1, 1))
    phi = np.empty(n_paths)
    dBsum = np.empty((n_paths, K))
    XT = np.empty((n_paths, N))
    YT = np.empty(n_paths)
    cap = np.empty(n_paths)
    follower_slots = np.arange(N, dtype=np.int64)
    _kernels.hk_paths(
        np.uint64(seed.master_seed), seed.follower_stream, seed.leader_stream,
        X0, Y0, path0, j0, M, grid.dt, u_steps, interval_id,
        params.k, params.k_L, params.sigma, params.R, follower_slots,
        False, dummy3, dummy2, dummy2,
        phi, dBsum, XT, YT, cap,
    )
    interval_dt = control.interval_quadrature_lengths(grid, j0)
    return FunctionalBatch(
        phi=phi, dB_sums=dBsum, X_T=XT, Y_T=YT, capture=cap,
        u_steps=u_steps, interval_dt=interval_dt, grid=grid, params=params,
    )


def export_trajectory_csv(bundles, path, path_ids=None):
    """Write trajectories as ``path_id, step, t, Y, X_0..X_{N-1}`` rows."""
    bundles = list(bundles)
    if path_ids is None:
        path_ids = list(range(len(bundles)))
    N = bundles[0].params.N
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path_id", "step", "t", "Y"] + [f"X_{i}" for i in range(N)])
        for pid, b in zip(path_ids, bundles):
            for j in range(b.grid.M + 1):
                row = [pid, j, repr(j * b.grid.dt), repr(float(b.Y[j]))]
                row += [repr(float(v)) for v in b.X[j]]
                w.writerow(row)


def export_noise_csv(bundles, path, path_ids=None):
    """Write leader increments as ``path_id, step, dBY`` rows."""
    bundles = list(bundles)
    if path_ids is None:
        path_ids = list(range(len(bundles)))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path_id", "step", "dBY"])
        for pid, b in zip(path_ids, bundles):
            for j in range(b.grid.M):
                w.writerow([pid, j, repr(float(b.dBY[j]))])
