"""Nonlinear Fokker-Planck density coupled to the leader SDE.

The follower law is advanced by a positivity-preserving, mass-conserving
finite-volume scheme with Chang-Cooper exponential-fitting fluxes on a
periodic uniform grid, under the explicit stability bound
``dt <= dx^2 / (2 dx (k + k_L) R + sigma^2)``.  Only the leader carries
noise, so the cost-derivative estimators apply unchanged with the density in
place of the empirical measure.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import _kernels, rng
from .core import ModelParams, SeedSpec, TimeGrid, geodesic_disp, mixture_density
from .dynamics import FunctionalBatch, _steps_setup, _check_cover

_MASS_TOL = 1e-10
_NEG_TOL = -1e-14


@dataclass(frozen=True)
class GridDensity:
    """Cell-averaged probability density on n periodic cells of width 1/n."""

    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.ndim != 1 or v.size < 2:
            raise ValueError("GridDensity: values must be a 1-d array with n >= 2")
        if np.any(v < 0):
            raise ValueError("GridDensity: values must be non-negative")
        if abs(float(np.sum(v)) * self.dx - 1.0) > _MASS_TOL:
            raise ValueError("GridDensity: cell masses must sum to 1")

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def dx(self) -> float:
        return 1.0 / self.values.size

    def cell_centres(self) -> np.ndarray:
        return (np.arange(self.n) + 0.5) * self.dx

    @classmethod
    def uniform(cls, n: int) -> "GridDensity":
        return cls(np.full(n, 1.0))

    @classmethod
    def from_function(cls, fn, n: int) -> "GridDensity":
        """Density from point values at cell centres, renormalised."""
        x = (np.arange(n) + 0.5) / n
        v = np.asarray(fn(x), dtype=float)
        v = np.clip(v, 0.0, None)
        return cls(v / (np.sum(v) / n))

    @classmethod
    def from_mixture(cls, n: int) -> "GridDensity":
        return cls.from_function(mixture_density, n)

    @classmethod
    def from_samples(cls, xs, n: int) -> "GridDensity":
        """Histogram of torus samples as a cell-averaged density."""
        xs = np.asarray(xs, dtype=float)
        counts, _ = np.histogram(xs, bins=n, range=(0.0, 1.0))
        return cls(counts.astype(float) * n / xs.size)


@dataclass(frozen=True)
class MeanFieldTrajectory:
    """One realised density/leader path with retained leader increments."""

    densities: np.ndarray  # (M+1, n)
    Y: np.ndarray  # (M+1,)
    dBY: np.ndarray  # (M,)
    grid: TimeGrid

    def density(self, j: int) -> GridDensity:
        return GridDensity(self.densities[j].copy())


def interaction_stencil(n: int, R: float):
    """Offsets and weights of the circulant interaction sum.

    ``drift_i = k * dx * sum_t w[t] * g[(i + offs[t]) mod n]`` where
    ``w = a(|d|) * d`` for the signed cell-centre displacement d.
    """
    dx = 1.0 / n
    s = np.arange(n)
    d = geodesic_disp(0.0, s * dx)
    mask = np.abs(d) <= R
    offs = s[mask].astype(np.int64)
    wts = d[mask]
    return offs, wts


def mf_drift(x, Y: float, g: GridDensity, params: ModelParams):
    """Mean-field drift at position(s) x against density g and leader Y."""
    x = np.asarray(x, dtype=float)
    xc = g.cell_centres()
    d = geodesic_disp(x[..., None], xc[None, :] if x.ndim else xc)
    kern = np.abs(d) <= params.R
    conv = np.sum(np.where(kern, d, 0.0) * g.values, axis=-1) * g.dx
    out = params.k * conv
    dY = geodesic_disp(x, Y)
    out = out + params.k_L * np.where(np.abs(dY) <= params.R, dY, 0.0)
    return float(out) if x.ndim == 0 else out


def cfl_max_dt(params: ModelParams, dx: float) -> float:
    """Stability/positivity bound dt <= dx^2/(2 dx (k+k_L) R + sigma^2)."""
    if dx <= 0:
        raise ValueError("cfl_max_dt: dx must be positive")
    denom = 2.0 * dx * (params.k + params.k_L) * params.R + params.sigma**2
    if denom == 0.0:
        return np.inf
    return dx * dx / denom


def fp_step(g: GridDensity, Y: float, u_t: float, params: ModelParams, dt: float) -> GridDensity:
    """One conservative explicit step of the density.

    Faces carry Chang-Cooper fluxes built from cell-centre drifts averaged to
    the faces; periodic indexing.  Rejects dt above the stability bound and
    any emerging negativity beyond roundoff (-1e-14); smaller undershoots are
    clipped and the mass renormalised.
    """
    n = g.n
    dx = g.dx
    if dt > cfl_max_dt(params, dx):
        raise ValueError("fp_step: dt violates the stability bound")
    offs, wts = interaction_stencil(n, params.R)
    gn = np.empty(n)
    bc = np.empty(n)
    Bf = np.empty(n)
    xc = np.ascontiguousarray(g.cell_centres())
    worst = _kernels._mf_step(
        np.ascontiguousarray(g.values), gn, bc, Bf, float(Y), dt, dx,
        params.k, params.k_L, params.sigma, params.R, offs, wts, xc,
    )
    if worst < _NEG_TOL:
        raise FloatingPointError(
            f"fp_step: negativity {worst:.3e} beyond tolerance; check the CFL bound"
        )
    return GridDensity(gn)


def simulate_mf(
    params: ModelParams,
    grid: TimeGrid,
    control,
    g0: GridDensity,
    Y0: float,
    seed: SeedSpec,
    path_id: int = 0,
    j0: int = 0,
) -> MeanFieldTrajectory:
    """One realised mean-field path.

    Per step: the leader moves by Euler-Maruyama with a fresh Brownian
    increment, then the density is stepped with the updated leader position.
    The leader update is expression-identical to the finite-N integrator, so
    a shared leader stream yields bit-identical leader paths.
    """
    _check_cover(grid, control, j0)
    if grid.dt > cfl_max_dt(params, 1.0 / g0.n):
        raise ValueError("simulate_mf: grid dt violates the stability bound")
    u_steps, _ = _steps_setup(grid, control, j0)
    M = grid.M
    n = g0.n
    dens = np.empty((M + 1, n))
    Y = np.empty(M + 1)
    dBY = np.empty(M)
    dens[0] = g0.values
    Y[0] = Y0
    g = g0
    y = float(Y0)
    sqdt = float(np.sqrt(grid.dt))
    for j in range(M):
        z = rng.normal(np.uint64(seed.master_seed), seed.leader_stream, path_id, j0 + j, 0)
        dB = sqdt * z
        dBY[j] = dB
        y = _kernels.wrap_scalar(y + u_steps[j] * grid.dt + params.sigma * dB)
        g = fp_step(g, y, float(u_steps[j]), params, grid.dt)
        dens[j + 1] = g.values
        Y[j + 1] = y
    return MeanFieldTrajectory(densities=dens, Y=Y, dBY=dBY, grid=grid)


def mf_running_cost(Y: float, g: GridDensity) -> float:
    """Squared geodesic distance from the leader, integrated against g."""
    d = geodesic_disp(Y, g.cell_centres())
    return float(np.sum(d * d * g.values) * g.dx)


def mf_capture_mass(Y: float, g: GridDensity, R: float) -> float:
    """Probability mass within geodesic distance R of the leader."""
    d = np.abs(geodesic_disp(Y, g.cell_centres()))
    return float(np.sum(g.values[d <= R]) * g.dx)


def simulate_mf_batch(
    params: ModelParams,
    grid: TimeGrid,
    control,
    g0: GridDensity,
    Y0: float,
    n_paths: int,
    seed: SeedSpec,
    path0: int = 0,
    j0: int = 0,
    zero_cost: bool = False,
) -> FunctionalBatch:
    """Ensemble of mean-field paths reduced to per-path functionals.

    The returned batch quacks like the finite-N one: ``phi`` integrates the
    mean-field running cost (or 0 with ``zero_cost``), ``dB_sums`` holds the
    leader-increment interval sums, ``X_T`` the terminal densities and
    ``capture`` the terminal mass within radius R of the leader.
    """
    _check_cover(grid, control, j0)
    n = g0.n
    if grid.dt > cfl_max_dt(params, 1.0 / n):
        raise ValueError("simulate_mf_batch: grid dt violates the stability bound")
    u_steps, interval_id = _steps_setup(grid, control, j0)
    K = control.n_intervals
    M = grid.M
    offs, wts = interaction_stencil(n, params.R)
    xc = np.ascontiguousarray((np.arange(n) + 0.5) / n)
    dummy3 = np.empty((1, 1, 1))
    dummy2 = np.empty((1, 1))
    phi = np.empty(n_paths)
    dBsum = np.empty((n_paths, K))
    gT = np.empty((n_paths, n))
    YT = np.empty(n_paths)
    cap = np.empty(n_paths)
    neg = np.empty(n_paths)
    _kernels.mf_paths(
        np.uint64(seed.master_seed), seed.leader_stream,
        np.ascontiguousarray(g0.values), np.full(n_paths, float(Y0)),
        path0, j0, M, grid.dt, u_steps, interval_id,
        params.k, params.k_L, params.sigma, params.R,
        offs, wts, xc, g0.dx, zero_cost,
        False, dummy3, dummy2, dummy2,
        phi, dBsum, gT, YT, cap, neg,
    )
    if float(np.min(neg)) < _NEG_TOL:
        raise FloatingPointError("simulate_mf_batch: negativity beyond tolerance")
    return FunctionalBatch(
        phi=phi, dB_sums=dBsum, X_T=gT, Y_T=YT, capture=cap,
        u_steps=u_steps, interval_dt=control.interval_quadrature_lengths(grid, j0),
        grid=grid, params=params,
    )


def export_density_csv(traj: MeanFieldTrajectory, path, path_id: int = 0):
    """Write a density path as ``path_id, step, t, Y, g_0..g_{n-1}`` rows."""
    n = traj.densities.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path_id", "step", "t", "Y"] + [f"g_{i}" for i in range(n)])
        for j in range(traj.grid.M + 1):
            row = [path_id, j, repr(j * traj.grid.dt), repr(float(traj.Y[j]))]
            row += [repr(float(v)) for v in traj.densities[j]]
            w.writerow(row)
