"""Monte Carlo estimators of the control cost and its derivatives.

The control is a linear combination of indicator basis functions on time
intervals.  Derivatives of the cost in the basis coefficients are estimated
from path functionals: the realised running-cost integral ``phi_T`` and the
martingale integrals ``M^{e_k}`` of ``sigma^{-1}`` against the leader's
Brownian increments, following the likelihood-ratio (Girsanov) calculus.

Two Hessian estimators are provided.  ``hessian`` is the classical
likelihood-ratio second-derivative formula, which is exact at ``a = 0`` and
acts as a positively-inflated curvature proxy elsewhere; ``hessian_score``
is the unbiased score-function Hessian used by the optimiser by default.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .core import ModelParams, SeedSpec, SystemState, TimeGrid
from .dynamics import FunctionalBatch, TrajectoryBundle, simulate_batch

__all__ = [
    "PiecewiseConstantControl",
    "PathFunctionals",
    "EstimateWithError",
    "path_functionals",
    "cost_of_batch",
    "cost_direct",
    "gradient",
    "hessian",
    "hessian_score",
    "cost_reweighted",
    "derivative_report",
]


@dataclass(frozen=True)
class PiecewiseConstantControl:
    """Piecewise-constant control: breakpoints t_1 < ... < t_m and one
    coefficient per interval I_k = [t_k, t_{k+1})."""

    breakpoints: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        bp = np.ascontiguousarray(self.breakpoints, dtype=float)
        a = np.ascontiguousarray(self.coeffs, dtype=float)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "coeffs", a)
        if bp.ndim != 1 or bp.size < 2:
            raise ValueError("control needs at least two breakpoints")
        if np.any(~np.isfinite(bp)) or np.any(np.diff(bp) <= 0):
            raise ValueError("breakpoints must be finite and strictly increasing")
        if a.shape != (bp.size - 1,) or np.any(~np.isfinite(a)):
            raise ValueError("coeffs must be finite with one value per interval")

    @classmethod
    def equal_intervals(cls, T: float, coeffs) -> "PiecewiseConstantControl":
        """Equally spaced intervals on [0, T], one coefficient each."""
        a = np.atleast_1d(np.asarray(coeffs, dtype=float))
        return cls(np.linspace(0.0, T, a.size + 1), a)

    @classmethod
    def zero(cls, T: float, m: int) -> "PiecewiseConstantControl":
        return cls.equal_intervals(T, np.zeros(m))

    @property
    def n_intervals(self) -> int:
        return self.coeffs.size

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(self.breakpoints)

    def with_coeffs(self, coeffs) -> "PiecewiseConstantControl":
        return replace(self, coeffs=np.asarray(coeffs, dtype=float))

    def tail(self, k: int) -> "PiecewiseConstantControl":
        """The control restricted to intervals k..end (receding horizon)."""
        return PiecewiseConstantControl(self.breakpoints[k:], self.coeffs[k:])

    def interval_index(self, t) -> np.ndarray:
        """Index of the interval containing t, -1 outside [t_1, t_m]."""
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.breakpoints, t, side="right") - 1
        idx = np.where((t >= self.breakpoints[0]) & (t <= self.breakpoints[-1]),
                       np.clip(idx, 0, self.n_intervals - 1), -1)
        return idx.astype(np.int64)

    def eval(self, t):
        """Control value; the final time maps to the last interval."""
        t_arr = np.asarray(t, dtype=float)
        idx = np.clip(
            np.searchsorted(self.breakpoints, t_arr, side="right") - 1,
            0,
            self.n_intervals - 1,
        )
        out = self.coeffs[idx]
        return float(out) if np.isscalar(t) or t_arr.ndim == 0 else out

    def interval_quadrature_lengths(self, grid: TimeGrid, j0: int = 0) -> np.ndarray:
        """Discrete interval lengths: sum of dt over steps attributed to each
        interval (steps are attributed by their midpoint, which implements the
        left-endpoint rule robustly for grid-aligned breakpoints)."""
        t_mid = (j0 + np.arange(grid.M) + 0.5) * grid.dt
        idx = self.interval_index(t_mid)
        counts = np.bincount(idx[idx >= 0], minlength=self.n_intervals)
        return counts.astype(float) * grid.dt


@dataclass(frozen=True)
class EstimateWithError:
    mean: float
    std_error: float
    n_paths: int

    def __post_init__(self):
        if self.std_error < 0:
            raise ValueError("std_error must be non-negative")


@dataclass(frozen=True)
class PathFunctionals:
    """phi_T and the martingale integrals of one path."""

    phi_T: float
    M_e: np.ndarray
    M_u: float

    def __post_init__(self):
        object.__setattr__(self, "M_e", np.asarray(self.M_e, dtype=float))


def path_functionals(traj: TrajectoryBundle, control: PiecewiseConstantControl) -> PathFunctionals:
    """Recompute phi_T and M^{e_k} from a stored trajectory.

    Independent of the fused ensemble kernel; used to cross-check it.
    """
    sigma = traj.params.sigma
    if sigma <= 0:
        raise ValueError("path_functionals: sigma must be invertible (> 0)")
    grid = traj.grid
    phi = 0.0
    if traj.params.N > 0:
        from .dynamics import running_cost

        for j in range(grid.M):
            phi += running_cost(float(traj.Y[j]), traj.X[j]) * grid.dt
    t_mid = (np.arange(grid.M) + 0.5) * grid.dt
    idx = control.interval_index(t_mid)
    M_e = np.zeros(control.n_intervals)
    for j in range(grid.M):
        if idx[j] >= 0:
            M_e[idx[j]] += traj.dBY[j]
    M_e /= sigma
    return PathFunctionals(phi_T=phi, M_e=M_e, M_u=float(control.coeffs @ M_e))


# --------------------------------------------------------------------------
# cost and derivatives from ensemble batches
# --------------------------------------------------------------------------


def control_cost_quadrature(batch: FunctionalBatch) -> float:
    """(lam/2) * sum_j u(t_j)^2 dt for the control the batch ran under."""
    lam = batch.params.lam
    return 0.5 * lam * float(np.sum(batch.u_steps**2)) * batch.grid.dt


def per_path_cost(batch: FunctionalBatch) -> np.ndarray:
    """Realised cost per path: phi_T plus the deterministic control cost."""
    return batch.phi + control_cost_quadrature(batch)


def cost_of_batch(batch: FunctionalBatch) -> EstimateWithError:
    """Total cost estimate: mean of phi_T plus the deterministic control cost."""
    j = per_path_cost(batch)
    n = batch.n_paths
    se = float(np.std(j, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return EstimateWithError(mean=float(np.mean(j)), std_error=se, n_paths=n)


def cost_direct(
    params: ModelParams,
    grid: TimeGrid,
    control: PiecewiseConstantControl,
    init: SystemState | None,
    n_paths: int,
    seed: SeedSpec,
) -> EstimateWithError:
    """Monte Carlo cost under the given control, with standard error."""
    if n_paths < 2:
        raise ValueError("cost_direct: n_paths must be >= 2")
    batch = simulate_batch(params, grid, control, init, n_paths, seed)
    return cost_of_batch(batch)


def _check_batch(batch: FunctionalBatch, control: PiecewiseConstantControl):
    if batch.params.sigma <= 0:
        raise ValueError("derivative estimators require sigma > 0")
    if batch.dB_sums.shape[1] != control.n_intervals:
        raise ValueError("basis length does not match the batch's accumulators")


def gradient(
    batch: FunctionalBatch,
    control: PiecewiseConstantControl,
    center: bool = True,
):
    """First-derivative estimate per basis coefficient, with standard errors.

    Per path: ``(phi_T + lam*sigma^2*(M_u^2/2 + M_u)) * M_{e_k}``, averaged
    over paths.  ``center`` subtracts the sample mean of phi_T inside the
    product (a zero-mean control variate; the expectation is unchanged).
    """
    _check_batch(batch, control)
    params = batch.params
    Me = batch.martingale_integrals()
    Mu = Me @ control.coeffs
    phi = batch.phi - np.mean(batch.phi) if center else batch.phi
    w = phi + params.lam * params.sigma**2 * (0.5 * Mu**2 + Mu)
    G = w[:, None] * Me
    n = batch.n_paths
    grad = G.mean(axis=0)
    se = G.std(axis=0, ddof=1) / np.sqrt(n)
    return grad, se


def hessian(batch: FunctionalBatch, control: PiecewiseConstantControl):
    """Second-derivative estimate, classical likelihood-ratio form.

    Per path: ``(phi_T + lam*sigma^2*(M_u^2/2 + 2 M_u + 1)) * M_{e_k} M_{e_l}``.
    Exact at a = 0; away from 0 it carries additional positive terms of order
    ``|a|^2`` and acts as an inflated curvature proxy (see hessian_score for
    the unbiased version).  Symmetric by construction.
    """
    _check_batch(batch, control)
    params = batch.params
    Me = batch.martingale_integrals()
    Mu = Me @ control.coeffs
    w = batch.phi + params.lam * params.sigma**2 * (0.5 * Mu**2 + 2.0 * Mu + 1.0)
    T3 = w[:, None, None] * Me[:, :, None] * Me[:, None, :]
    n = batch.n_paths
    H = T3.mean(axis=0)
    H = 0.5 * (H + H.T)
    se = T3.std(axis=0, ddof=1) / np.sqrt(n)
    return H, se


def hessian_score(
    batch: FunctionalBatch,
    control: PiecewiseConstantControl,
    center: bool = True,
):
    """Unbiased score-function Hessian.

    Per path: ``phi_T * (M_{e_k} M_{e_l} - delta_kl * s_k)`` plus the exact
    control-cost curvature ``lam * diag(|I_k|)``, with ``s_k = |I_k| / sigma^2``
    and ``|I_k|`` the discrete interval length.
    """
    _check_batch(batch, control)
    params = batch.params
    Me = batch.martingale_integrals()
    s = batch.interval_dt / params.sigma**2
    phi = batch.phi - np.mean(batch.phi) if center else batch.phi
    outer = Me[:, :, None] * Me[:, None, :] - np.diag(s)[None, :, :]
    T3 = phi[:, None, None] * outer
    n = batch.n_paths
    H = T3.mean(axis=0) + params.lam * np.diag(batch.interval_dt)
    H = 0.5 * (H + H.T)
    se = T3.std(axis=0, ddof=1) / np.sqrt(n)
    return H, se


def cost_reweighted(
    base_batch: FunctionalBatch,
    control: PiecewiseConstantControl,
):
    """Cost under ``control`` from paths simulated with zero leader control.

    Girsanov reweighting: ``log Z = sum_j u(t_j) dB_j / sigma
    - (1/2) sum_j u(t_j)^2 dt / sigma^2`` on the base paths.  Returns the
    estimate and the effective sample size; warns when the weights are
    degenerate (ESS below 10% of the path count).
    """
    _check_batch(base_batch, control)
    if np.any(base_batch.u_steps != 0.0):
        raise ValueError("cost_reweighted: base paths must use zero control")
    if not np.allclose(
        control.interval_quadrature_lengths(base_batch.grid),
        base_batch.interval_dt,
        rtol=0.0,
        atol=1e-12,
    ):
        raise ValueError(
            "cost_reweighted: control intervals must match the base batch's accumulators"
        )
    params = base_batch.params
    sigma = params.sigma
    Me = base_batch.martingale_integrals()
    # u is constant on the accumulation intervals, so the stochastic integral
    # collapses to a dot product with the interval increments
    t_mid = (np.arange(base_batch.grid.M) + 0.5) * base_batch.grid.dt
    u_target = control.eval(t_mid)
    quad_u2 = float(np.sum(u_target**2)) * base_batch.grid.dt
    log_z = Me @ control.coeffs - 0.5 * quad_u2 / sigma**2
    z = np.exp(log_z)
    kappa = 0.5 * params.lam * quad_u2
    vals = z * (base_batch.phi + kappa)
    n = base_batch.n_paths
    est = EstimateWithError(
        mean=float(np.mean(vals)),
        std_error=float(np.std(vals, ddof=1) / np.sqrt(n)) if n > 1 else 0.0,
        n_paths=n,
    )
    zmax = float(np.max(z))
    if zmax > 0.0:
        w = z / zmax  # rescale before squaring to dodge underflow
        ess = float(np.sum(w)) ** 2 / float(np.sum(w**2))
    else:
        ess = 0.0
    if ess < 0.1 * n:
        warnings.warn(
            f"cost_reweighted: effective sample size {ess:.1f} below 10% of "
            f"{n} paths; the reweighted estimate is unreliable",
            RuntimeWarning,
            stacklevel=2,
        )
    return est, ess


def derivative_report(
    batch: FunctionalBatch,
    control: PiecewiseConstantControl,
    seed: SeedSpec,
    path=None,
) -> dict:
    """Gradient/Hessian dump; written as JSON when a path is given."""
    grad, grad_se = gradient(batch, control)
    H, H_se = hessian(batch, control)
    report = {
        "a": control.coeffs.tolist(),
        "grad": grad.tolist(),
        "grad_se": grad_se.tolist(),
        "hess": H.tolist(),
        "hess_se": H_se.tolist(),
        "n_paths": batch.n_paths,
        "seed": seed.master_seed,
    }
    if path is not None:
        with open(path, "w") as fh:
            json.dump(report, fh, indent=2)
    return report
