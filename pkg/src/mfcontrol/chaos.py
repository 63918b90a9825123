"""Synchronous-coupling harness for the finite-N to mean-field convergence.

The finite system and the density system are driven by the identical leader
noise stream; follower initial positions are i.i.d. from the same law as the
density's initial datum.  Squared transport distance between the empirical
follower measure and the grid density is recorded at every grid node, and a
log-log slope over N quantifies the convergence rate.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core import ModelParams, SeedSpec, SystemState, TimeGrid, geodesic_disp, sample_initial_followers
from .dynamics import simulate
from .meanfield import GridDensity, cfl_max_dt, simulate_mf


@dataclass(frozen=True)
class ChaosRecord:
    N: int
    rep: int
    sup_w2_sq: float
    sup_dy_sq: float

    def __post_init__(self):
        if self.sup_w2_sq < 0 or self.sup_dy_sq < 0:
            raise ValueError("ChaosRecord statistics must be non-negative")


def _resample_sorted(sorted_rows: np.ndarray, m: int) -> np.ndarray:
    """Quantile-resample sorted atom rows to m atoms (exact replication when
    m is a multiple of the atom count)."""
    n = sorted_rows.shape[1]
    if m % n == 0:
        return np.repeat(sorted_rows, m // n, axis=1)
    idx = np.minimum((np.floor((np.arange(m) + 0.5) / m * n)).astype(int), n - 1)
    return sorted_rows[:, idx]


def coupled_run(
    params: ModelParams,
    grid: TimeGrid,
    control,
    N: int,
    seed: SeedSpec,
    rep: int = 0,
    n_cells: int = 64,
    m_atoms: int = 256,
    Y0: float = 0.8,
    g0: GridDensity | None = None,
    X0: np.ndarray | None = None,
) -> ChaosRecord:
    """One coupled realisation of both systems on a shared leader stream.

    Followers start i.i.d. from the mixture (the density's initial datum)
    unless explicit positions are given.
    """
    if grid.dt > cfl_max_dt(params, 1.0 / n_cells):
        raise ValueError("coupled_run: grid dt violates the density stability bound")
    p = params.with_(N=N)
    if g0 is None:
        g0 = GridDensity.from_mixture(n_cells)
    if X0 is None:
        X0 = sample_initial_followers(seed, 1, N)[0]
    state = SystemState(X=X0, Y=Y0)
    bundle = simulate(p, grid, control, state, seed, path_id=0)
    mf = simulate_mf(p, grid, control, g0, Y0, seed, path_id=0)

    M = grid.M
    q_mid = (np.arange(m_atoms) + 0.5) / m_atoms
    gq = np.empty((M + 1, m_atoms))
    for j in range(M + 1):
        _kernels.density_quantiles(mf.densities[j], g0.dx, q_mid, gq[j])
    mu = _resample_sorted(np.sort(bundle.X, axis=1), m_atoms)
    w2sq = np.empty(M + 1)
    _kernels.w2sq_circle_sorted_batch(np.ascontiguousarray(gq), np.ascontiguousarray(mu), w2sq)

    dy = geodesic_disp(mf.Y, bundle.Y)
    return ChaosRecord(
        N=N,
        rep=rep,
        sup_w2_sq=float(np.max(w2sq)),
        sup_dy_sq=float(np.max(dy * dy)),
    )


@dataclass(frozen=True)
class ChaosStudy:
    records: tuple
    N_list: tuple

    def means(self):
        """Per-N means and standard errors of both statistics."""
        out = []
        for N in self.N_list:
            w2 = np.array([r.sup_w2_sq for r in self.records if r.N == N])
            dy = np.array([r.sup_dy_sq for r in self.records if r.N == N])
            out.append(
                {
                    "N": N,
                    "mean_sup_w2_sq": float(np.mean(w2)),
                    "se_sup_w2_sq": float(np.std(w2, ddof=1) / np.sqrt(w2.size)) if w2.size > 1 else 0.0,
                    "mean_sup_dy_sq": float(np.mean(dy)),
                    "se_sup_dy_sq": float(np.std(dy, ddof=1) / np.sqrt(dy.size)) if dy.size > 1 else 0.0,
                }
            )
        return out


def convergence_study(
    params: ModelParams,
    grid: TimeGrid,
    control,
    N_list,
    reps: int,
    seed: SeedSpec,
    n_cells: int = 64,
    m_atoms: int = 256,
    Y0: float = 0.8,
) -> ChaosStudy:
    """Replicated coupled runs over an ascending list of system sizes."""
    N_list = [int(N) for N in N_list]
    if sorted(N_list) != N_list or len(N_list) < 1:
        raise ValueError("convergence_study: N_list must be ascending and non-empty")
    if reps < 1:
        raise ValueError("convergence_study: reps must be >= 1")
    g0 = GridDensity.from_mixture(n_cells)
    records = []
    for r in range(reps):
        # one stream family per replication, shared by every system size:
        # smaller systems use nested subsets of the same follower pool and
        # noise, so each N is marginally unchanged while the per-replication
        # luck is common across N and cancels out of rate fits
        rep_seed = seed.derive(f"chaos-rep{r}")
        for N in N_list:
            rec = coupled_run(
                params, grid, control, N, rep_seed,
                rep=r, n_cells=n_cells, m_atoms=m_atoms, Y0=Y0, g0=g0,
            )
            records.append(rec)
    return ChaosStudy(records=tuple(records), N_list=tuple(N_list))


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    ci_low: float
    ci_high: float


def fit_slope(study: ChaosStudy, n_boot: int = 4000, boot_seed: int = 0) -> SlopeFit:
    """Least-squares slope of log mean sup-W2^2 against log N, with a 95%
    bootstrap confidence interval over replications.

    When every size carries the same replication count (the coupled design
    of convergence_study), whole replications are resampled so that the
    common per-replication randomness cancels out of the slope.
    """
    Ns = np.array(study.N_list, dtype=float)
    if Ns.size < 3:
        raise ValueError("fit_slope: need at least 3 system sizes")
    groups = [np.array([r.sup_w2_sq for r in study.records if r.N == N]) for N in study.N_list]
    means = np.array([g.mean() for g in groups])
    if np.any(means <= 0):
        raise ValueError("fit_slope: non-positive means cannot be fit in log space")
    logN = np.log(Ns)
    slope = float(np.polyfit(logN, np.log(means), 1)[0])
    rng_boot = np.random.Generator(np.random.PCG64(boot_seed))
    paired = len({g.size for g in groups}) == 1
    reps = groups[0].size
    slopes = np.empty(n_boot)
    for b in range(n_boot):
        if paired:
            idx = rng_boot.integers(0, reps, reps)
            bm = np.array([g[idx].mean() for g in groups])
        else:
            bm = np.array([g[rng_boot.integers(0, g.size, g.size)].mean() for g in groups])
        bm = np.maximum(bm, 1e-300)
        slopes[b] = np.polyfit(logN, np.log(bm), 1)[0]
    lo, hi = np.percentile(slopes, [2.5, 97.5])
    return SlopeFit(slope=slope, ci_low=float(lo), ci_high=float(hi))


def export_study_csv(study: ChaosStudy, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["N", "rep", "sup_w2_sq", "sup_dy_sq"])
        for r in study.records:
            w.writerow([r.N, r.rep, repr(r.sup_w2_sq), repr(r.sup_dy_sq)])


def export_study_summary(study: ChaosStudy, fit: SlopeFit, path):
    payload = {
        "per_N": study.means(),
        "slope": fit.slope,
        "slope_ci": [fit.ci_low, fit.ci_high],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
    return payload
