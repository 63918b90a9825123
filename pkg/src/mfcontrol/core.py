"""Shared domain types, torus geometry, time grids and seeding.

Positions live on the unit torus, represented as floats in ``[0, 1)``.
Signed displacements use the half-open convention ``[-0.5, 0.5)`` so the
antipodal tie is resolved deterministically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

from . import rng

# --------------------------------------------------------------------------
# torus geometry
# --------------------------------------------------------------------------


def wrap(x):
    """Map a real (scalar or array) to the unit torus ``[0, 1)``.

    Non-finite input is rejected.
    """
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("wrap: input must be finite")
    out = arr - np.floor(arr)
    # floor-based wrap can return 1.0 for tiny negative inputs
    out = np.where(out >= 1.0, out - 1.0, out)
    return float(out) if np.isscalar(x) or arr.ndim == 0 else out


def geodesic_disp(x, y):
    """Signed displacement from ``x`` to ``y`` on the torus, in ``[-0.5, 0.5)``.

    The unique ``r`` with ``x + r = y (mod 1)``; ``|r|`` is the geodesic
    distance.
    """
    x_arr = np.asarray(x, dtype=float)
    y_arr = np.asarray(y, dtype=float)
    d = y_arr - x_arr + 0.5
    r = d - np.floor(d) - 0.5
    r = np.where(r >= 0.5, r - 1.0, r)
    scalar = np.isscalar(x) and np.isscalar(y)
    return float(r) if scalar or r.ndim == 0 else r


@njit(cache=True, inline="always")
def wrap_scalar(x):
    r = x - np.floor(x)
    if r >= 1.0:
        r -= 1.0
    return r


@njit(cache=True, inline="always")
def disp_scalar(x, y):
    d = y - x + 0.5
    r = d - np.floor(d) - 0.5
    if r >= 0.5:
        r -= 1.0
    return r


# --------------------------------------------------------------------------
# domain types
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelParams:
    """Scalar model and cost constants.

    k, k_L        follower-follower / leader-follower interaction strengths
    sigma         common diffusion coefficient for followers and leader
    R             interaction radius on the torus, in (0, 0.5]
    lam           control penalty, strictly positive
    T             time horizon
    N             follower count (0 gives a leader-only system, with the
                  running cost defined as 0)
    """

    k: float
    k_L: float
    sigma: float
    R: float
    lam: float
    T: float
    N: int

    def __post_init__(self):
        vals = (self.k, self.k_L, self.sigma, self.R, self.lam, self.T)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("ModelParams: all fields must be finite")
        if self.sigma < 0:
            raise ValueError("ModelParams: sigma must be >= 0")
        if not (0.0 < self.R <= 0.5):
            raise ValueError("ModelParams: R must lie in (0, 0.5]")
        if self.lam <= 0:
            raise ValueError("ModelParams: lam must be positive")
        if self.T <= 0:
            raise ValueError("ModelParams: T must be positive")
        if self.k < 0 or self.k_L < 0:
            raise ValueError("ModelParams: k and k_L must be >= 0")
        if int(self.N) != self.N or self.N < 0:
            raise ValueError("ModelParams: N must be a non-negative integer")

    def with_(self, **kwargs) -> "ModelParams":
        return replace(self, **kwargs)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on ``[0, T]`` with ``M`` steps of size ``dt``; ``T = M*dt``."""

    dt: float
    M: int

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ValueError("TimeGrid: dt must be positive and finite")
        if int(self.M) != self.M or self.M < 1:
            raise ValueError("TimeGrid: M must be a positive integer")

    @property
    def T(self) -> float:
        return self.dt * self.M

    def nodes(self) -> np.ndarray:
        return np.arange(self.M + 1) * self.dt

    @classmethod
    def from_horizon(cls, T: float, dt: float) -> "TimeGrid":
        M = int(round(T / dt))
        grid = cls(dt=dt, M=max(M, 1))
        if abs(grid.T - T) > 1e-12 * max(1.0, abs(T)):
            raise ValueError(f"TimeGrid: dt={dt} does not evenly divide T={T}")
        return grid


@dataclass(frozen=True)
class SeedSpec:
    """Master seed plus named substream labels.

    Identical SeedSpec and identical inputs give bit-identical simulation
    output.  The leader stream can be replayed alone, which is what the
    synchronous-coupling harness relies on.
    """

    master_seed: int
    follower_stream: int = rng.FOLLOWER_STREAM
    leader_stream: int = rng.LEADER_STREAM
    init_stream: int = rng.INIT_STREAM

    def derive(self, tag: str) -> "SeedSpec":
        """Independent SeedSpec for a sub-experiment (stage, replication...)."""
        return SeedSpec(
            master_seed=rng.derive_seed(self.master_seed, tag),
            follower_stream=self.follower_stream,
            leader_stream=self.leader_stream,
            init_stream=self.init_stream,
        )


@dataclass(frozen=True)
class SystemState:
    """Follower positions plus leader position at one instant."""

    X: np.ndarray
    Y: float

    def __post_init__(self):
        object.__setattr__(self, "X", np.ascontiguousarray(self.X, dtype=float))
        if self.X.ndim != 1:
            raise ValueError("SystemState: X must be a 1-d array")
        if np.any(self.X < 0) or np.any(self.X >= 1) or not (0 <= self.Y < 1):
            raise ValueError("SystemState: positions must lie in [0, 1)")


# --------------------------------------------------------------------------
# von Mises mixture (two-cluster initial condition)
# --------------------------------------------------------------------------

# location/concentration of the two mixture components, equal weights
VM_COMPONENTS = ((0.65, 4.0), (0.25, 8.0))


def vm_density(x, mu: float, kappa: float):
    """Period-1 von Mises density exp(kappa*cos(2*pi*(x-mu))) / I0(kappa)."""
    x = np.asarray(x, dtype=float)
    return np.exp(kappa * np.cos(2 * np.pi * (x - mu))) / np.i0(kappa)


def mixture_density(x, components=VM_COMPONENTS):
    """Equal-weight normalised mixture of von Mises components."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x, dtype=float)
    for mu, kappa in components:
        out += vm_density(x, mu, kappa)
    return out / len(components)


def mixture_cdf_grid(n: int = 20001, components=VM_COMPONENTS):
    """(x, cdf) pair on a fine grid, via trapezoidal quadrature."""
    x = np.linspace(0.0, 1.0, n)
    dens = mixture_density(x, components)
    cdf = np.concatenate(([0.0], np.cumsum((dens[1:] + dens[:-1]) * 0.5 * np.diff(x))))
    cdf /= cdf[-1]
    return x, cdf


_MAX_REJECTION_ATTEMPTS = 4096


@njit(cache=True, inline="always")
def _sample_mixture_one(seed, stream, path, slot, mu0, kap0, mu1, kap1):
    # step index packs (attempt, sub-draw): 0 = component pick, 1 = proposal,
    # 2 = accept/reject uniform
    u_comp = rng.uniform(seed, stream, path, 0, slot)
    if u_comp < 0.5:
        mu, kap = mu0, kap0
    else:
        mu, kap = mu1, kap1
    for attempt in range(1, _MAX_REJECTION_ATTEMPTS):
        x = rng.uniform(seed, stream, path, 4 * attempt + 1, slot)
        u = rng.uniform(seed, stream, path, 4 * attempt + 2, slot)
        # uniform envelope at the component's peak density
        if u <= np.exp(kap * (np.cos(2 * np.pi * (x - mu)) - 1.0)):
            return x
    return -1.0


@njit(cache=True)
def _sample_mixture_batch(out, seed, stream, path0, mu0, kap0, mu1, kap1):
    n_paths, n_slots = out.shape
    for p in range(n_paths):
        for i in range(n_slots):
            out[p, i] = _sample_mixture_one(
                seed, stream, path0 + p, i, mu0, kap0, mu1, kap1
            )


def sample_von_mises_mixture(
    seed: SeedSpec | int,
    count: int,
    components=VM_COMPONENTS,
    path: int = 0,
) -> np.ndarray:
    """I.i.d. samples from the normalised mixture, by rejection sampling.

    Deterministic given the seed; samples are keyed by ``(path, slot)`` so the
    same draws can be replayed per particle.
    """
    if count < 1:
        raise ValueError("sample_von_mises_mixture: count must be >= 1")
    spec = seed if isinstance(seed, SeedSpec) else SeedSpec(int(seed))
    (mu0, kap0), (mu1, kap1) = components
    out = np.empty((1, count))
    _sample_mixture_batch(
        out, np.uint64(spec.master_seed), spec.init_stream, path, mu0, kap0, mu1, kap1
    )
    if np.any(out < 0):
        raise RuntimeError("rejection sampler exhausted its attempt budget")
    return out[0]


def sample_initial_followers(
    seed: SeedSpec, n_paths: int, n_followers: int, path0: int = 0
) -> np.ndarray:
    """Mixture initial conditions for an ensemble, keyed by (path, follower)."""
    out = np.empty((n_paths, n_followers))
    if n_followers == 0:
        return out
    (mu0, kap0), (mu1, kap1) = VM_COMPONENTS
    _sample_mixture_batch(
        out, np.uint64(seed.master_seed), seed.init_stream, path0, mu0, kap0, mu1, kap1
    )
    if np.any(out < 0):
        raise RuntimeError("rejection sampler exhausted its attempt budget")
    return out
