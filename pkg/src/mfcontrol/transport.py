"""Quadratic transport distances between equal-weight atomic measures, on
the line and on the circle, plus a measure-to-grid-density variant.

All measures here carry uniform weights.  On the line, sorting gives the
exact W2.  On the circle, the optimal matching between equal-count sorted
sequences is one of the n cyclic shifts, which is enumerated exactly.
Unequal atom counts are reconciled by deterministic quantile resampling to
the least common multiple, capped at 4096 atoms.
"""

from __future__ import annotations

import math

import numpy as np

from . import _kernels
from .meanfield import GridDensity

_LCM_CAP = 4096


def _atoms(xs) -> np.ndarray:
    a = np.ascontiguousarray(xs, dtype=float).ravel()
    if a.size == 0:
        raise ValueError("transport: empty measure")
    return a


def quantile_resample(atoms: np.ndarray, m: int) -> np.ndarray:
    """m equal-mass atoms from the empirical quantile function at midpoints.

    Exact replication (the same measure) when m is a multiple of the count.
    """
    s = np.sort(atoms)
    n = s.size
    if m % n == 0:
        return np.repeat(s, m // n)
    idx = np.minimum((np.floor((np.arange(m) + 0.5) / m * n)).astype(int), n - 1)
    return s[idx]


def _common_size(mu: np.ndarray, nu: np.ndarray):
    if mu.size == nu.size:
        return np.sort(mu), np.sort(nu)
    m = min(math.lcm(mu.size, nu.size), _LCM_CAP)
    return quantile_resample(mu, m), quantile_resample(nu, m)


def w2_line(mu, nu) -> float:
    """Exact quadratic Wasserstein distance on the real line."""
    a, b = _common_size(_atoms(mu), _atoms(nu))
    return float(np.sqrt(np.mean((a - b) ** 2)))


def w2_circle(mu, nu) -> float:
    """Exact quadratic Wasserstein distance on the unit circle with
    geodesic ground metric, for equal-weight atoms."""
    a, b = _common_size(_atoms(mu), _atoms(nu))
    out = np.empty(1)
    _kernels.w2sq_circle_sorted_batch(a[None, :], b[None, :], out)
    return float(np.sqrt(out[0]))


def density_quantile_atoms(g: GridDensity, m: int) -> np.ndarray:
    """Deterministic m-atom quantisation of a grid density: the inverse
    piecewise-linear CDF at midpoints (i - 1/2)/m."""
    q = (np.arange(m) + 0.5) / m
    out = np.empty(m)
    _kernels.density_quantiles(np.ascontiguousarray(g.values), g.dx, q, out)
    return out


def w2_circle_density(mu, g: GridDensity, m: int) -> float:
    """Circle W2 between an atomic measure and a grid density, via the
    density's m-atom quantile discretisation."""
    atoms = _atoms(mu)
    if m < atoms.size:
        raise ValueError("w2_circle_density: m must be at least the atom count")
    ga = density_quantile_atoms(g, m)
    ma = quantile_resample(atoms, m)
    out = np.empty(1)
    _kernels.w2sq_circle_sorted_batch(ga[None, :], ma[None, :], out)
    return float(np.sqrt(out[0]))
