"""Counter-based random streams.

Every random number in the library is a pure function of
``(seed, stream, path, step, slot)``.  This gives bit-identical output
independent of execution order, chunking or thread count, lets the leader
noise be replayed on its own (synchronous coupling), and needs no state or
pre-generated noise arrays inside the hot simulation kernels.

Field widths: ``slot < 2**16``, ``step < 2**24``, ``path < 2**23``.  The
three indices are packed into one 64-bit counter and pushed through two
rounds of the splitmix64 finaliser, which is plenty of mixing for Monte
Carlo work at the sample sizes used here.
"""

from __future__ import annotations

import hashlib

import numpy as np
from numba import njit

# stream labels used throughout the package
FOLLOWER_STREAM = 1
LEADER_STREAM = 2
INIT_STREAM = 3

# packing strides (see module docstring for the implied field widths)
_SLOT_BITS = 16
_STEP_BITS = 24
MAX_SLOT = 1 << _SLOT_BITS
MAX_STEP = 1 << _STEP_BITS
MAX_PATH = 1 << (64 - _SLOT_BITS - _STEP_BITS - 1)

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


@njit(cache=True, inline="always")
def _sm64(z):
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


@njit(cache=True, inline="always")
def _hash(seed, stream, path, step, slot):
    counter = (
        (np.uint64(path) << np.uint64(_STEP_BITS + _SLOT_BITS))
        + (np.uint64(step) << np.uint64(_SLOT_BITS))
        + np.uint64(slot)
    )
    z = _sm64(np.uint64(seed) ^ (np.uint64(stream) * _GOLDEN))
    z = _sm64(z ^ (counter * _MIX1))
    return _sm64(z + _GOLDEN)


@njit(cache=True, inline="always")
def uniform(seed, stream, path, step, slot):
    """Uniform on the open interval (0, 1)."""
    h = _hash(seed, stream, path, step, slot)
    return (np.float64(h >> np.uint64(11)) + 0.5) * (2.0**-53)


# Acklam's rational approximation of the standard normal quantile,
# |relative error| < 1.15e-9 on (0, 1): far below Monte Carlo resolution.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


@njit(cache=True, inline="always")
def norm_ppf(p):
    if p < _P_LOW:
        q = np.sqrt(-2.0 * np.log(p))
        return (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / (
            (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
        )
    if p > 1.0 - _P_LOW:
        q = np.sqrt(-2.0 * np.log(1.0 - p))
        return -(((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / (
            (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
        )
    q = p - 0.5
    r = q * q
    return (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / (
        ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
    )


@njit(cache=True, inline="always")
def normal(seed, stream, path, step, slot):
    """Standard normal draw at the given counter coordinates."""
    return norm_ppf(uniform(seed, stream, path, step, slot))


def derive_seed(master_seed: int, tag: str) -> int:
    """A new 64-bit master seed, deterministically derived from a label.

    Used to give optimiser stages, replications and realised trajectories
    their own independent stream families.
    """
    h = hashlib.blake2b(
        tag.encode("utf-8"),
        digest_size=8,
        key=(int(master_seed) & (2**64 - 1)).to_bytes(8, "little", signed=False),
    )
    return int.from_bytes(h.digest(), "little")
