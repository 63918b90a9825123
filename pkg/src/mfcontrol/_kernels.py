"""Numba kernels for path ensembles.

All kernels draw noise through the counter-based streams in :mod:`.rng`,
write one output slot per path and do no cross-path reductions, so results
are bit-identical regardless of thread count or batching.  Reductions happen
afterwards in numpy, in path-index order.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

from . import rng
from .core import disp_scalar, wrap_scalar

# window search is exact for R < 0.5; at R = 0.5 the antipode appears at both
# ends of the closed window, so fall back to the direct pairwise sum there
_WINDOW_R_MAX = 0.5 - 1e-12


@njit(cache=True, inline="always")
def _follower_drift_direct(x, xi, k, kL, R, y, n):
    ssum = 0.0
    for j in range(n):
        d = disp_scalar(xi, x[j])
        if abs(d) <= R:
            ssum += d
    b = k * ssum / n
    dY = disp_scalar(xi, y)
    if abs(dY) <= R:
        b += kL * dY
    return b


@njit(cache=True, parallel=True)
def hk_paths(
    seed,
    f_stream,
    l_stream,
    X0,
    Y0,
    path0,
    j0,
    M,
    dt,
    u_steps,
    interval_id,
    k,
    kL,
    sigma,
    R,
    follower_slots,
    store,
    X_traj,
    Y_traj,
    dB_traj,
    phi_out,
    dBsum_out,
    XT_out,
    YT_out,
    capture_out,
):
    """Euler-Maruyama ensemble for the leader-follower system.

    Per path returns the left-Riemann running-cost integral, the per-interval
    sums of leader Brownian increments, terminal state and the fraction of
    followers within radius R of the leader at the final time.  With
    ``store`` set, full trajectories and increments are written as well.
    """
    B, N = X0.shape
    sqdt = np.sqrt(dt)
    use_window = R < _WINDOW_R_MAX and N > 0
    for p in prange(B):
        x = X0[p].copy()
        xn = np.empty(N)
        s = np.empty(N)
        ext = np.empty(3 * N)
        pre = np.empty(3 * N + 1)
        order = np.argsort(x)
        me = np.zeros(dBsum_out.shape[1])
        y = Y0[p]
        phi = 0.0
        if store:
            for i in range(N):
                X_traj[p, 0, i] = x[i]
            Y_traj[p, 0] = y
        for j in range(M):
            jg = j0 + j
            if N > 0:
                c = 0.0
                for i in range(N):
                    d = disp_scalar(y, x[i])
                    c += d * d
                phi += (c / N) * dt
            zy = rng.normal(seed, l_stream, path0 + p, jg, 0)
            dB = sqdt * zy
            kidx = interval_id[j]
            if kidx >= 0:
                me[kidx] += dB
            if store:
                dB_traj[p, j] = dB
            if N > 0:
                if use_window:
                    # positions move little per step: keep the order array
                    # nearly sorted with an insertion pass
                    for t in range(1, N):
                        key = order[t]
                        kv = x[key]
                        u = t - 1
                        while u >= 0 and x[order[u]] > kv:
                            order[u + 1] = order[u]
                            u -= 1
                        order[u + 1] = key
                    acc = 0.0
                    pre[0] = 0.0
                    for t in range(N):
                        s[t] = x[order[t]]
                    for t in range(3 * N):
                        val = s[t % N] + (t // N - 1.0)
                        ext[t] = val
                        acc += val
                        pre[t + 1] = acc
                    # monotone two-pointer windows over the tripled array
                    lo = 0
                    hi = 0
                    for t in range(N):
                        xi = s[t]
                        wl = xi - R
                        wr = xi + R
                        while ext[lo] < wl:
                            lo += 1
                        if hi < lo:
                            hi = lo
                        while hi < 3 * N and ext[hi] <= wr:
                            hi += 1
                        b = k * ((pre[hi] - pre[lo]) - (hi - lo) * xi) / N
                        dY = disp_scalar(xi, y)
                        if abs(dY) <= R:
                            b += kL * dY
                        i = order[t]
                        z = rng.normal(seed, f_stream, path0 + p, jg, follower_slots[i])
                        xn[i] = wrap_scalar(xi + b * dt + sigma * sqdt * z)
                else:
                    for i in range(N):
                        xi = x[i]
                        b = _follower_drift_direct(x, xi, k, kL, R, y, N)
                        z = rng.normal(seed, f_stream, path0 + p, jg, follower_slots[i])
                        xn[i] = wrap_scalar(xi + b * dt + sigma * sqdt * z)
            y = wrap_scalar(y + u_steps[j] * dt + sigma * dB)
            tmp = x
            x = xn
            xn = tmp
            if store:
                for i in range(N):
                    X_traj[p, j + 1, i] = x[i]
                Y_traj[p, j + 1] = y
        phi_out[p] = phi
        for kk in range(me.shape[0]):
            dBsum_out[p, kk] = me[kk]
        for i in range(N):
            XT_out[p, i] = x[i]
        YT_out[p] = y
        if N > 0:
            cap = 0
            for i in range(N):
                if abs(disp_scalar(y, x[i])) <= R:
                    cap += 1
            capture_out[p] = cap / N
        else:
            capture_out[p] = 0.0


@njit(cache=True, inline="always")
def cc_delta(lam):
    """Chang-Cooper face weight on the upwind cell for the physical flux
    ``F = B*((1-delta)*g_right + delta*g_left) - D*(g_right - g_left)/dx``
    with ``lam = B*dx/D``.  Limits: 1/2 as lam -> 0, 1 as lam -> +inf,
    0 as lam -> -inf."""
    if lam > 500.0:
        return 1.0 - 1.0 / lam
    if lam < -500.0:
        return -1.0 / lam
    if abs(lam) < 1e-8:
        return 0.5 + lam / 12.0
    return 1.0 / (-np.expm1(-lam)) - 1.0 / lam


@njit(cache=True, inline="always")
def _mf_step(g, gn, bc, Bf, y, dt, dx, k, kL, sigma, R, offs, wts, xc):
    """One explicit Chang-Cooper finite-volume step, given current leader y.

    Returns the worst negative value produced before clipping (0 if none).
    """
    n = g.shape[0]
    nnz = offs.shape[0]
    for i in range(n):
        conv = 0.0
        for t in range(nnz):
            jdx = i + offs[t]
            if jdx >= n:
                jdx -= n
            elif jdx < 0:
                jdx += n
            conv += wts[t] * g[jdx]
        b = k * conv * dx
        dY = disp_scalar(xc[i], y)
        if abs(dY) <= R:
            b += kL * dY
        bc[i] = b
    D = 0.5 * sigma * sigma
    for i in range(n):
        ip1 = i + 1 if i + 1 < n else 0
        Bface = 0.5 * (bc[i] + bc[ip1])
        if D > 0.0:
            delta = cc_delta(Bface * dx / D)
        else:
            delta = 1.0 if Bface > 0.0 else (0.0 if Bface < 0.0 else 0.5)
        Bf[i] = Bface * ((1.0 - delta) * g[ip1] + delta * g[i]) - D * (g[ip1] - g[i]) / dx
    worst = 0.0
    for i in range(n):
        im1 = i - 1 if i > 0 else n - 1
        v = g[i] - (dt / dx) * (Bf[i] - Bf[im1])
        if v < worst:
            worst = v
        gn[i] = v
    if worst < 0.0:
        # clip roundoff-scale undershoot and restore unit mass
        tot = 0.0
        for i in range(n):
            if gn[i] < 0.0:
                gn[i] = 0.0
            tot += gn[i] * dx
        if tot > 0.0:
            for i in range(n):
                gn[i] /= tot
    return worst


@njit(cache=True, parallel=True)
def mf_paths(
    seed,
    l_stream,
    g0,
    Y0,
    path0,
    j0,
    M,
    dt,
    u_steps,
    interval_id,
    k,
    kL,
    sigma,
    R,
    offs,
    wts,
    xc,
    dx,
    zero_cost,
    store,
    g_traj,
    Y_traj,
    dB_traj,
    phi_out,
    dBsum_out,
    gT_out,
    YT_out,
    capture_out,
    neg_out,
):
    """Ensemble of coupled leader-SDE / finite-volume density paths.

    Only the leader carries noise; the density evolves deterministically
    given the leader path.  Per step the leader moves first and the density
    is advanced with the updated leader position.
    """
    B = Y0.shape[0]
    n = g0.shape[0]
    sqdt = np.sqrt(dt)
    for p in prange(B):
        g = g0.copy()
        gn = np.empty(n)
        bc = np.empty(n)
        Bf = np.empty(n)
        me = np.zeros(dBsum_out.shape[1])
        y = Y0[p]
        phi = 0.0
        worst = 0.0
        if store:
            for i in range(n):
                g_traj[p, 0, i] = g[i]
            Y_traj[p, 0] = y
        for j in range(M):
            jg = j0 + j
            if not zero_cost:
                c = 0.0
                for i in range(n):
                    d = disp_scalar(y, xc[i])
                    c += d * d * g[i]
                phi += c * dx * dt
            zy = rng.normal(seed, l_stream, path0 + p, jg, 0)
            dB = sqdt * zy
            kidx = interval_id[j]
            if kidx >= 0:
                me[kidx] += dB
            if store:
                dB_traj[p, j] = dB
            y = wrap_scalar(y + u_steps[j] * dt + sigma * dB)
            w = _mf_step(g, gn, bc, Bf, y, dt, dx, k, kL, sigma, R, offs, wts, xc)
            if w < worst:
                worst = w
            tmp = g
            g = gn
            gn = tmp
            if store:
                for i in range(n):
                    g_traj[p, j + 1, i] = g[i]
                Y_traj[p, j + 1] = y
        phi_out[p] = phi
        for kk in range(me.shape[0]):
            dBsum_out[p, kk] = me[kk]
        for i in range(n):
            gT_out[p, i] = g[i]
        YT_out[p] = y
        cap = 0.0
        for i in range(n):
            if abs(disp_scalar(y, xc[i])) <= R:
                cap += g[i] * dx
        capture_out[p] = cap
        neg_out[p] = worst


@njit(cache=True, parallel=True)
def w2sq_circle_sorted_batch(SX, SY, out):
    """Squared W2 on the circle between equal-count sorted atom rows.

    Exact for equal-weight atoms: minimises over the n cyclic-shift
    matchings of the sorted sequences with squared geodesic cost.
    """
    B, n = SX.shape
    for b in prange(B):
        best = np.inf
        for s in range(n):
            tot = 0.0
            for i in range(n):
                idx = i + s
                if idx >= n:
                    idx -= n
                d = disp_scalar(SY[b, i], SX[b, idx])
                tot += d * d
                if tot >= best:
                    break
            if tot < best:
                best = tot
        out[b] = best / n


@njit(cache=True)
def density_quantiles(g, dx, q, out):
    """Inverse piecewise-linear CDF of a cell-averaged density at sorted
    quantile targets ``q`` in (0, 1)."""
    n = g.shape[0]
    j = 0
    cum_prev = 0.0
    for t in range(q.shape[0]):
        target = q[t]
        while j < n and cum_prev + g[j] * dx < target:
            cum_prev += g[j] * dx
            j += 1
        if j >= n:
            out[t] = n * dx * (1.0 - 1e-15)
        else:
            mass = g[j] * dx
            frac = (target - cum_prev) / mass if mass > 0.0 else 0.0
            out[t] = (j + frac) * dx
