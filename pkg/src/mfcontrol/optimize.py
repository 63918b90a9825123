"""Newton descent over control coefficients and the receding-horizon policy.

The raw update ``a <- a - H^{-1} grad`` is safeguarded for Monte Carlo noise:
a Levenberg shift (multiplied by 10 until the shifted Hessian is positive
definite and the trial step does not increase the cost beyond its noise) and
up to 8 step halvings.  Common random numbers are used across all
evaluations within one solve; receding-horizon stages draw fresh streams.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .core import ModelParams, SeedSpec, TimeGrid, geodesic_disp
from .dynamics import TrajectoryBundle, simulate, simulate_batch
from .estimators import (
    PiecewiseConstantControl,
    cost_of_batch,
    gradient,
    hessian,
    hessian_score,
    per_path_cost,
)
from .meanfield import (
    GridDensity,
    MeanFieldTrajectory,
    mf_capture_mass,
    mf_running_cost,
    simulate_mf,
    simulate_mf_batch,
)


class NewtonError(RuntimeError):
    """Raised when the safeguarded Hessian stays unusable after max damping."""


# --------------------------------------------------------------------------
# systems: what the optimiser needs to know about the dynamics
# --------------------------------------------------------------------------


class FiniteSystem:
    """Leader-follower particle system viewed as a control problem.

    ``state=None`` in batch evaluations draws follower initial positions from
    the mixture per path, with the leader starting at ``y0``.
    """

    def __init__(self, params: ModelParams, dt: float, y0: float = 0.8):
        self.params = params
        self.dt = dt
        self.y0 = y0

    def batch(self, control, state, n_paths, seed, j0, M):
        grid = TimeGrid(self.dt, M)
        return simulate_batch(self.params, grid, control, state, n_paths, seed, j0=j0, y0=self.y0)

    def advance(self, state, u_value, j0, M, seed):
        """Advance one realised path with a constant control value."""
        t0, t1 = j0 * self.dt, (j0 + M) * self.dt
        const = PiecewiseConstantControl(np.array([t0, t1]), np.array([u_value]))
        grid = TimeGrid(self.dt, M)
        bundle = simulate(self.params, grid, const, state, seed, path_id=0, j0=j0)
        phi = 0.0
        if self.params.N > 0:
            for j in range(M):
                d = geodesic_disp(float(bundle.Y[j]), bundle.X[j])
                phi += float(np.mean(d * d)) * self.dt
        return bundle.state(M), bundle, phi

    def capture(self, state) -> float:
        if self.params.N == 0:
            return 0.0
        d = np.abs(geodesic_disp(float(state.Y), state.X))
        return float(np.mean(d <= self.params.R))

    @staticmethod
    def concat(segments):
        X = np.concatenate([segments[0].X] + [s.X[1:] for s in segments[1:]])
        Y = np.concatenate([segments[0].Y] + [s.Y[1:] for s in segments[1:]])
        dBY = np.concatenate([s.dBY for s in segments])
        grid = TimeGrid(segments[0].grid.dt, sum(s.grid.M for s in segments))
        return TrajectoryBundle(X=X, Y=Y, dBY=dBY, grid=grid, params=segments[0].params)


@dataclass(frozen=True)
class MeanFieldState:
    g: GridDensity
    Y: float


class MeanFieldSystem:
    """Density/leader system exposed through the same control interface.

    Only the leader carries noise, so the martingale integrals come from the
    leader stream alone and the derivative estimators apply unchanged.
    ``cost_fn=None`` zeroes the running cost (closed-form test problems).
    """

    def __init__(self, params: ModelParams, dt: float, cost_fn="default"):
        self.params = params
        self.dt = dt
        self.zero_cost = cost_fn is None

    def batch(self, control, state, n_paths, seed, j0, M):
        grid = TimeGrid(self.dt, M)
        return simulate_mf_batch(
            self.params, grid, control, state.g, state.Y, n_paths, seed,
            j0=j0, zero_cost=self.zero_cost,
        )

    def advance(self, state, u_value, j0, M, seed):
        t0, t1 = j0 * self.dt, (j0 + M) * self.dt
        const = PiecewiseConstantControl(np.array([t0, t1]), np.array([u_value]))
        grid = TimeGrid(self.dt, M)
        traj = simulate_mf(self.params, grid, const, state.g, state.Y, seed, path_id=0, j0=j0)
        phi = 0.0
        if not self.zero_cost:
            for j in range(M):
                phi += mf_running_cost(float(traj.Y[j]), traj.density(j)) * self.dt
        new_state = MeanFieldState(g=traj.density(M), Y=float(traj.Y[M]))
        return new_state, traj, phi

    def capture(self, state) -> float:
        return mf_capture_mass(state.Y, state.g, self.params.R)

    @staticmethod
    def concat(segments):
        dens = np.concatenate([segments[0].densities] + [s.densities[1:] for s in segments[1:]])
        Y = np.concatenate([segments[0].Y] + [s.Y[1:] for s in segments[1:]])
        dBY = np.concatenate([s.dBY for s in segments])
        grid = TimeGrid(segments[0].grid.dt, sum(s.grid.M for s in segments))
        return MeanFieldTrajectory(densities=dens, Y=Y, dBY=dBY, grid=grid)


# --------------------------------------------------------------------------
# exact oracle for the pure-control (zero running cost) problem
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class QuadraticOracle:
    """Closed forms for J(a) = (lam/2) sum a_k^2 |I_k| (running cost zero)."""

    lam: float
    lengths: np.ndarray

    def cost(self, a):
        return 0.5 * self.lam * float(np.sum(a * a * self.lengths))

    def grad(self, a):
        return self.lam * a * self.lengths

    def hess(self, a):
        return self.lam * np.diag(self.lengths)


# --------------------------------------------------------------------------
# Newton iteration
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class NewtonIterate:
    a: np.ndarray
    J: float
    J_se: float
    grad_norm: float
    tau: float
    beta: float


@dataclass
class NewtonReport:
    iterates: list = field(default_factory=list)
    converged: bool = False
    final_a: np.ndarray | None = None
    n_batch_evals: int = 0

    def costs(self):
        return np.array([it.J for it in self.iterates])


def _window(control: PiecewiseConstantControl, dt: float):
    """Absolute step offset and step count covered by the control."""
    t0 = float(control.breakpoints[0])
    t1 = float(control.breakpoints[-1])
    j0 = int(round(t0 / dt))
    M = int(round((t1 - t0) / dt))
    if abs(j0 * dt - t0) > 1e-9 or abs((j0 + M) * dt - t1) > 1e-9 or M < 1:
        raise ValueError("control breakpoints must align with the step size")
    return j0, M


def _is_spd(H):
    try:
        np.linalg.cholesky(H)
        return True
    except np.linalg.LinAlgError:
        return False


_MAX_TAU_ROUNDS = 40
_MAX_HALVINGS = 8


def newton_solve(
    system,
    control: PiecewiseConstantControl,
    state,
    n_paths: int,
    seed: SeedSpec,
    tol: float | None = None,
    max_iter: int = 200,
    hess_mode: str = "score",
    oracle: QuadraticOracle | None = None,
) -> NewtonReport:
    """Safeguarded Newton iteration over the control coefficients.

    Stops when the cost changes by less than ``tol`` between iterates
    (default ``1e-4 * (1 + |J(a0)|)``) or after ``max_iter`` iterations.
    ``hess_mode`` selects the curvature estimator: "score" (unbiased,
    default) or "classic" (the classical second-derivative formula).
    With an ``oracle`` the cost and derivatives are exact closed forms and
    no paths are simulated.
    """
    if hess_mode not in ("score", "classic"):
        raise ValueError("hess_mode must be 'score' or 'classic'")
    a = control.coeffs.copy()
    report = NewtonReport()
    if oracle is None:
        j0, M = _window(control, system.dt)

        def evaluate(a_val):
            batch = system.batch(control.with_coeffs(a_val), state, n_paths, seed, j0, M)
            est = cost_of_batch(batch)
            return batch, est.mean, est.std_error

    else:

        def evaluate(a_val):
            return None, oracle.cost(a_val), 0.0

    batch, J, J_se = evaluate(a)
    report.n_batch_evals += 1
    tol = 1e-4 * (1.0 + abs(J)) if tol is None else tol

    def derivatives(a_val, batch_val):
        if oracle is not None:
            return oracle.grad(a_val), oracle.hess(a_val)
        ctrl = control.with_coeffs(a_val)
        g, _ = gradient(batch_val, ctrl)
        if hess_mode == "classic":
            H, _ = hessian(batch_val, ctrl)
        else:
            H, _ = hessian_score(batch_val, ctrl)
        return g, H

    g, H = derivatives(a, batch)
    report.iterates.append(NewtonIterate(a.copy(), J, J_se, float(np.linalg.norm(g)), 0.0, 1.0))

    for _ in range(max_iter):
        scale = max(1.0, float(np.mean(np.abs(np.diag(H)))))
        tau = 0.0
        accepted = None
        for _round in range(_MAX_TAU_ROUNDS):
            Hs = H + tau * np.eye(H.shape[0])
            if not _is_spd(Hs):
                tau = 1e-8 * scale if tau == 0.0 else 10.0 * tau
                continue
            step = np.linalg.solve(Hs, g)
            beta = 1.0
            for _h in range(_MAX_HALVINGS + 1):
                a_trial = a - beta * step
                # a nonzero step damped into numerical stillstand is a
                # failure of the curvature model, not an acceptable move
                moved = not np.array_equal(a_trial, a)
                if not moved and np.linalg.norm(step) > 0.0:
                    break
                batch_t, J_t, J_t_se = evaluate(a_trial)
                report.n_batch_evals += 1
                if J_t <= J + 3.0 * np.hypot(J_se, J_t_se):
                    accepted = (a_trial, batch_t, J_t, J_t_se, tau, beta)
                    break
                beta *= 0.5
            if accepted is not None:
                break
            tau = 1e-8 * scale if tau == 0.0 else 10.0 * tau
        if accepted is None:
            raise NewtonError(
                "newton_solve: no acceptable step after maximal Levenberg "
                f"damping (tau={tau:.3e}); the Hessian estimate is unusable"
            )
        a_new, batch_new, J_new, J_new_se, tau_used, beta_used = accepted
        g, H = derivatives(a_new, batch_new)
        report.iterates.append(
            NewtonIterate(a_new.copy(), J_new, J_new_se, float(np.linalg.norm(g)), tau_used, beta_used)
        )
        delta_J = abs(J_new - J)
        a, batch, J, J_se = a_new, batch_new, J_new, J_new_se
        if delta_J < tol:
            report.converged = True
            break
    report.final_a = a.copy()
    return report


# --------------------------------------------------------------------------
# receding-horizon (discrete-time Markov) control
# --------------------------------------------------------------------------


@dataclass
class MarkovControlResult:
    committed: np.ndarray
    control: PiecewiseConstantControl
    trajectory: object
    realized_cost: float
    capture: float
    stage_reports: list


def markov_solve(
    system,
    breakpoints,
    a0,
    state0,
    seed: SeedSpec,
    n_paths: int,
    tol: float | None = None,
    max_iter: int = 200,
    hess_mode: str = "score",
    oracle: QuadraticOracle | None = None,
) -> MarkovControlResult:
    """Receding-horizon policy: re-solve on the remaining horizon at every
    breakpoint, commit the first coefficient, advance the realised system
    one interval with fresh noise, and warm-start the next solve with the
    previous solution minus its first entry.  The final interval's
    coefficient comes from the last solve's tail without re-solving."""
    breakpoints = np.ascontiguousarray(breakpoints, dtype=float)
    K = breakpoints.size - 1
    a0 = np.ascontiguousarray(a0, dtype=float)
    if a0.shape != (K,):
        raise ValueError("markov_solve: a0 must provide one coefficient per interval")
    committed = np.zeros(K)
    warm = a0.copy()
    state = state0
    segments = []
    stage_reports = []
    realized_seed = seed.derive("realized")
    phi_total = 0.0
    dt = system.dt

    for k in range(K - 1):
        stage_control = PiecewiseConstantControl(breakpoints[k:], warm)
        stage_oracle = None
        if oracle is not None:
            stage_oracle = QuadraticOracle(oracle.lam, np.diff(breakpoints[k:]))
        rep = newton_solve(
            system, stage_control, state, n_paths, seed.derive(f"stage-{k}"),
            tol=tol, max_iter=max_iter, hess_mode=hess_mode, oracle=stage_oracle,
        )
        stage_reports.append(rep)
        a_star = rep.final_a
        committed[k] = a_star[0]
        j0 = int(round(breakpoints[k] / dt))
        M = int(round((breakpoints[k + 1] - breakpoints[k]) / dt))
        state, seg, phi = system.advance(state, committed[k], j0, M, realized_seed)
        segments.append(seg)
        phi_total += phi
        warm = a_star[1:].copy()

    committed[K - 1] = warm[0]
    j0 = int(round(breakpoints[K - 1] / dt))
    M = int(round((breakpoints[K] - breakpoints[K - 1]) / dt))
    state, seg, phi = system.advance(state, committed[K - 1], j0, M, realized_seed)
    segments.append(seg)
    phi_total += phi

    control = PiecewiseConstantControl(breakpoints, committed)
    lengths = np.diff(breakpoints)
    realized_cost = phi_total + 0.5 * system.params.lam * float(np.sum(committed**2 * lengths))
    return MarkovControlResult(
        committed=committed,
        control=control,
        trajectory=system.concat(segments),
        realized_cost=realized_cost,
        capture=system.capture(state),
        stage_reports=stage_reports,
    )


# --------------------------------------------------------------------------
# finite-difference validation of the gradient estimator
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FDCheckReport:
    grad_est: np.ndarray
    grad_se: np.ndarray
    grad_fd: np.ndarray
    fd_se: np.ndarray
    rel_err: np.ndarray
    resolved: np.ndarray
    max_rel_error_resolved: float

    def comparable(self, factor: float = 60.0) -> np.ndarray:
        """Components large enough that a 5% comparison is statistically
        decidable: the combined noise of both sides sits below |g|/factor."""
        return np.abs(self.grad_est) >= factor * np.hypot(self.grad_se, self.fd_se)


def fd_gradient_check(
    system,
    control: PiecewiseConstantControl,
    state,
    n_paths: int,
    seed: SeedSpec,
    h=None,
    fd_n_paths: int | None = None,
) -> FDCheckReport:
    """Estimator gradient against common-random-number central differences.

    ``h`` defaults to ``1e-2 * max(1, |a_k|)`` per component.  A component is
    resolved when its estimate exceeds 5 standard errors; the headline error
    is the worst relative deviation over resolved components.
    """
    a = control.coeffs
    if h is None:
        h = 1e-2 * np.maximum(1.0, np.abs(a))
    else:
        h = np.broadcast_to(np.asarray(h, dtype=float), a.shape).copy()
    j0, M = _window(control, system.dt)
    batch = system.batch(control, state, n_paths, seed, j0, M)
    grad_est, grad_se = gradient(batch, control)
    nf = n_paths if fd_n_paths is None else fd_n_paths
    fd = np.empty_like(a)
    fd_se = np.empty_like(a)
    for k in range(a.size):
        e = np.zeros_like(a)
        e[k] = h[k]
        bp = system.batch(control.with_coeffs(a + e), state, nf, seed, j0, M)
        bm = system.batch(control.with_coeffs(a - e), state, nf, seed, j0, M)
        delta = per_path_cost(bp) - per_path_cost(bm)
        fd[k] = float(np.mean(delta)) / (2.0 * h[k])
        fd_se[k] = float(np.std(delta, ddof=1)) / (2.0 * h[k] * np.sqrt(nf)) if nf > 1 else 0.0
    resolved = np.abs(grad_est) > 5.0 * grad_se
    denom = np.maximum(np.abs(fd), 1e-300)
    rel = np.abs(grad_est - fd) / denom
    max_rel = float(np.max(rel[resolved])) if np.any(resolved) else 0.0
    return FDCheckReport(
        grad_est=grad_est, grad_se=grad_se, grad_fd=fd, fd_se=fd_se,
        rel_err=rel, resolved=resolved, max_rel_error_resolved=max_rel,
    )


def write_iteration_log(report: NewtonReport, path):
    """CSV log ``iter, a_1..a_K, J, J_se, grad_norm, damping``."""
    K = report.iterates[0].a.size
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter"] + [f"a_{k + 1}" for k in range(K)] + ["J", "J_se", "grad_norm", "damping"])
        for i, it in enumerate(report.iterates):
            row = [i] + [repr(float(v)) for v in it.a]
            row += [repr(it.J), repr(it.J_se), repr(it.grad_norm), repr(it.tau)]
            w.writerow(row)
