"""Leader-follower interacting particle systems on the torus, their partial
mean-field limit, and Monte Carlo Newton synthesis of the leader's control."""

from .core import (
    ModelParams,
    SeedSpec,
    SystemState,
    TimeGrid,
    geodesic_disp,
    mixture_density,
    sample_von_mises_mixture,
    wrap,
)
from .dynamics import TrajectoryBundle, hk_drift, hk_kernel, running_cost, simulate, simulate_batch
from .estimators import (
    EstimateWithError,
    PathFunctionals,
    PiecewiseConstantControl,
    cost_direct,
    cost_reweighted,
    gradient,
    hessian,
    hessian_score,
    path_functionals,
)
from .meanfield import GridDensity, MeanFieldTrajectory, cfl_max_dt, fp_step, mf_drift, mf_running_cost, simulate_mf
from .optimize import (
    FiniteSystem,
    MarkovControlResult,
    MeanFieldState,
    MeanFieldSystem,
    NewtonReport,
    QuadraticOracle,
    fd_gradient_check,
    markov_solve,
    newton_solve,
)
from .chaos import ChaosRecord, convergence_study, coupled_run, fit_slope
from .transport import w2_circle, w2_circle_density, w2_line

__version__ = "0.1.0"
