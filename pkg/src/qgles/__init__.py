"""Barotropic vorticity LES laboratory with stochastic subgrid closures.

Finite-difference dynamics on a Dirichlet basin, a sine-basis Gaussian
filter, a-priori subgrid stress diagnosis, stochastic closure samplers,
and a verification harness for the closure-mismatch bound and the
filter-scale convergence of the LES solution.
"""

from .field import Field, Grid, Trajectory, inner_product, l2_norm
from .operators import arakawa_jacobian, gradient, laplacian, PoissonSolver, solve_poisson
from .filters import FilterSpec, gaussian_filter, perturb_field, restrict
from .dynamics import (
    PhysicalParams,
    StepperConfig,
    double_gyre_forcing,
    energy,
    enstrophy_bound,
    rhs_les,
    rhs_true,
    rk4_step,
    run,
)
from .sgs import (
    ClosureSpec,
    SgsSeries,
    SgsStats,
    closure_mismatch,
    diagnose_sgs,
    estimate_stats,
    make_closure,
)
from .harness import (
    ExperimentConfig,
    load_config,
    run_resolved,
    run_triptych,
    verify_approximation,
    verify_scale_convergence,
)

__version__ = "0.1.0"
