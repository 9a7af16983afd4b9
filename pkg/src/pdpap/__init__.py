"""Primal-dual proximal splitting with one-step-per-iteration PDE solves.

A small numpy/scipy library for nonsmooth coefficient inverse problems on
regular grids: the outer loop is a Chambolle-Pock-style primal-dual method,
while the PDE and its adjoint advance by exactly one step of an inner
linear-system splitting (Jacobi, Gauss-Seidel, SOR, quasi-CG, or full
inversion) per outer iteration.
"""

from .grid import EdgeField, GridSpec, boundary_data, boundary_parametrization, divergence, gradient
from .pde import (
    DIFFUSION_REACTION,
    SCALAR_REACTION,
    AssembledSystem,
    ControlGradient,
    ControlParam,
    adjoint_rhs,
    assemble,
    optimality_residuals,
    riesz_gradient,
    solve_adjoint_exact,
    solve_exact,
)
from .prox import RegConfig, apply_K, apply_K_adjoint, estimate_K_norm, prox_penalty, prox_tv_dual
from .solver import (
    AcceleratedRule,
    ConstantRule,
    InverseProblem,
    LinearRateRule,
    SolverState,
    advance_step_rule,
    initialize,
    iterate,
    make_problem,
    objective,
    relative_error,
)
from .splitting import (
    DiagnosticsReport,
    Splitting,
    SplitterState,
    diagnose,
    full,
    gauss_seidel,
    jacobi,
    make_stepper,
    quasi_cg,
    quasi_cg_step,
    sor,
    split_step,
)

__version__ = "0.1.0"
