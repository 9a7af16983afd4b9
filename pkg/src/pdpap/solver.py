"""Outer primal-dual loop with one inner splitting step per iteration.

Each iteration, at the current control x^k:

1. reassemble the interior operator and right-hand sides;
2. advance every primal system u_i by one splitting step;
3. advance every adjoint system w_i by one step of the same (symmetric)
   splitting, with right-hand side -2*beta_hat*(u_i - z_i);
4. x^{k+1} = prox of x^k - tau_k * (control gradient + K^T y^k);
5. over-relax: x_bar = x^{k+1} + omega_k (x^{k+1} - x^k);
6. y^{k+1} = dual-ball projection of y^k + sigma_{k+1} K x_bar;
7. advance the step parameters according to the chosen rule.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .grid import EdgeField, GridSpec, boundary_data, interior_indices
from .pde import (
    DIFFUSION_REACTION,
    SCALAR_REACTION,
    ControlGradient,
    ControlParam,
    adjoint_rhs,
    assemble,
    expand_interior,
    optimality_residuals,
    riesz_gradient,
    solve_adjoint_exact,
    solve_exact,
)
from .prox import (
    RegConfig,
    apply_K,
    apply_K_adjoint,
    in_box,
    prox_penalty,
    prox_tv_dual,
    tv_seminorm,
)
from .splitting import BreakdownError, Splitting, make_stepper

__all__ = [
    "ConstantRule",
    "AcceleratedRule",
    "LinearRateRule",
    "advance_step_rule",
    "InverseProblem",
    "make_problem",
    "SolverState",
    "initialize",
    "iterate",
    "objective",
    "relative_error",
    "solve_forward",
    "residuals_at",
]


@dataclass(frozen=True)
class ConstantRule:
    """Fixed step lengths; the experiments use omega = 1."""

    tau: float
    sigma: float
    omega: float = 1.0

    def __post_init__(self):
        if self.tau <= 0 or self.sigma <= 0 or not 0 < self.omega <= 1:
            raise ValueError("need tau, sigma > 0 and omega in (0, 1]")

    def initial(self):
        return self.tau, self.sigma

    def advance(self, tau, sigma):
        return tau, sigma, self.omega


@dataclass(frozen=True)
class AcceleratedRule:
    """O(1/N) schedule: omega_k = 1/sqrt(1 + 2*gamma_primal*tau_k),
    tau_{k+1} = tau_k*omega_k, sigma_{k+1} = sigma_k/omega_k."""

    tau0: float
    sigma0: float
    gamma_primal: float

    def __post_init__(self):
        if self.tau0 <= 0 or self.sigma0 <= 0 or self.gamma_primal <= 0:
            raise ValueError("accelerated rule needs positive tau0, sigma0, gamma_primal")

    def initial(self):
        return self.tau0, self.sigma0

    def advance(self, tau, sigma):
        omega = 1.0 / np.sqrt(1.0 + 2.0 * self.gamma_primal * tau)
        return tau * omega, sigma / omega, omega


@dataclass(frozen=True)
class LinearRateRule:
    """Linear-rate schedule: constant tau, sigma = gamma_primal*tau/gamma_dual,
    omega = 1/(1 + 2*gamma_primal*tau)."""

    tau: float
    gamma_primal: float
    gamma_dual: float

    def __post_init__(self):
        if self.tau <= 0 or self.gamma_primal <= 0 or self.gamma_dual <= 0:
            raise ValueError("linear-rate rule needs positive tau and moduli")

    @property
    def sigma(self):
        return self.gamma_primal * self.tau / self.gamma_dual

    @property
    def omega(self):
        return 1.0 / (1.0 + 2.0 * self.gamma_primal * self.tau)

    def initial(self):
        return self.tau, self.sigma

    def advance(self, tau, sigma):
        return self.tau, self.sigma, self.omega


def advance_step_rule(rule, tau: float, sigma: float):
    """(tau_{k+1}, sigma_{k+1}, omega_k) for the current (tau_k, sigma_k)."""
    return rule.advance(tau, sigma)


@dataclass
class InverseProblem:
    """Everything fixed over a run: family, grid, data and regularization."""

    family: str
    grid: GridSpec
    boundary: np.ndarray   # (m, 4(n-1)) Dirichlet traces
    z: np.ndarray          # (m, n^2) measurements
    beta_hat: float
    reg: RegConfig

    @property
    def m(self) -> int:
        return self.boundary.shape[0]

    @property
    def dual_active(self) -> bool:
        return self.family == DIFFUSION_REACTION and self.reg.gamma > 0.0

    @cached_property
    def z_interior(self) -> np.ndarray:
        return np.ascontiguousarray(self.z[:, interior_indices(self.grid)])


def make_problem(family: str, grid: GridSpec, z: np.ndarray, beta: float,
                 reg: RegConfig, boundary: np.ndarray | None = None) -> InverseProblem:
    """Bundle a problem; beta is normalized by the mean measurement energy."""
    z = np.atleast_2d(z)
    if family == SCALAR_REACTION and reg.gamma > 0.0:
        raise ValueError("TV weight needs a diffusion field to act on")
    if boundary is None:
        boundary = np.stack([boundary_data(grid, i + 1) for i in range(z.shape[0])])
    z_mean = z.mean(axis=0)
    beta_hat = beta / (2.0 * float(z_mean @ z_mean))
    return InverseProblem(family, grid, boundary, z, beta_hat, reg)


@dataclass
class SolverState:
    """Full iterate: control, interior PDE/adjoint bundles, dual variable,
    quasi-CG search directions, and the current step parameters."""

    x: ControlParam
    x_prev: ControlParam
    U: np.ndarray                 # (m, n_interior) primal interiors
    W: np.ndarray                 # (m, n_interior) adjoint interiors
    P_u: np.ndarray
    P_w: np.ndarray
    fresh_u: np.ndarray
    fresh_w: np.ndarray
    y: EdgeField | None
    k: int
    tau: float
    sigma: float

    def u_full(self, problem: InverseProblem) -> np.ndarray:
        return expand_interior(problem.grid, self.U, problem.boundary)

    def w_full(self, problem: InverseProblem) -> np.ndarray:
        return expand_interior(problem.grid, self.W)


def initialize(problem: InverseProblem, x0: ControlParam, rule) -> SolverState:
    """Exact PDE and adjoint solves at x0; y0 = K x0; fresh directions."""
    if not in_box(x0, problem.reg):
        raise ValueError("initial control outside the box constraint")
    grid = problem.grid
    system = assemble(problem.family, grid, x0, problem.boundary)
    u = solve_exact(grid, system)
    w = solve_adjoint_exact(grid, system,
                            adjoint_rhs(grid, u, problem.z, problem.beta_hat))
    ii = interior_indices(grid)
    U = np.ascontiguousarray(u[:, ii])
    W = np.ascontiguousarray(w[:, ii])
    y = apply_K(grid, x0) if problem.dual_active else None
    tau, sigma = rule.initial()
    m = problem.m
    return SolverState(
        x=x0.copy(), x_prev=x0.copy(), U=U, W=W,
        P_u=np.zeros_like(U), P_w=np.zeros_like(W),
        fresh_u=np.ones(m, dtype=bool), fresh_w=np.ones(m, dtype=bool),
        y=y, k=0, tau=tau, sigma=sigma,
    )


def iterate(problem: InverseProblem, state: SolverState, rule,
            splitting: Splitting, freeze_control: bool = False) -> SolverState:
    """Advance the state by one outer iteration (in place).

    With freeze_control the x and y updates are skipped, so the inner
    splitting iterations run against the fixed operator A_{x^0}.
    """
    grid = problem.grid
    scalar = problem.family == SCALAR_REACTION
    system = assemble(problem.family, grid, state.x, problem.boundary)
    try:
        stepper = make_stepper(splitting, system.A)
        state.U, state.P_u, state.fresh_u = stepper.step_bundle(
            system.rhs, state.U, state.P_u, state.fresh_u)
        if scalar:
            # interior data suffice: the adjoint rhs and the control
            # gradient never touch the (fixed) boundary nodes
            rhs_w = -2.0 * problem.beta_hat * (state.U - problem.z_interior)
        else:
            u_full = state.u_full(problem)
            rhs_w = adjoint_rhs(grid, u_full, problem.z, problem.beta_hat)
        state.W, state.P_w, state.fresh_w = stepper.step_bundle(
            rhs_w, state.W, state.P_w, state.fresh_w)
    except BreakdownError as exc:
        raise BreakdownError(f"iteration {state.k + 1}: {exc}") from exc

    if not freeze_control:
        if scalar:
            g = ControlGradient(a=None, c=float(np.sum(state.U * state.W)))
        else:
            w_full = state.w_full(problem)
            g = riesz_gradient(problem.family, grid, u_full, w_full)
        kty = apply_K_adjoint(grid, state.y)
        tau = state.tau
        tau_next, sigma_next, omega = rule.advance(state.tau, state.sigma)
        step_c = state.x.c - tau * (g.c + kty.c)
        if state.x.a is None:
            x_new = prox_penalty(ControlParam(None, step_c), tau, problem.reg)
        else:
            step_a = state.x.a - tau * (g.a + (0.0 if kty.a is None else kty.a))
            x_new = prox_penalty(ControlParam(step_a, step_c), tau, problem.reg)
        if problem.dual_active:
            x_bar = ControlParam(x_new.a + omega * (x_new.a - state.x.a),
                                 x_new.c + omega * (x_new.c - state.x.c))
            state.y = prox_tv_dual(state.y + sigma_next * apply_K(grid, x_bar),
                                   sigma_next, problem.reg)
        state.x_prev = state.x
        state.x = x_new
        state.tau, state.sigma = tau_next, sigma_next
    state.k += 1
    return state


def solve_forward(problem: InverseProblem, x: ControlParam) -> np.ndarray:
    """Exact solution bundle S(x) of the m PDE systems."""
    return solve_exact(problem.grid,
                       assemble(problem.family, problem.grid, x, problem.boundary))


def objective(problem: InverseProblem, x: ControlParam,
              u: np.ndarray | None = None) -> float:
    """J(x) = penalty + normalized data misfit + TV term.

    Without a bundle the PDE is solved exactly, so the value is a function
    of x alone; passing the current inexact bundle gives the cheap variant.
    """
    if not in_box(x, problem.reg):
        return float("inf")
    if u is None:
        u = solve_forward(problem, x)
    reg = problem.reg
    val = 0.5 * reg.alpha * (x.c**2 + (0.0 if x.a is None else float(x.a @ x.a)))
    val += problem.beta_hat * float(np.sum((u - problem.z) ** 2))
    if reg.gamma > 0.0 and x.a is not None:
        val += reg.gamma * tv_seminorm(problem.grid, x.a)
    return val


def relative_error(family: str, x: ControlParam, ref: ControlParam) -> float:
    """Progress metric against a reference control.

    Scalar family: |c - c_ref| / |c_ref|. Diffusion family: the
    scale-invariant mismatch ||(c_ref/c) a - a_ref|| / ||a_ref||, since the
    PDE only determines (a, c) up to a common positive factor.
    """
    if family == SCALAR_REACTION:
        if ref.c == 0.0:
            raise ZeroDivisionError("reference coefficient is zero")
        return abs(x.c - ref.c) / abs(ref.c)
    ref_norm = float(np.linalg.norm(ref.a))
    if ref_norm == 0.0 or x.c == 0.0:
        raise ZeroDivisionError("degenerate reference or control")
    return float(np.linalg.norm((ref.c / x.c) * x.a - ref.a)) / ref_norm


def residuals_at(problem: InverseProblem, state: SolverState):
    """Optimality residuals of the current iterate."""
    return optimality_residuals(
        problem.family, problem.grid, state.x,
        state.u_full(problem), state.w_full(problem), state.y,
        problem.z, problem.beta_hat, problem.reg)
