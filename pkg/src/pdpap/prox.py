"""Proximal maps, the control/dual coupling operator K, and its norm.

The regularizer on the control is a quadratic penalty plus a box constraint
[lam, 1/lam]; its prox is a shrink followed by a clamp, exact because the
box is an interval. The total-variation dual prox is a pointwise projection
onto Euclidean balls of radius gamma.

K takes unit-spacing (not 1/h) forward differences of the nodal diffusion
field: the experiment step sizes satisfy tau*sigma*||K||^2 < 1 only for the
unweighted operator, whose norm is below sqrt(8) on any grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import EdgeField, GridSpec, backward_divergence, forward_differences
from .pde import ControlGradient, ControlParam

__all__ = [
    "RegConfig",
    "prox_penalty",
    "prox_tv_dual",
    "apply_K",
    "apply_K_adjoint",
    "estimate_K_norm",
    "tv_seminorm",
    "in_box",
]


@dataclass(frozen=True)
class RegConfig:
    """Regularization weights: quadratic alpha, box bound lam, TV weight gamma."""

    alpha: float
    lam: float
    gamma: float

    def __post_init__(self):
        if not 0.0 < self.lam < 1.0:
            raise ValueError("box bound lam must lie in (0, 1)")
        if self.alpha < 0.0 or self.gamma < 0.0:
            raise ValueError("regularization weights must be nonnegative")


def prox_penalty(x: ControlParam, tau: float, cfg: RegConfig) -> ControlParam:
    """Proximal map of (alpha/2)||.||^2 + box indicator, componentwise."""
    if tau <= 0.0:
        raise ValueError("step length must be positive")
    shrink = 1.0 / (1.0 + tau * cfg.alpha)
    lo, hi = cfg.lam, 1.0 / cfg.lam
    c = min(max(x.c * shrink, lo), hi)
    if x.a is None:
        return ControlParam(None, c)
    return ControlParam(np.clip(x.a * shrink, lo, hi), c)


def _pointwise_norms(grid: GridSpec, e: EdgeField) -> np.ndarray:
    """Per-node norm of the forward-difference 2-vector, zero-padded edges."""
    n = grid.n
    sq = np.zeros((n, n))
    sq[:, :-1] += e.dx**2
    sq[:-1, :] += e.dy**2
    return np.sqrt(sq)


def prox_tv_dual(y: EdgeField | None, sigma: float,
                 cfg: RegConfig) -> EdgeField | None:
    """Pointwise projection onto the gamma-ball (independent of sigma)."""
    if sigma <= 0.0:
        raise ValueError("step length must be positive")
    if y is None or cfg.gamma == 0.0:
        return y
    grid = GridSpec(y.dx.shape[0])
    norms = _pointwise_norms(grid, y)
    scale = cfg.gamma / np.maximum(norms, cfg.gamma)
    return EdgeField(y.dx * scale[:, :-1], y.dy * scale[:-1, :])


def apply_K(grid: GridSpec, x: ControlParam) -> EdgeField | None:
    """Unweighted forward-difference gradient of the diffusion field."""
    if x.a is None:
        return None
    return forward_differences(grid, x.a)


def apply_K_adjoint(grid: GridSpec, y: EdgeField | None) -> ControlGradient:
    """Exact adjoint of apply_K; zero on the scalar component."""
    if y is None:
        return ControlGradient(a=None, c=0.0)
    return ControlGradient(a=-backward_divergence(grid, y), c=0.0)


def tv_seminorm(grid: GridSpec, a: np.ndarray) -> float:
    """Isotropic total variation: sum of pointwise forward-difference norms."""
    return float(np.sum(_pointwise_norms(grid, forward_differences(grid, a))))


def estimate_K_norm(grid: GridSpec, cfg: RegConfig | None = None,
                    tol: float = 1e-6, seed: int = 0,
                    max_iter: int = 50_000) -> float:
    """Power-iteration estimate of ||K||; 0 for the inactive (gamma=0) case."""
    if cfg is not None and cfg.gamma == 0.0:
        return 0.0
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(grid.n_nodes)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = forward_differences(grid, v)
        kv = -backward_divergence(grid, w)
        lam_new = float(v @ kv)
        v = kv / np.linalg.norm(kv)
        if abs(lam_new - lam) <= tol * max(lam_new, 1e-30):
            lam = lam_new
            break
        lam = lam_new
    return float(np.sqrt(lam))


def in_box(x: ControlParam, cfg: RegConfig) -> bool:
    """Exact componentwise feasibility check for the box [lam, 1/lam]."""
    lo, hi = cfg.lam, 1.0 / cfg.lam
    if not lo <= x.c <= hi:
        return False
    if x.a is not None and (np.any(x.a < lo) or np.any(x.a > hi)):
        return False
    return True
