"""One-step splitting updates N u+ = rhs - M u and their diagnostics.

Supported decompositions A = N + M of a symmetric system matrix:

* full          N = A (exact solve, contraction factor 0)
* jacobi        N = diag(A)
* gauss_seidel  N = lower triangle including the diagonal, fixed row order
* sor           N~ = (1+r) N_base, M~ = M_base - r N_base, r > 0
* quasi_cg      conjugate-gradient-style update keeping one search direction

Every kind except quasi_cg shares the update u+ = u + N^{-1}(rhs - A u),
which makes the exact solution a fixed point by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

__all__ = [
    "Splitting",
    "SplitterState",
    "DiagnosticsReport",
    "BreakdownError",
    "full",
    "jacobi",
    "gauss_seidel",
    "sor",
    "quasi_cg",
    "make_stepper",
    "split_step",
    "quasi_cg_step",
    "diagnose",
]

EPS_CG = 1e-14  # relative breakdown guard for the quasi-CG direction


class BreakdownError(RuntimeError):
    """Singular system or quasi-CG directional breakdown."""


@dataclass(frozen=True)
class Splitting:
    kind: str
    relax: float = 1.0
    base: str = "gauss_seidel"

    def __post_init__(self):
        if self.kind not in ("full", "jacobi", "gauss_seidel", "sor", "quasi_cg"):
            raise ValueError(f"unknown splitting {self.kind!r}")
        if self.kind == "sor":
            if self.relax <= 0.0:
                raise ValueError("sor relaxation must be positive")
            if self.base not in ("jacobi", "gauss_seidel"):
                raise ValueError("sor composes over jacobi or gauss_seidel")


def full() -> Splitting:
    return Splitting("full")


def jacobi() -> Splitting:
    return Splitting("jacobi")


def gauss_seidel() -> Splitting:
    return Splitting("gauss_seidel")


def sor(relax: float = 1.0, base: str = "gauss_seidel") -> Splitting:
    return Splitting("sor", relax=relax, base=base)


def quasi_cg() -> Splitting:
    return Splitting("quasi_cg")


@dataclass
class SplitterState:
    """Per-system iterate; p and fresh are used by quasi_cg only."""

    u: np.ndarray
    p: np.ndarray | None = None
    fresh: bool = True


@numba.njit(cache=True)
def _lower_solve_rows(indptr, indices, data, B, out):  # pragma: no cover - jit
    k, n = B.shape
    for row in range(k):
        for i in range(n):
            s = B[row, i]
            diag = 0.0
            for ptr in range(indptr[i], indptr[i + 1]):
                j = indices[ptr]
                if j < i:
                    s -= data[ptr] * out[row, j]
                elif j == i:
                    diag = data[ptr]
            out[row, i] = s / diag
    return out


def _lower_solve(N: sp.csr_matrix, B: np.ndarray) -> np.ndarray:
    out = np.empty_like(B)
    _lower_solve_rows(N.indptr, N.indices, N.data, B, out)
    return out


class Stepper:
    """Prepared one-step solver for a fixed (splitting, A) pair.

    step_bundle advances several independent systems sharing A at once;
    rows of U / RHS are the per-system iterates and right-hand sides.
    """

    def __init__(self, splitting: Splitting, A: sp.spmatrix):
        A = A.tocsr() if sp.issparse(A) else sp.csr_matrix(A)
        if A.shape[0] != A.shape[1]:
            raise ValueError("system matrix must be square")
        self.splitting = splitting
        self.A = A
        kind = splitting.kind
        if kind == "full":
            try:
                self._lu = splu(A.tocsc(), permc_spec="MMD_AT_PLUS_A")
            except RuntimeError as exc:
                raise BreakdownError(f"singular system: {exc}") from exc
        elif kind in ("jacobi", "gauss_seidel", "sor"):
            base = kind if kind != "sor" else splitting.base
            d = A.diagonal()
            if np.any(d <= 0.0):
                raise ValueError("splitting requires a positive diagonal")
            scale = 1.0 + splitting.relax if kind == "sor" else 1.0
            if base == "jacobi":
                self._diag = d * scale
                self._lower = False
            else:
                # forward substitution reads only j <= i, so the kernel can
                # run on A's own CSR arrays; no explicit tril needed
                if not A.has_sorted_indices:
                    A.sort_indices()
                self._lower = True
                self._scale = scale

    def step_bundle(self, rhs: np.ndarray, U: np.ndarray,
                    P: np.ndarray | None = None,
                    fresh: np.ndarray | None = None):
        rhs = np.atleast_2d(rhs)
        U = np.atleast_2d(U)
        kind = self.splitting.kind
        if kind == "quasi_cg":
            return _quasi_cg_bundle(self.A, rhs, U, P, fresh)
        if kind == "full":
            return self._lu.solve(rhs.T).T, P, fresh
        R = rhs - (self.A @ U.T).T
        if not self._lower:
            return U + R / self._diag, P, fresh
        return U + _lower_solve(self.A, R) / self._scale, P, fresh

    def step(self, rhs: np.ndarray, state: SplitterState) -> SplitterState:
        P = None if state.p is None else state.p[None, :]
        fresh = np.array([state.fresh])
        U2, P2, fresh2 = self.step_bundle(rhs[None, :], state.u[None, :], P, fresh)
        if self.splitting.kind == "quasi_cg":
            return SplitterState(U2[0], P2[0], bool(fresh2[0]))
        return SplitterState(U2[0], state.p, state.fresh)


def make_stepper(splitting: Splitting, A: sp.spmatrix) -> Stepper:
    return Stepper(splitting, A)


def split_step(splitting: Splitting, A: sp.spmatrix, rhs: np.ndarray,
               state: SplitterState) -> SplitterState:
    """Advance one system by a single splitting step."""
    return Stepper(splitting, A).step(rhs, state)


def _quasi_cg_bundle(A, rhs, U, P, fresh):
    if P is None:
        P = np.zeros_like(U)
    if fresh is None:
        fresh = np.ones(U.shape[0], dtype=bool)
    R = rhs - (A @ U.T).T
    rnorm2 = np.einsum("ij,ij->i", R, R)
    solved = rnorm2 == 0.0

    AP = (A @ P.T).T
    pAp = np.einsum("ij,ij->i", P, AP)
    pAr = np.einsum("ij,ij->i", AP, R)  # <p, A r> via symmetry of A
    reset = fresh | (pAp <= EPS_CG * rnorm2) | (pAr == 0.0)
    z = np.where(reset, 0.0, -pAr / np.where(reset, 1.0, pAp))
    P2 = np.where(reset[:, None], R, R + z[:, None] * P)

    AP2 = (A @ P2.T).T
    p2Ap2 = np.einsum("ij,ij->i", P2, AP2)
    if np.any((p2Ap2 == 0.0) & ~solved):
        raise BreakdownError("quasi-CG direction has zero energy norm")
    t = np.where(solved, 0.0, np.einsum("ij,ij->i", P2, R)
                 / np.where(solved, 1.0, p2Ap2))
    U2 = U + t[:, None] * P2
    # rows already solved keep their state untouched
    P2 = np.where(solved[:, None], P, P2)
    return U2, P2, np.where(solved, fresh, False)


def quasi_cg_step(A: sp.spmatrix, rhs: np.ndarray,
                  state: SplitterState) -> SplitterState:
    """One quasi-conjugate-gradient update of a single system."""
    return Stepper(quasi_cg(), A).step(rhs, state)


@dataclass
class DiagnosticsReport:
    """Numerically estimated splitting constants and exact structure flags."""

    gamma_n: float
    alpha: float
    diag_dominant: bool
    spd: bool


def _splitting_n_matrix(splitting: Splitting, A: sp.csr_matrix) -> sp.csr_matrix:
    kind = splitting.kind
    if kind == "full":
        return A.copy()
    base = kind if kind != "sor" else splitting.base
    scale = 1.0 + splitting.relax if kind == "sor" else 1.0
    if base == "jacobi":
        return sp.diags(A.diagonal() * scale).tocsr()
    N = sp.tril(A, format="csr")
    return (N * scale).tocsr()


def diagnose(splitting: Splitting, A: sp.spmatrix, seed: int = 0,
             iters: int = 50, tol: float = 1e-8) -> DiagnosticsReport:
    """Estimate the contraction factor rho(N^-1 M) and the smallest singular
    value of N; report exact diagonal-dominance and SPD flags for A."""
    if splitting.kind == "quasi_cg":
        raise ValueError("quasi_cg has no matrix splitting to diagnose")
    A = sp.csr_matrix(A)
    n = A.shape[0]
    N = _splitting_n_matrix(splitting, A)
    lu_n = splu(N.tocsc(), permc_spec="NATURAL")
    rng = np.random.default_rng(seed)

    if splitting.kind == "full":
        alpha = 0.0
    else:
        v = rng.standard_normal(n)
        v /= np.linalg.norm(v)
        alpha = 0.0
        for _ in range(iters):
            bv = lu_n.solve(A @ v - N @ v)
            est = np.linalg.norm(bv)
            if est == 0.0:
                alpha = 0.0
                break
            v = bv / est
            if abs(est - alpha) <= tol * est:
                alpha = est
                break
            alpha = est

    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        y = lu_n.solve(lu_n.solve(v, trans="T"))
        est = np.linalg.norm(y)
        v = y / est
        if abs(est - lam) <= tol * est:
            lam = est
            break
        lam = est
    gamma_n = 1.0 / np.sqrt(lam)

    d = np.abs(A.diagonal())
    row_abs = np.asarray(np.abs(A).sum(axis=1)).ravel()
    diag_dominant = bool(np.all(d > row_abs - d))

    sym = abs(A - A.T).max() <= 1e-12 * max(abs(A).max(), 1e-300)
    if not sym:
        spd = False
    elif n <= 5000:
        try:
            np.linalg.cholesky(A.toarray())
            spd = True
        except np.linalg.LinAlgError:
            spd = False
    else:
        from scipy.sparse.linalg import eigsh

        spd = bool(eigsh(A, k=1, which="SA",
                         return_eigenvectors=False)[0] > 0.0)
    return DiagnosticsReport(float(gamma_n), float(alpha), diag_dominant, spd)
