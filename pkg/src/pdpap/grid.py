"""Regular grid on [0,1]^2: node/edge fields, difference operators, boundary data.

Nodes are indexed row-major: node (i, j) -> i*n + j, where i is the y (row)
index and j the x (column) index, so coordinates are (x, y) = (j*h, i*h).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

__all__ = [
    "GridSpec",
    "EdgeField",
    "interior_indices",
    "boundary_parametrization",
    "boundary_data",
    "gradient",
    "divergence",
    "forward_differences",
    "backward_divergence",
    "gradient_matrix",
    "edge_average",
]


@dataclass(frozen=True)
class GridSpec:
    """Regular n x n node grid on the unit square."""

    n: int

    def __post_init__(self):
        if self.n < 3:
            raise ValueError(f"grid needs at least 3 nodes per side, got {self.n}")

    @property
    def h(self) -> float:
        return 1.0 / (self.n - 1)

    @property
    def n_nodes(self) -> int:
        return self.n * self.n

    @property
    def n_interior(self) -> int:
        return (self.n - 2) ** 2

    @property
    def n_boundary(self) -> int:
        return 4 * (self.n - 1)

    @property
    def n_edges(self) -> int:
        return 2 * self.n * (self.n - 1)


@dataclass
class EdgeField:
    """Values on grid edges: dx on horizontal edges, dy on vertical edges.

    Shapes are dx: (n, n-1) and dy: (n-1, n), i.e. one entry per pair of
    horizontally / vertically adjacent nodes.
    """

    dx: np.ndarray
    dy: np.ndarray

    @classmethod
    def zeros(cls, grid: GridSpec) -> "EdgeField":
        n = grid.n
        return cls(np.zeros((n, n - 1)), np.zeros((n - 1, n)))

    def copy(self) -> "EdgeField":
        return EdgeField(self.dx.copy(), self.dy.copy())

    def ravel(self) -> np.ndarray:
        """Flat view [dx row-major, dy row-major]; matches gradient_matrix rows."""
        return np.concatenate([self.dx.ravel(), self.dy.ravel()])

    def __add__(self, other: "EdgeField") -> "EdgeField":
        return EdgeField(self.dx + other.dx, self.dy + other.dy)

    def __sub__(self, other: "EdgeField") -> "EdgeField":
        return EdgeField(self.dx - other.dx, self.dy - other.dy)

    def __mul__(self, s: float) -> "EdgeField":
        return EdgeField(self.dx * s, self.dy * s)

    __rmul__ = __mul__


@lru_cache(maxsize=None)
def _index_cache(n: int):
    """Interior indices (row-major order) and boundary indices (arclength order)."""
    idx = np.arange(n * n).reshape(n, n)
    interior = idx[1:-1, 1:-1].ravel()
    # counterclockwise from (0,0): bottom, right, top, left; each corner once
    bottom = idx[0, 0 : n - 1]
    right = idx[0 : n - 1, n - 1]
    top = idx[n - 1, n - 1 : 0 : -1]
    left = idx[n - 1 : 0 : -1, 0]
    boundary = np.concatenate([bottom, right, top, left])
    return interior, boundary


def interior_indices(grid: GridSpec) -> np.ndarray:
    return _index_cache(grid.n)[0]


def boundary_parametrization(grid: GridSpec):
    """Boundary nodes in counterclockwise arclength order, with their t values.

    Returns
    -------
    indices : ndarray
        Node indices of the 4(n-1) boundary nodes, starting at (0,0).
    t : ndarray
        Equally spaced arclength fractions in [0, 1), perimeter normalized
        to 1, t=0 at the corner (0,0).
    """
    indices = _index_cache(grid.n)[1]
    t = np.arange(indices.size) / indices.size
    return indices, t


def boundary_data(grid: GridSpec, i: int) -> np.ndarray:
    """Trace values of the i-th boundary condition at the boundary nodes.

    Condition 2j-1 is t -> cos(2*pi*j*t) and condition 2j is t -> sin(2*pi*j*t),
    sampled along the counterclockwise parametrization.
    """
    if i < 1:
        raise ValueError("condition index starts at 1")
    _, t = boundary_parametrization(grid)
    j = (i + 1) // 2
    phase = 2.0 * np.pi * j * t
    return np.cos(phase) if i % 2 == 1 else np.sin(phase)


def forward_differences(grid: GridSpec, f: np.ndarray) -> EdgeField:
    """Unit-spacing forward differences of a nodal field, node -> edge."""
    f2 = np.asarray(f).reshape(grid.n, grid.n)
    return EdgeField(f2[:, 1:] - f2[:, :-1], f2[1:, :] - f2[:-1, :])


def backward_divergence(grid: GridSpec, e: EdgeField) -> np.ndarray:
    """Exact negative adjoint of forward_differences, edge -> node.

    Satisfies <forward_differences(f), e> = -<f, backward_divergence(e)>
    for the unweighted Euclidean inner products.
    """
    n = grid.n
    if e.dx.shape != (n, n - 1) or e.dy.shape != (n - 1, n):
        raise ValueError("edge field does not match grid")
    out = np.zeros((n, n))
    out[:, :-1] += e.dx
    out[:, 1:] -= e.dx
    out[:-1, :] += e.dy
    out[1:, :] -= e.dy
    return out.ravel()


def gradient(grid: GridSpec, f: np.ndarray) -> EdgeField:
    """Forward-difference gradient scaled by 1/h."""
    if np.asarray(f).size != grid.n_nodes:
        raise ValueError("field does not match grid")
    return forward_differences(grid, f) * (1.0 / grid.h)


def divergence(grid: GridSpec, e: EdgeField) -> np.ndarray:
    """Discrete divergence, the exact negative adjoint of gradient."""
    return backward_divergence(grid, e) * (1.0 / grid.h)


@lru_cache(maxsize=None)
def _gradient_matrix(n: int) -> sp.csr_matrix:
    h = 1.0 / (n - 1)
    idx = np.arange(n * n).reshape(n, n)
    # dx edges: (i, j) -> (i, j+1), row-major; then dy edges: (i, j) -> (i+1, j)
    px = idx[:, :-1].ravel()
    qx = idx[:, 1:].ravel()
    py = idx[:-1, :].ravel()
    qy = idx[1:, :].ravel()
    n_e = px.size + py.size
    rows = np.repeat(np.arange(n_e), 2)
    cols = np.empty(2 * n_e, dtype=np.int64)
    cols[0::2] = np.concatenate([qx, qy])
    cols[1::2] = np.concatenate([px, py])
    vals = np.tile(np.array([1.0 / h, -1.0 / h]), n_e)
    D = sp.csr_matrix((vals, (rows, cols)), shape=(n_e, n * n))
    D.sort_indices()
    return D


def gradient_matrix(grid: GridSpec) -> sp.csr_matrix:
    """Sparse 1/h-scaled gradient, rows ordered as EdgeField.ravel()."""
    return _gradient_matrix(grid.n)


def edge_average(grid: GridSpec, a: np.ndarray) -> np.ndarray:
    """Arithmetic mean of the two endpoint nodal values, per edge (flat order)."""
    a2 = np.asarray(a).reshape(grid.n, grid.n)
    ax = 0.5 * (a2[:, :-1] + a2[:, 1:])
    ay = 0.5 * (a2[:-1, :] + a2[1:, :])
    return np.concatenate([ax.ravel(), ay.ravel()])
