"""Uniform radial grid on [0, r_max] for radially symmetric fields in R^N.

All integrals over R^N reduce to weighted sums over the nodes, and the
discrete Dirichlet energy is a cell sum whose gradient (with respect to the
weighted inner product) defines the discrete -Laplacian.  Because the
operator is derived from the energy rather than chosen as an independent
stencil, ``<L f, g> = D(f, g)`` holds to rounding error on every grid.

Boundary handling
-----------------
* ``f(r_max) = 0`` (Dirichlet truncation of R^N).
* ``f_0 = f_1``: the origin node carries zero quadrature weight, so its
  value is only seen by the first cell of the Dirichlet form.  Slaving it
  to the first interior node is the value that minimises that cell and
  keeps the weighted gradient well defined.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import gamma, isfinite, pi

import numpy as np
from scipy.linalg import eigh_tridiagonal, solve_banded

__all__ = [
    "RadialGrid",
    "Field",
    "build_grid",
    "sphere_area",
    "enforce_bc",
    "integrate",
    "inner",
    "dirichlet_form",
    "dirichlet_energy",
    "apply_neg_laplacian",
    "solve_shifted",
    "dirichlet_eigenvalues",
]


def sphere_area(N: int) -> float:
    """Surface measure of the unit sphere S^{N-1} in R^N."""
    return 2.0 * pi ** (N / 2.0) / gamma(N / 2.0)


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Radial nodes ``r_i = i*h`` with trapezoid weights for R^N integrals.

    Attributes:
        dimension: spatial dimension N.
        r_max: truncation radius.
        node_count: number of nodes M.
        h: spacing r_max / (M - 1).
        nodes: the M radii.
        weights: quadrature weights, ``sum(weights * f)`` ~ integral of f over the ball.
        cell_weights: ``sigma * r_{i+1/2}^{N-1} / h`` for the M - 1 cells.
    """

    dimension: int
    r_max: float
    node_count: int
    h: float
    nodes: np.ndarray
    weights: np.ndarray
    cell_weights: np.ndarray

    @property
    def sigma(self) -> float:
        return sphere_area(self.dimension)

    def zeros(self) -> np.ndarray:
        return np.zeros(self.node_count)

    def same_as(self, other: "RadialGrid") -> bool:
        return (
            self is other
            or (
                self.dimension == other.dimension
                and self.node_count == other.node_count
                and self.r_max == other.r_max
            )
        )


def build_grid(N: int, r_max: float = 24.0, M: int = 2001) -> RadialGrid:
    """Build the uniform radial grid.

    Raises:
        ValueError: if ``N < 2``, ``M < 16`` or ``r_max`` is not a positive finite number.
    """
    if int(N) != N or N < 2:
        raise ValueError(f"dimension N must be an integer >= 2, got {N!r}")
    if int(M) != M or M < 16:
        raise ValueError(f"node count M must be an integer >= 16, got {M!r}")
    r_max = float(r_max)
    if not isfinite(r_max) or r_max <= 0.0:
        raise ValueError(f"r_max must be positive and finite, got {r_max!r}")
    N, M = int(N), int(M)
    h = r_max / (M - 1)
    nodes = np.arange(M, dtype=float) * h
    nodes[-1] = r_max
    sigma = sphere_area(N)
    weights = sigma * nodes ** (N - 1) * h
    weights[0] *= 0.5
    weights[-1] *= 0.5
    mid = (np.arange(M - 1, dtype=float) + 0.5) * h
    cell_weights = sigma * mid ** (N - 1) / h
    for arr in (nodes, weights, cell_weights):
        arr.setflags(write=False)
    return RadialGrid(N, r_max, M, h, nodes, weights, cell_weights)


def enforce_bc(values: np.ndarray) -> np.ndarray:
    """Return a copy with ``v[-1] = 0`` and ``v[0] = v[1]``."""
    v = np.array(values, dtype=float, copy=True)
    v[..., -1] = 0.0
    v[..., 0] = v[..., 1]
    return v


class Field:
    """Nodal values of a radial function on a grid (boundary conditions applied)."""

    __slots__ = ("grid", "values")

    def __init__(self, grid: RadialGrid, values):
        values = np.asarray(values, dtype=float)
        if values.shape != (grid.node_count,):
            raise ValueError(
                f"field has shape {values.shape}, grid expects ({grid.node_count},)"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        self.grid = grid
        self.values = enforce_bc(values)

    @classmethod
    def from_function(cls, grid: RadialGrid, func) -> "Field":
        return cls(grid, func(grid.nodes))

    def mass(self) -> float:
        return integrate(self.grid, self.values**2)

    def __repr__(self) -> str:
        return f"Field(M={self.grid.node_count}, mass={self.mass():.6g})"


def _vals(grid: RadialGrid, f, stacked: bool = False) -> np.ndarray:
    if isinstance(f, Field):
        if not f.grid.same_as(grid):
            raise ValueError("field lives on a different grid")
        return f.values
    v = np.asarray(f, dtype=float)
    ok = v.ndim >= 1 and v.shape[-1] == grid.node_count if stacked else v.shape == (grid.node_count,)
    if not ok:
        raise ValueError(f"length mismatch: got {v.shape}, expected (..., {grid.node_count})")
    return v


def integrate(grid: RadialGrid, values) -> float:
    """Quadrature of a radial function over the ball of radius r_max."""
    return float(np.dot(grid.weights, _vals(grid, values)))


def inner(grid: RadialGrid, f, g) -> float:
    """Weighted inner product ``sum_i w_i f_i g_i``."""
    return float(np.dot(grid.weights, _vals(grid, f) * _vals(grid, g)))


def dirichlet_form(grid: RadialGrid, f, g) -> float:
    """Symmetric cell-sum bilinear form D(f, g) approximating the integral of grad f . grad g."""
    df = np.diff(_vals(grid, f))
    dg = np.diff(_vals(grid, g))
    return float(np.dot(grid.cell_weights, df * dg))


def dirichlet_energy(grid: RadialGrid, f) -> float:
    """Discrete Dirichlet energy D(f, f) (the integral of |grad f|^2)."""
    df = np.diff(_vals(grid, f))
    return float(np.dot(grid.cell_weights, df * df))


def _stiffness_apply(grid: RadialGrid, v: np.ndarray) -> np.ndarray:
    # gradient of D(v)/2 w.r.t. nodal values, last axis
    flux = grid.cell_weights * np.diff(v, axis=-1)
    out = np.zeros_like(v)
    out[..., :-1] -= flux
    out[..., 1:] += flux
    return out


def apply_neg_laplacian(grid: RadialGrid, f, *, as_field: bool = False):
    """Discrete -Laplacian: the weighted-inner-product gradient of D(f)/2.

    Interior nodes get ``(dD/2 df_i) / w_i``; the origin copies node 1 and
    the outer node is 0, matching the field boundary conditions.
    """
    v = _vals(grid, f, stacked=True)
    k = _stiffness_apply(grid, v)
    out = np.zeros_like(v)
    out[..., 1:-1] = k[..., 1:-1] / grid.weights[1:-1]
    out[..., 0] = out[..., 1]
    return Field(grid, out) if as_field else out


def _banded_system(grid: RadialGrid, shift: float):
    # (K + shift W) on free nodes 1..M-2; origin slaved so cell 0 drops out
    c = grid.cell_weights
    w = grid.weights[1:-1]
    diag = c[:-1] + c[1:] + shift * w
    diag[0] -= c[0]
    off = -c[1:-1]
    ab = np.zeros((3, diag.size))
    ab[0, 1:] = off
    ab[1] = diag
    ab[2, :-1] = off
    return ab


def solve_shifted(grid: RadialGrid, rhs, shift: float = 0.0) -> np.ndarray:
    """Solve ``(L + shift) x = rhs`` in the discrete space (Dirichlet at r_max).

    ``shift`` must keep the operator positive definite (any ``shift > -lambda_min(L)``).
    """
    rhs = np.asarray(rhs, dtype=float)
    ab = _banded_system(grid, shift)
    b = grid.weights[1:-1] * rhs[1:-1]
    x = np.zeros(grid.node_count)
    x[1:-1] = solve_banded((1, 1), ab, b, check_finite=False)
    x[0] = x[1]
    return x


def dirichlet_eigenvalues(grid: RadialGrid, count: int = 1) -> np.ndarray:
    """Lowest eigenvalues of the discrete -Laplacian (generalised problem K x = lam W x)."""
    ab = _banded_system(grid, 0.0)
    s = 1.0 / np.sqrt(grid.weights[1:-1])
    d = ab[1] * s * s
    e = ab[0, 1:] * s[:-1] * s[1:]
    return eigh_tridiagonal(d, e, select="i", select_range=(0, count - 1), eigvals_only=True)
