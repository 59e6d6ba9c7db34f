"""Piecewise-linear finite elements on a uniform time grid ``(0, T)``.

Matrix conventions (``φ_i`` the nodal hat functions)::

    M[i, j] = ∫ φ_j φ_i dt        K[i, j] = ∫ φ_j' φ_i' dt
    D[i, j] = ∫ φ_j' φ_i dt

so ``D + Dᵀ = e_T e_Tᵀ - e_0 e_0ᵀ``.  Homogeneous initial (``u(0) = 0``) and
terminal (``v(T) = 0``) conditions are imposed by deleting the first or last
node, see :class:`Constraint`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .spectrum import SpatialSpectrum

__all__ = [
    "Constraint",
    "TimeGrid",
    "ModalField",
    "Integrand",
    "build_time_grid",
    "constrain",
    "interpolate_nodal",
    "time_reversal",
    "exact_moments",
    "element_pairings",
]


class Constraint(enum.Enum):
    NONE = "none"
    LEFT = "left"  # u(0) = 0, the "0," subscript
    RIGHT = "right"  # v(T) = 0, the ",0" subscript

    def keep(self, n_nodes: int) -> np.ndarray:
        """Indices of the free nodes."""
        if self is Constraint.LEFT:
            return np.arange(1, n_nodes)
        if self is Constraint.RIGHT:
            return np.arange(0, n_nodes - 1)
        return np.arange(n_nodes)

    def reversed(self) -> "Constraint":
        """Constraint pattern seen after ``t -> T - t``."""
        return {
            Constraint.LEFT: Constraint.RIGHT,
            Constraint.RIGHT: Constraint.LEFT,
        }.get(self, Constraint.NONE)


@dataclass(frozen=True)
class TimeGrid:
    T: float
    n_t: int
    nodes: np.ndarray
    M: sp.csr_matrix
    K: sp.csr_matrix
    D: sp.csr_matrix

    @property
    def h(self) -> float:
        return self.T / self.n_t

    @property
    def n_nodes(self) -> int:
        return self.n_t + 1

    @property
    def e0(self) -> np.ndarray:
        e = np.zeros(self.n_nodes)
        e[0] = 1.0
        return e

    @property
    def eT(self) -> np.ndarray:
        e = np.zeros(self.n_nodes)
        e[-1] = 1.0
        return e

    def ndof(self, constraint: Constraint) -> int:
        return self.n_nodes - (constraint is not Constraint.NONE)


def _assemble(n_t: int, local: np.ndarray) -> sp.csr_matrix:
    rows, cols, vals = [], [], []
    for e in range(n_t):
        for a in range(2):
            for b in range(2):
                rows.append(e + a)
                cols.append(e + b)
                vals.append(local[a, b])
    n = n_t + 1
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def build_time_grid(T: float, n_t: int) -> TimeGrid:
    if not (T > 0 and math.isfinite(T)):
        raise ValueError(f"final time must be positive and finite, got {T}")
    if int(n_t) != n_t or n_t < 1:
        raise ValueError(f"element count must be a positive integer, got {n_t}")
    n_t = int(n_t)
    h = T / n_t
    mass = h / 6.0 * np.array([[2.0, 1.0], [1.0, 2.0]])
    stiff = 1.0 / h * np.array([[1.0, -1.0], [-1.0, 1.0]])
    # row = test node, column = trial node
    deriv = 0.5 * np.array([[-1.0, 1.0], [-1.0, 1.0]])
    nodes = np.linspace(0.0, T, n_t + 1)
    nodes.flags.writeable = False
    return TimeGrid(
        float(T), n_t, nodes, _assemble(n_t, mass), _assemble(n_t, stiff), _assemble(n_t, deriv)
    )


def constrain(obj, row_constraint: Constraint, col_constraint: Constraint | None = None):
    """Delete the constrained rows (and columns) of a grid matrix or vector.

    Vectors only use ``row_constraint``.  Sparse input stays sparse.
    """
    if obj.ndim == 1:
        return np.asarray(obj)[row_constraint.keep(obj.shape[0])]
    if col_constraint is None:
        col_constraint = row_constraint
    rows = row_constraint.keep(obj.shape[0])
    cols = col_constraint.keep(obj.shape[1])
    if sp.issparse(obj):
        return obj.tocsr()[rows][:, cols]
    return np.asarray(obj)[np.ix_(rows, cols)]


def interpolate_nodal(f: Callable, grid: TimeGrid, constraint: Constraint = Constraint.NONE) -> np.ndarray:
    values = np.asarray(f(grid.nodes), dtype=float)
    values = np.broadcast_to(values, grid.nodes.shape).copy()
    free = constraint.keep(grid.n_nodes)
    if not np.all(np.isfinite(values[free])):
        raise FloatingPointError("interpolated function is not finite at a grid node")
    return values[free]


def time_reversal(grid: TimeGrid) -> sp.csr_matrix:
    """Permutation mapping nodal values of ``f`` to those of ``f(T - ·)``."""
    n = grid.n_nodes
    return sp.csr_matrix((np.ones(n), (np.arange(n), np.arange(n)[::-1])), shape=(n, n))


def element_pairings(grid: TimeGrid) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Pairings of hat functions with element indicators ``χ_e``.

    Returns ``(Dp, Ap)`` with ``Dp[e, j] = ∫_e φ_j' dt`` and
    ``Ap[e, j] = ∫_e φ_j dt``, both of shape ``(n_t, n_t + 1)``.
    """
    n = grid.n_t
    e = np.arange(n)
    rows = np.r_[e, e]
    cols = np.r_[e, e + 1]
    Dp = sp.csr_matrix((np.r_[-np.ones(n), np.ones(n)], (rows, cols)), shape=(n, n + 1))
    Ap = sp.csr_matrix((np.full(2 * n, 0.5 * grid.h), (rows, cols)), shape=(n, n + 1))
    return Dp, Ap


@dataclass(frozen=True)
class Integrand:
    """Time integrand from a small closed catalog.

    ``kind`` is one of ``"zero"``, ``"poly"`` (``coeffs`` in increasing
    degree), ``"sin"`` (``sin(a t)``), ``"t_sin"`` (``t sin(a t)``) and
    ``"u1"`` (``(sin(a t) - a t cos(a t)) / a²``, the antiderivative of
    ``t sin(a t)``).  ``scale`` multiplies the whole expression.
    """

    kind: str
    a: float = 0.0
    coeffs: tuple[float, ...] = ()
    scale: float = 1.0

    KINDS = ("zero", "poly", "sin", "t_sin", "u1")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown integrand tag {self.kind!r}; expected one of {self.KINDS}")
        if self.kind == "u1" and self.a == 0:
            raise ValueError("u1 integrand needs a nonzero frequency")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        a = self.a
        if self.kind == "zero":
            out = np.zeros_like(t)
        elif self.kind == "poly":
            out = np.polynomial.polynomial.polyval(t, self.coeffs or (0.0,)) * np.ones_like(t)
        elif self.kind == "sin":
            out = np.sin(a * t)
        elif self.kind == "t_sin":
            out = t * np.sin(a * t)
        else:
            out = (np.sin(a * t) - a * t * np.cos(a * t)) / a**2
        return self.scale * out


def exact_moments(f: Integrand, grid: TimeGrid, order: int = 5) -> np.ndarray:
    """Load vector ``∫ f φ_i dt`` by element-wise Gauss-Legendre quadrature."""
    if not isinstance(f, Integrand):
        raise ValueError(f"integrand must be a catalog Integrand, got {type(f).__name__}")
    x, w = np.polynomial.legendre.leggauss(order)
    h = grid.h
    left = grid.nodes[:-1, None]
    t = left + 0.5 * h * (x[None, :] + 1.0)
    fw = f(t) * (0.5 * h * w[None, :])
    xi = 0.5 * (x + 1.0)
    load = np.zeros(grid.n_nodes)
    load[:-1] += fw @ (1.0 - xi)
    load[1:] += fw @ xi
    return load


@dataclass
class ModalField:
    """Space-time function in the eigenbasis.

    ``coefficients[k, c]`` are the time-nodal values of component ``c`` on
    mode ``k``, restricted to the free nodes of ``constraints[c]``.
    """

    spectrum: SpatialSpectrum
    coefficients: np.ndarray
    constraints: tuple[Constraint, ...]

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if self.coefficients.ndim != 3:
            raise ValueError("coefficients must have shape (modes, components, dofs)")
        K, ncomp, _ = self.coefficients.shape
        if K != len(self.spectrum):
            raise ValueError(f"field has {K} modes, spectrum has {len(self.spectrum)}")
        if ncomp not in (1, 2) or len(self.constraints) != ncomp:
            raise ValueError("one or two components with one constraint each")

    @property
    def components(self) -> int:
        return self.coefficients.shape[1]

    def mode_vector(self, k: int) -> np.ndarray:
        """Stacked component coefficients of mode ``k``."""
        return self.coefficients[k].reshape(-1)

    @classmethod
    def from_mode_vectors(cls, spectrum, vectors, constraints) -> "ModalField":
        ncomp = len(constraints)
        arr = np.array([np.asarray(v, dtype=float).reshape(ncomp, -1) for v in vectors])
        return cls(spectrum, arr, tuple(constraints))
