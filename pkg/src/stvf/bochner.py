"""Per-mode Gram matrices of Bochner-space norms, dual norms and Riesz maps.

A norm on a space-time function restricted to one eigenmode ``λ`` is a sum
of terms ``w(λ) · (time block)`` where the time block is the P1 mass matrix,
the stiffness matrix, or the *consistent discrete dual* ``Dᵀ Ĝ⁻¹ D`` of the
time derivative measured against the mass of a pairing space.  The last form
makes the discrete extended-norm identities hold exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .spectrum import SobolevWeight
from .temporal import Constraint, ModalField, TimeGrid, constrain

__all__ = [
    "AssemblyError",
    "NormTerm",
    "ComponentNorm",
    "SpaceTimeNormSpec",
    "GramMatrix",
    "assemble_gram",
    "gram_quadratic",
    "sparse_gram",
    "dual_norm",
    "riesz_apply_inverse",
    "flip",
]

TIME_PARTS = ("mass", "stiffness", "derivative_dual")
SPD_PIVOT_TOL = 1e-14


class AssemblyError(ArithmeticError):
    """A Gram matrix that should be SPD is numerically indefinite."""


@dataclass(frozen=True)
class NormTerm:
    time_part: str
    weight: SobolevWeight
    # free nodes of the space the time derivative is paired with
    pairing: Constraint = Constraint.NONE

    def __post_init__(self):
        if self.time_part not in TIME_PARTS:
            raise ValueError(f"unknown time part {self.time_part!r}")


@dataclass(frozen=True)
class ComponentNorm:
    terms: tuple[NormTerm, ...]
    constraint: Constraint = Constraint.NONE

    def __post_init__(self):
        if not self.terms:
            raise ValueError("a norm needs at least one term")


@dataclass(frozen=True)
class SpaceTimeNormSpec:
    components: tuple[ComponentNorm, ...]

    def __post_init__(self):
        if len(self.components) not in (1, 2):
            raise ValueError("norm specs have one or two components")

    @classmethod
    def single(cls, *terms: NormTerm, constraint: Constraint = Constraint.NONE):
        return cls((ComponentNorm(tuple(terms), constraint),))

    @property
    def constraints(self) -> tuple[Constraint, ...]:
        return tuple(c.constraint for c in self.components)

    def ndof(self, grid: TimeGrid | None) -> int:
        if grid is None:
            return len(self.components)
        return sum(grid.ndof(c.constraint) for c in self.components)

    def flipped(self) -> "SpaceTimeNormSpec":
        return SpaceTimeNormSpec(self.components[::-1])


def _time_block(term: NormTerm, constraint: Constraint, grid: TimeGrid) -> np.ndarray:
    if term.time_part == "mass":
        return constrain(grid.M, constraint).toarray()
    if term.time_part == "stiffness":
        return constrain(grid.K, constraint).toarray()
    Dt = constrain(grid.D, term.pairing, constraint).toarray()
    Mp = constrain(grid.M, term.pairing).toarray()
    return Dt.T @ la.cho_solve(la.cho_factor(Mp), Dt)


class GramMatrix:
    """Dense SPD matrix with a lazily cached Cholesky factor."""

    def __init__(self, matrix, label: str = ""):
        A = np.atleast_2d(np.asarray(matrix, dtype=float))
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"Gram matrix must be square, got {A.shape}")
        self.matrix = 0.5 * (A + A.T)
        self.label = label
        self._factor = None

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def factor(self) -> np.ndarray:
        """Lower-triangular ``L`` with ``L Lᵀ = G``."""
        if self._factor is None:
            diag_max = float(np.max(np.abs(np.diag(self.matrix)))) if self.matrix.size else 0.0
            try:
                L = la.cholesky(self.matrix, lower=True)
            except la.LinAlgError as exc:
                raise AssemblyError(f"Gram matrix {self.label} is not positive definite") from exc
            pivots = np.diag(L) ** 2
            if pivots.size and pivots.min() < SPD_PIVOT_TOL * diag_max:
                raise AssemblyError(
                    f"Gram matrix {self.label} is numerically singular "
                    f"(pivot {pivots.min():.3e} vs diagonal {diag_max:.3e})"
                )
            self._factor = L
        return self._factor

    def solve(self, g: np.ndarray) -> np.ndarray:
        return la.cho_solve((self.factor, True), g)

    def __matmul__(self, x):
        return self.matrix @ x


def assemble_gram(spec: SpaceTimeNormSpec, lam: float, grid: TimeGrid | None) -> GramMatrix:
    """Gram matrix of ``spec`` on eigenmode ``lam``; block diagonal over components.

    With ``grid=None`` the norm is purely spatial and each component
    contributes the scalar ``Σ w(λ)`` of its mass terms.
    """
    if not lam > 0:
        raise ValueError(f"eigenvalue must be positive, got {lam}")
    blocks = []
    for comp in spec.components:
        if grid is None:
            if any(t.time_part != "mass" for t in comp.terms):
                raise ValueError("time-free norms only admit mass terms")
            blocks.append(np.array([[sum(t.weight(lam) for t in comp.terms)]]))
            continue
        n = grid.ndof(comp.constraint)
        block = np.zeros((n, n))
        for term in comp.terms:
            block += term.weight(lam) * _time_block(term, comp.constraint, grid)
        blocks.append(block)
    G = GramMatrix(la.block_diag(*blocks), label=f"at lambda={lam:.6g}")
    try:
        G.factor
    except AssemblyError as exc:
        raise AssemblyError(f"{exc} (offending eigenvalue {lam!r})") from exc
    return G


def gram_quadratic(spec: SpaceTimeNormSpec, lam: float, grid: TimeGrid, x) -> float:
    """``xᵀ G x`` for the Gram of ``spec`` without forming the dense matrix.

    Uses sparse factorizations of the pairing masses, so it scales to fine
    time grids where the consistent dual block ``Dᵀ Ĝ⁻¹ D`` would be dense.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (spec.ndof(grid),):
        raise ValueError(f"expected {spec.ndof(grid)} coefficients, got shape {x.shape}")
    total = 0.0
    offset = 0
    for comp in spec.components:
        n = grid.ndof(comp.constraint)
        xc = x[offset : offset + n]
        offset += n
        for term in comp.terms:
            w = term.weight(lam)
            if term.time_part == "mass":
                total += w * xc @ (constrain(grid.M, comp.constraint) @ xc)
            elif term.time_part == "stiffness":
                total += w * xc @ (constrain(grid.K, comp.constraint) @ xc)
            else:
                y = constrain(grid.D, term.pairing, comp.constraint) @ xc
                Mp = constrain(grid.M, term.pairing).tocsc()
                total += w * y @ spla.spsolve(Mp, y)
    return float(total)


def sparse_gram(spec: SpaceTimeNormSpec, lam: float, grid: TimeGrid) -> sp.csc_matrix:
    """Sparse Gram of a norm built from mass and stiffness terms only."""
    blocks = []
    for comp in spec.components:
        block = None
        for term in comp.terms:
            if term.time_part == "derivative_dual":
                raise ValueError("derivative-dual terms have dense Grams; use gram_quadratic")
            base = grid.M if term.time_part == "mass" else grid.K
            part = term.weight(lam) * constrain(base, comp.constraint)
            block = part if block is None else block + part
        blocks.append(block)
    return sp.csc_matrix(sp.block_diag(blocks))


def _check_dims(g, G: GramMatrix) -> np.ndarray:
    g = np.asarray(g, dtype=float)
    if g.shape[0] != G.shape[0]:
        raise ValueError(f"load of length {g.shape[0]} does not match Gram of size {G.shape[0]}")
    if not np.all(np.isfinite(g)):
        raise ValueError("load has non-finite entries")
    return g


def riesz_apply_inverse(g, G: GramMatrix) -> np.ndarray:
    """Solve ``G x = g``: the Riesz representative of the functional ``g``."""
    g = _check_dims(g, G)
    x = G.solve(g)
    # normwise backward error of the solve
    res = np.linalg.norm(G.matrix @ x - g)
    bound = 1e-12 * (np.linalg.norm(g) + np.linalg.norm(G.matrix, 2) * np.linalg.norm(x))
    if not np.all(np.isfinite(x)) or res > bound:
        raise FloatingPointError(f"Riesz solve breakdown: residual {res:.3e} exceeds {bound:.3e}")
    return x


def dual_norm(g, G: GramMatrix) -> float:
    """``√(gᵀ G⁻¹ g)``, evaluated through the triangular factor."""
    g = _check_dims(g, G)
    z = la.solve_triangular(G.factor, g, lower=True)
    return float(np.sqrt(z @ z))


def flip(obj):
    """Swap the two component blocks of a vector, square matrix or field."""
    if isinstance(obj, ModalField):
        if obj.components != 2:
            raise ValueError("flip needs a two-component field")
        return ModalField(obj.spectrum, obj.coefficients[:, ::-1, :].copy(), obj.constraints[::-1])
    if isinstance(obj, SpaceTimeNormSpec):
        if len(obj.components) != 2:
            raise ValueError("flip needs a two-component norm")
        return obj.flipped()
    if isinstance(obj, GramMatrix):
        return GramMatrix(flip(obj.matrix), obj.label)
    A = np.asarray(obj)
    n = A.shape[0]
    if n % 2:
        raise ValueError("flip needs an even number of rows (two equal components)")
    perm = np.r_[np.arange(n // 2, n), np.arange(n // 2)]
    if A.ndim == 1:
        return A[perm]
    if A.shape[1] != n:
        raise ValueError("flip of a matrix needs a square two-block matrix")
    return A[np.ix_(perm, perm)]
