"""Catalog of the eight variational formulations, discretized per eigenmode.

For a mode with eigenvalue ``λ`` each formulation becomes a triple
``(B, G_U, G_V)``: the operator matrix (rows = test dofs, columns = trial
dofs) and the trial and test Gram matrices.  Poisson formulations are scalar
per mode and need no time grid.

Where a closed norm representation exists, the instance also carries the
symmetric correction ``C`` with ``Bᵀ G_V⁻¹ B = G_U + C``:

* heat, strong in time: ``C = e_T e_Tᵀ``, the discrete ``2⟨∂_t u, u⟩``;
* wave, strong in time: the discrete ``2⟨∂_t u, J u⟩`` with
  ``J = [[0, -I], [I, 0]]``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .bochner import (
    ComponentNorm,
    GramMatrix,
    NormTerm,
    SpaceTimeNormSpec,
    assemble_gram,
)
from .spectrum import SobolevWeight, SpatialSpectrum
from .temporal import (
    Constraint,
    Integrand,
    ModalField,
    TimeGrid,
    constrain,
    exact_moments,
    interpolate_nodal,
)

__all__ = [
    "FormulationId",
    "FormulationInstance",
    "ClosedForms",
    "trial_norm",
    "test_norm",
    "operator_matrix",
    "correction_matrix",
    "assemble_formulation",
    "assemble_modes",
    "counterexample_field",
    "counterexample_closed_forms",
    "assemble_rhs",
]

W = SobolevWeight
NONE, LEFT, RIGHT = Constraint.NONE, Constraint.LEFT, Constraint.RIGHT


class FormulationId(str, enum.Enum):
    POISSON_STRONG = "poisson_strong"
    POISSON_WEAK = "poisson_weak"
    POISSON_ULTRAWEAK = "poisson_ultraweak"
    HEAT_STRONG_T = "heat_strong_t"
    HEAT_WEAK_T = "heat_weak_t"
    WAVE_STRONG_T = "wave_strong_t"
    WAVE_WEAK_T = "wave_weak_t"
    WAVE_ULTRAWEAK_T = "wave_ultraweak_t"

    @property
    def is_poisson(self) -> bool:
        return self.value.startswith("poisson")

    @classmethod
    def parse(cls, value) -> "FormulationId":
        try:
            return cls(value)
        except ValueError:
            raise ValueError(f"unknown formulation {value!r}") from None


def _single(*terms, constraint=NONE):
    return SpaceTimeNormSpec.single(*terms, constraint=constraint)


def _mass(w):
    return NormTerm("mass", w)


def _stiff(w):
    return NormTerm("stiffness", w)


def _ddual(w, pairing=NONE):
    return NormTerm("derivative_dual", w, pairing)


_TRIAL = {
    FormulationId.POISSON_STRONG: _single(_mass(W.GRAPH)),
    FormulationId.POISSON_WEAK: _single(_mass(W.H1_0)),
    FormulationId.POISSON_ULTRAWEAK: _single(_mass(W.L2)),
    # L²(I;H¹₀) ∩ H¹_{0,}(I;H⁻¹)
    FormulationId.HEAT_STRONG_T: _single(_ddual(W.H_MINUS1), _mass(W.H1_0), constraint=LEFT),
    FormulationId.HEAT_WEAK_T: _single(_mass(W.H1_0)),
    # H¹_{0,}(I; L²×H⁻¹) ∩ L²(I; H¹₀×L²)
    FormulationId.WAVE_STRONG_T: SpaceTimeNormSpec(
        (
            ComponentNorm((_ddual(W.L2), _mass(W.H1_0)), LEFT),
            ComponentNorm((_ddual(W.H_MINUS1), _mass(W.L2)), LEFT),
        )
    ),
    FormulationId.WAVE_WEAK_T: _single(_stiff(W.L2), _mass(W.H1_0), constraint=LEFT),
    FormulationId.WAVE_ULTRAWEAK_T: SpaceTimeNormSpec(
        (ComponentNorm((_mass(W.H1_0),)), ComponentNorm((_mass(W.L2),)))
    ),
}

_TEST = {
    FormulationId.POISSON_STRONG: _single(_mass(W.L2)),
    FormulationId.POISSON_WEAK: _single(_mass(W.H1_0)),
    FormulationId.POISSON_ULTRAWEAK: _single(_mass(W.GRAPH)),
    FormulationId.HEAT_STRONG_T: _single(_mass(W.H1_0)),
    # L²(I;H¹₀) ∩ H¹_{,0}(I;H⁻¹); the dual is in space only
    FormulationId.HEAT_WEAK_T: _single(_stiff(W.H_MINUS1), _mass(W.H1_0), constraint=RIGHT),
    FormulationId.WAVE_STRONG_T: SpaceTimeNormSpec(
        (ComponentNorm((_mass(W.L2),)), ComponentNorm((_mass(W.H1_0),)))
    ),
    FormulationId.WAVE_WEAK_T: _single(_stiff(W.L2), _mass(W.H1_0), constraint=RIGHT),
    # H¹_{,0}(I; H⁻¹×L²) ∩ L²(I; L²×H¹₀)
    FormulationId.WAVE_ULTRAWEAK_T: SpaceTimeNormSpec(
        (
            ComponentNorm((_stiff(W.H_MINUS1), _mass(W.L2)), RIGHT),
            ComponentNorm((_stiff(W.L2), _mass(W.H1_0)), RIGHT),
        )
    ),
}

_POISSON_B = {
    FormulationId.POISSON_STRONG: lambda lam: lam,
    FormulationId.POISSON_WEAK: lambda lam: lam,
    FormulationId.POISSON_ULTRAWEAK: lambda lam: lam,
}


def trial_norm(fid) -> SpaceTimeNormSpec:
    return _TRIAL[FormulationId.parse(fid)]


def test_norm(fid) -> SpaceTimeNormSpec:
    return _TEST[FormulationId.parse(fid)]


def operator_matrix(fid, lam: float, grid: TimeGrid | None, *, flip_derivative_sign: bool = False):
    """Sparse operator matrix ``B`` of one mode (rows = test, columns = trial).

    ``flip_derivative_sign`` builds a deliberately wrong operator (the time
    derivative enters with the opposite sign); it only exists so identity
    checks can be shown to fail on broken input.
    """
    fid = FormulationId.parse(fid)
    if not lam > 0:
        raise ValueError(f"eigenvalue must be positive, got {lam}")
    if fid.is_poisson:
        return sp.csr_matrix([[_POISSON_B[fid](lam)]])
    if grid is None:
        raise ValueError(f"{fid.value} needs a time grid")
    s = -1.0 if flip_derivative_sign else 1.0
    M, K, D = grid.M, grid.K, grid.D
    if fid is FormulationId.HEAT_STRONG_T:
        B = s * constrain(D, NONE, LEFT) + lam * constrain(M, NONE, LEFT)
    elif fid is FormulationId.HEAT_WEAK_T:
        B = -s * constrain(D.T, RIGHT, NONE) + lam * constrain(M, RIGHT, NONE)
    elif fid is FormulationId.WAVE_STRONG_T:
        Dc, Mc = constrain(D, NONE, LEFT), constrain(M, NONE, LEFT)
        B = sp.bmat([[s * Dc, -Mc], [lam * Mc, s * Dc]])
    elif fid is FormulationId.WAVE_WEAK_T:
        B = -constrain(K, RIGHT, LEFT) + lam * constrain(M, RIGHT, LEFT)
    else:
        Dt, Mc = constrain(D.T, RIGHT, NONE), constrain(M, RIGHT, NONE)
        # ⟨u₁, -∂_t v₁ + λ v₂⟩ + ⟨u₂, -∂_t v₂ - v₁⟩
        B = sp.bmat([[-s * Dt, -Mc], [lam * Mc, -s * Dt]])
    return sp.csr_matrix(B)


def correction_matrix(fid, grid: TimeGrid):
    """Sparse ``C`` with ``Bᵀ G_V⁻¹ B = G_U + C``, or ``None`` if no formula exists."""
    fid = FormulationId.parse(fid)
    if fid is FormulationId.HEAT_STRONG_T:
        eT = constrain(grid.eT, LEFT)
        return sp.csr_matrix(np.outer(eT, eT))
    if fid is FormulationId.WAVE_STRONG_T:
        Dl = constrain(grid.D, LEFT, LEFT)
        S = Dl - Dl.T
        return sp.csr_matrix(sp.bmat([[None, S], [S.T, None]]))
    return None


@dataclass
class FormulationInstance:
    id: FormulationId
    lam: float
    B: np.ndarray
    G_U: GramMatrix
    G_V: GramMatrix
    C: np.ndarray | None
    trial_constraints: tuple[Constraint, ...]
    test_constraints: tuple[Constraint, ...]
    grid: TimeGrid | None = None

    @property
    def components(self) -> int:
        return len(self.trial_constraints)

    @property
    def trial_dim(self) -> int:
        return self.B.shape[1]

    @property
    def test_dim(self) -> int:
        return self.B.shape[0]

    def extended_gram(self) -> np.ndarray:
        """``Bᵀ G_V⁻¹ B``, the Gram of the extended trial norm ``‖B·‖_{V'}``."""
        return self.B.T @ self.G_V.solve(self.B)


def assemble_formulation(fid, lam: float, grid: TimeGrid | None = None) -> FormulationInstance:
    fid = FormulationId.parse(fid)
    if not lam > 0:
        raise ValueError(f"eigenvalue must be positive, got {lam}")
    g = None if fid.is_poisson else grid
    B = operator_matrix(fid, lam, g).toarray()
    C = None if fid.is_poisson else correction_matrix(fid, grid)
    U, V = _TRIAL[fid], _TEST[fid]
    return FormulationInstance(
        id=fid,
        lam=float(lam),
        B=B,
        G_U=assemble_gram(U, lam, g),
        G_V=assemble_gram(V, lam, g),
        C=None if C is None else C.toarray(),
        trial_constraints=U.constraints,
        test_constraints=V.constraints,
        grid=g,
    )


def assemble_modes(fid, spectrum: SpatialSpectrum, grid: TimeGrid | None = None):
    """One instance per eigenmode of ``spectrum``, in spectral order."""
    return [assemble_formulation(fid, lam, grid) for lam in spectrum.eigenvalues]


@dataclass(frozen=True)
class ClosedForms:
    """Exact values for the wave counterexample on one mode.

    ``u_norm_sq_short`` is a shortened closed form for ``‖u^k‖²_Û``; it differs
    from the exact integral by ``(T - 2cos(aT)) sin(aT) / (2a³)`` and thus
    agrees with it whenever ``sin(√λ T) = 0``.
    """

    lam: float
    T: float
    u_norm_sq: float
    u_norm_sq_short: float
    f_norm_sq: float
    mixed: float


def counterexample_closed_forms(lam: float, T: float) -> ClosedForms:
    a = math.sqrt(lam)
    u_sq = 2.0 * T**3 / 3.0 + T / lam - math.sin(2 * a * T) / (2 * a**3)
    u_sq_short = lam**-1.5 * (T * a + 2.0 / 3.0 * T**3 * a**3 - 0.5 * T * math.sin(a * T))
    f_sq = lam**-1.5 * (2 * T * a - math.sin(2 * a * T))
    mixed = -(T**3) / 3.0 - math.sin(2 * a * T) / (4 * a**3) + T / (2 * lam)
    return ClosedForms(lam, T, u_sq, u_sq_short, f_sq, mixed)


def counterexample_field(k: int, T: float, grid: TimeGrid, spec: SpatialSpectrum):
    """Wave counterexample ``u^k`` on mode ``k`` (1-based) and its load ``f^k``.

    ``u^k = (∫₀ᵗ s sin(√λ s) ds, t sin(√λ t))`` solves the first-order wave
    system for ``f^k = (0, 2 sin(√λ t))``.  Returns the trial field, the
    test-space load field and the closed forms.
    """
    K = len(spec)
    if int(k) != k or not 1 <= k <= K:
        raise ValueError(f"mode index must be in 1..{K}, got {k}")
    if not math.isclose(grid.T, T):
        raise ValueError(f"grid final time {grid.T} differs from T={T}")
    lam = float(spec.eigenvalues[k - 1])
    a = math.sqrt(lam)
    u1 = interpolate_nodal(Integrand("u1", a), grid, LEFT)
    u2 = interpolate_nodal(Integrand("t_sin", a), grid, LEFT)
    n = u1.size
    u = np.zeros((K, 2, n))
    u[k - 1] = (u1, u2)
    f2 = exact_moments(Integrand("sin", a, scale=2.0), grid)
    f = np.zeros((K, 2, grid.n_nodes))
    f[k - 1, 1] = f2
    return (
        ModalField(spec, u, (LEFT, LEFT)),
        ModalField(spec, f, (NONE, NONE)),
        counterexample_closed_forms(lam, T),
    )


def assemble_rhs(f, fid, lam: float, grid: TimeGrid | None) -> np.ndarray:
    """Test-space load ``⟨f, v⟩`` of one mode.

    ``f`` is an :class:`Integrand` (or one per component).  Spatial weights
    never enter the load: a component paired through ``L²(I;H⁻¹)×L²(I;H¹₀)``
    gets plain moments and the ``1/λ`` lives in ``G_V``.  Poisson loads are
    the modal coefficient itself.
    """
    fid = FormulationId.parse(fid)
    if not lam > 0:
        raise ValueError(f"eigenvalue must be positive, got {lam}")
    if fid.is_poisson:
        if isinstance(f, Integrand):
            raise ValueError("Poisson loads are modal coefficients, not time integrands")
        return np.array([float(f)])
    comps = _TEST[fid].constraints
    fs = (f,) if isinstance(f, Integrand) else tuple(f)
    if len(fs) != len(comps):
        raise ValueError(f"{fid.value} needs {len(comps)} load components, got {len(fs)}")
    return np.concatenate(
        [constrain(exact_moments(fc, grid), c) for fc, c in zip(fs, comps)]
    )
