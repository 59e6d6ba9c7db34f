"""Quantitative checks on assembled formulations.

Everything here works mode by mode: the space-time problems decouple in the
Dirichlet eigenbasis, so global constants are min/max reductions over modes,
always taken in spectral order.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .bochner import (
    AssemblyError,
    GramMatrix,
    dual_norm,
    gram_quadratic,
    sparse_gram,
)
from .formulations import (
    FormulationId,
    FormulationInstance,
    assemble_formulation,
    correction_matrix,
    counterexample_field,
    operator_matrix,
    test_norm,
    trial_norm,
)
from .spectrum import SpatialSpectrum, poincare_constant
from .temporal import (
    Constraint,
    ModalField,
    TimeGrid,
    constrain,
    element_pairings,
    time_reversal,
)

__all__ = [
    "ResolutionWarning",
    "SpectrumReport",
    "ConstantReport",
    "infsup_spectrum",
    "with_extended_trial_norm",
    "extended_norm",
    "supremizer",
    "norm_identity_residual",
    "counterexample_scan",
    "stability_constant",
    "embedding_constant",
    "embedding_check",
    "l2_norm",
    "adjoint_conjugation_check",
    "minres_solve",
]

COUNTEREXAMPLE_COLUMNS = (
    "k",
    "lambda",
    "u_norm_h",
    "u_norm_exact",
    "f_norm_h",
    "f_norm_exact",
    "ratio",
    "mixed_h",
    "mixed_exact",
)


class ResolutionWarning(UserWarning):
    """The time grid is too coarse for the highest requested mode."""


@dataclass
class SpectrumReport:
    formulation: FormulationId
    per_mode: list[tuple[float, float, float]]
    resolution: tuple[int, int | None, float | None]

    @property
    def betas(self) -> np.ndarray:
        return np.array([b for _, b, _ in self.per_mode])

    @property
    def gammas(self) -> np.ndarray:
        return np.array([g for _, _, g in self.per_mode])

    @property
    def global_beta(self) -> float:
        return float(self.betas.min())

    @property
    def global_gamma(self) -> float:
        return float(self.gammas.max())


@dataclass
class ConstantReport:
    name: str
    bound: float
    observed: float
    per_mode: list[float] = field(default_factory=list)
    details: dict = field(default_factory=dict)
    note: str = ""

    @property
    def satisfied(self) -> bool:
        return bool(self.observed <= self.bound * (1 + 1e-6))


def _mode_svals(inst: FormulationInstance) -> np.ndarray:
    try:
        Lu, Lv = inst.G_U.factor, inst.G_V.factor
    except AssemblyError as exc:
        raise np.linalg.LinAlgError(f"mode lambda={inst.lam:.6g}: {exc}") from exc
    X = la.solve_triangular(Lv, inst.B, lower=True)
    X = la.solve_triangular(Lu, X.T, lower=True).T
    s = la.svdvals(X)
    # more trial than test dofs: the operator has a kernel, so beta is 0
    return np.r_[s, np.zeros(max(0, X.shape[1] - X.shape[0]))]


def infsup_spectrum(instances: Sequence[FormulationInstance]) -> SpectrumReport:
    """Per-mode inf-sup ``β_k`` and continuity ``γ_k``.

    These are the extreme singular values of ``L_V⁻¹ B L_U⁻ᵀ`` with
    ``G = L Lᵀ``.
    """
    if not instances:
        raise ValueError("need at least one instance")
    per_mode = []
    for inst in instances:
        s = _mode_svals(inst)
        per_mode.append((inst.lam, float(s.min()), float(s.max())))
    grid = instances[0].grid
    resolution = (len(instances), grid.n_t if grid else None, grid.T if grid else None)
    return SpectrumReport(instances[0].id, per_mode, resolution)


def with_extended_trial_norm(inst: FormulationInstance) -> FormulationInstance:
    """Same instance with the trial Gram replaced by ``Bᵀ G_V⁻¹ B``."""
    return replace(inst, G_U=GramMatrix(inst.extended_gram(), label="extended"))


def _mode_vectors(u, instances, attr: str) -> list[np.ndarray]:
    if isinstance(u, ModalField):
        vecs = [u.mode_vector(k) for k in range(u.coefficients.shape[0])]
    else:
        vecs = [np.asarray(v, dtype=float).reshape(-1) for v in u]
    if len(vecs) != len(instances):
        raise ValueError(f"field has {len(vecs)} modes, got {len(instances)} instances")
    for k, (v, inst) in enumerate(zip(vecs, instances)):
        dim = getattr(inst, attr)
        if v.size != dim:
            raise ValueError(f"mode {k}: expected {dim} coefficients, got {v.size}")
    return vecs


def extended_norm(u, instances: Sequence[FormulationInstance]) -> float:
    """``‖u‖_Ū = ‖B u‖_{V'}`` summed over modes."""
    vecs = _mode_vectors(u, instances, "trial_dim")
    total = 0.0
    for v, inst in zip(vecs, instances):
        total += dual_norm(inst.B @ v, inst.G_V) ** 2
    return math.sqrt(total)


def supremizer(u: ModalField, instances: Sequence[FormulationInstance]) -> ModalField:
    """Test function ``v = R_V⁻¹ B u`` realizing the dual norm of ``B u``."""
    vecs = _mode_vectors(u, instances, "trial_dim")
    out = [inst.G_V.solve(inst.B @ v) for v, inst in zip(vecs, instances)]
    return ModalField.from_mode_vectors(u.spectrum, out, instances[0].test_constraints)


def norm_identity_residual(fid, lam: float, grid: TimeGrid) -> float:
    """``‖Bᵀ G_V⁻¹ B - G_U - C‖_max / ‖G_U‖_max``."""
    fid = FormulationId.parse(fid)
    if fid.is_poisson or correction_matrix(fid, grid) is None:
        raise ValueError(f"{fid.value} has no norm representation formula")
    inst = assemble_formulation(fid, lam, grid)
    R = inst.extended_gram() - inst.G_U.matrix - inst.C
    return float(np.abs(R).max() / np.abs(inst.G_U.matrix).max())


def _sparse_dual_sq(spec, lam, grid, g) -> float:
    G = sparse_gram(spec, lam, grid)
    return float(g @ spla.spsolve(G, g))


def counterexample_scan(k_list: Iterable[int], T: float, grid: TimeGrid, spec: SpatialSpectrum):
    """Discrete vs closed-form norms of the wave counterexample, one row per mode.

    Uses sparse evaluation throughout, so fine grids (``n_t`` in the
    thousands) stay cheap.
    """
    U, V = trial_norm("wave_strong_t"), test_norm("wave_strong_t")
    C = correction_matrix("wave_strong_t", grid)
    rows = []
    for k in k_list:
        u, f, cf = counterexample_field(k, T, grid, spec)
        x = u.mode_vector(k - 1)
        g = f.mode_vector(k - 1)
        u_h = math.sqrt(gram_quadratic(U, cf.lam, grid, x))
        f_h = math.sqrt(_sparse_dual_sq(V, cf.lam, grid, g))
        rows.append(
            {
                "k": int(k),
                "lambda": cf.lam,
                "u_norm_h": u_h,
                "u_norm_exact": math.sqrt(cf.u_norm_sq),
                "f_norm_h": f_h,
                "f_norm_exact": math.sqrt(cf.f_norm_sq),
                "ratio": f_h / u_h,
                "mixed_h": 0.5 * float(x @ (C @ x)),
                "mixed_exact": cf.mixed,
            }
        )
    return rows


def _check_resolution(grid: TimeGrid, spec: SpatialSpectrum) -> None:
    need = 8.0 * math.sqrt(spec.eigenvalues[-1]) * grid.T / math.pi
    if grid.n_t < need:
        warnings.warn(
            f"n_t={grid.n_t} under-resolves mode {len(spec)} (recommended n_t >= {math.ceil(need)})",
            ResolutionWarning,
            stacklevel=3,
        )


def _largest_ratio(A: np.ndarray, M: np.ndarray) -> float:
    n = M.shape[0]
    return float(la.eigh(0.5 * (A + A.T), M, eigvals_only=True, subset_by_index=[n - 1, n - 1])[0])


def _wave_strong_energy_ratio(lam: float, grid: TimeGrid) -> float:
    # Crank-Nicolson pairing: P1 trial with u(0) = 0, piecewise constant test.
    Dp, Ap = element_pairings(grid)
    Dl = constrain(Dp, Constraint.NONE, Constraint.LEFT)
    Al = constrain(Ap, Constraint.NONE, Constraint.LEFT)
    B = sp.bmat([[Dl, -Al], [lam * Al, Dl]]).toarray()
    n = grid.n_t
    load = np.vstack([np.zeros((n, grid.n_nodes)), Ap.toarray()])
    u1 = la.solve(B, load)[:n]
    E = (constrain(grid.K, Constraint.LEFT) + lam * constrain(grid.M, Constraint.LEFT)).toarray()
    return _largest_ratio(u1.T @ E @ u1, grid.M.toarray())


def _wave_weak_energy_ratio(lam: float, grid: TimeGrid) -> float:
    B = operator_matrix("wave_weak_t", lam, grid).toarray()
    load = constrain(grid.M, Constraint.RIGHT, Constraint.NONE).toarray()
    u = la.solve(B, load)
    G = sparse_gram(trial_norm("wave_weak_t"), lam, grid).toarray()
    return _largest_ratio(u.T @ G @ u, grid.M.toarray())


STABILITY_KINDS = {
    "wave_strong_Chat": (
        "C_hat",
        _wave_strong_energy_ratio,
        "energy |d_t u|^2 + lam |u|^2 of the displacement, Crank-Nicolson pairing",
    ),
    "wave_weak_T_sqrt2": (
        "T_over_sqrt2",
        _wave_weak_energy_ratio,
        "bound read in the full trial norm |d_t u|^2 + |grad u|^2 (squared)",
    ),
}


def stability_constant(kind: str, T: float, grid: TimeGrid, spec: SpatialSpectrum) -> ConstantReport:
    """Largest ``energy(u) / ‖f‖²_{L²(Q)}`` over P1 loads, maximized over modes.

    The bound reported is ``T²/2`` for both kinds (``Ĉ`` and ``(T/√2)²``).
    """
    if kind not in STABILITY_KINDS:
        raise ValueError(f"unknown stability constant {kind!r}; expected one of {sorted(STABILITY_KINDS)}")
    if not math.isclose(grid.T, T):
        raise ValueError(f"grid final time {grid.T} differs from T={T}")
    _check_resolution(grid, spec)
    name, ratio, note = STABILITY_KINDS[kind]
    per_mode = [ratio(float(lam), grid) for lam in spec.eigenvalues]
    return ConstantReport(name, T**2 / 2.0, max(per_mode), per_mode, note=note)


def embedding_constant(T: float, spec: SpatialSpectrum) -> float:
    """``C_Q = √(max{1, C_Ω²} + max{3T², 3T⁴/2})``."""
    c_omega = poincare_constant(spec)
    return math.sqrt(max(1.0, c_omega**2) + max(3 * T**2, 1.5 * T**4))


def l2_norm(u: ModalField, grid: TimeGrid) -> float:
    """``‖u‖_{L²(Q)}`` (all components) of a nodal field."""
    total = 0.0
    for k in range(u.coefficients.shape[0]):
        for c, con in enumerate(u.constraints):
            x = u.coefficients[k, c]
            total += x @ (constrain(grid.M, con) @ x)
    return math.sqrt(total)


def embedding_check(samples: int, T: float, grid: TimeGrid, spec: SpatialSpectrum, seed: int = 0) -> ConstantReport:
    """Monte-Carlo check of ``‖u‖_{L²} ≤ C_Q ‖u‖_Ū`` and ``‖u‖_Ū ≤ √2 ‖u‖_Û``.

    Fields have independent Gaussian nodal values with variance ``1/λ_k``
    on mode ``k``.  Violations are counted, not raised.  ``details`` also
    carries the worst case over the whole discrete trial space (a
    generalized eigenvalue per mode), which is not a sampled quantity.
    """
    if samples < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(seed)
    cq = embedding_constant(T, spec)
    l2 = np.zeros(samples)
    ext = np.zeros(samples)
    hat = np.zeros(samples)
    worst = []
    for lam in spec.eigenvalues:
        inst = assemble_formulation("wave_strong_t", lam, grid)
        Ml = constrain(grid.M, Constraint.LEFT).toarray()
        M2 = la.block_diag(Ml, Ml)
        N = inst.extended_gram()
        X = rng.standard_normal((samples, inst.trial_dim)) / math.sqrt(lam)
        l2 += np.einsum("si,ij,sj->s", X, M2, X)
        ext += np.einsum("si,ij,sj->s", X, N, X)
        hat += np.einsum("si,ij,sj->s", X, inst.G_U.matrix, X)
        lo = la.eigh(0.5 * (N + N.T), M2, eigvals_only=True, subset_by_index=[0, 0])[0]
        worst.append(1.0 / math.sqrt(lo))
    r_l2 = np.sqrt(l2 / ext)
    r_hat = np.sqrt(ext / hat)
    tol = 1e-12
    details = {
        "samples": samples,
        "seed": seed,
        "l2_violations": int(np.sum(r_l2 > cq * (1 + tol))),
        "hat_violations": int(np.sum(r_hat > math.sqrt(2) * (1 + tol))),
        "max_hat_ratio": float(r_hat.max()),
        "worst_case_l2_ratio": float(max(worst)),
    }
    report = ConstantReport("C_Q", cq, float(r_l2.max()), worst, details)
    report.note = "sampled fields; worst_case_l2_ratio is the discrete supremum"
    return report


def _stack_select(constraint: Constraint, n_nodes: int) -> np.ndarray:
    keep = constraint.keep(n_nodes)
    return np.r_[keep, keep + n_nodes]


def adjoint_conjugation_check(lam: float, grid: TimeGrid, *, flip_derivative_sign: bool = False) -> float:
    """Max-entry deviation between ``B_uw`` and ``Π B_strongᵀ Π``.

    ``Π`` is the component flip composed with time reversal, restricted to
    the constraint patterns it maps onto each other (initial conditions of
    the strong trial space become terminal conditions of the ultra-weak test
    space).  ``flip_derivative_sign`` corrupts ``B_uw`` as a negative control.
    """
    fs, fu = FormulationId.WAVE_STRONG_T, FormulationId.WAVE_ULTRAWEAK_T
    s_trial, s_test = trial_norm(fs).constraints, test_norm(fs).constraints
    u_trial, u_test = trial_norm(fu).constraints, test_norm(fu).constraints
    if tuple(c.reversed() for c in s_trial[::-1]) != u_test or tuple(
        c.reversed() for c in s_test[::-1]
    ) != u_trial:
        raise ValueError("constraint patterns are not mapped onto each other by flip and time reversal")
    if len(set(s_trial)) != 1 or len(set(s_test)) != 1:
        raise ValueError("components must share a constraint pattern")

    Bs = operator_matrix(fs, lam, grid).toarray()
    Bu = operator_matrix(fu, lam, grid, flip_derivative_sign=flip_derivative_sign).toarray()
    n = grid.n_nodes
    P = time_reversal(grid).toarray()
    full = np.kron(np.array([[0.0, 1.0], [1.0, 0.0]]), P)

    def restricted(src: Constraint, dst: Constraint) -> np.ndarray:
        return full[np.ix_(_stack_select(dst, n), _stack_select(src, n))]

    Pi_rows = restricted(s_trial[0], u_test[0])
    Pi_cols = restricted(s_test[0], u_trial[0])
    return float(np.abs(Bu - Pi_rows @ Bs.T @ Pi_cols.T).max())


def minres_solve(loads, instances: Sequence[FormulationInstance]):
    """Minimize ``‖B u - f‖_{V'}`` mode by mode via the normal equations.

    Returns the minimizer as a trial field and the attained residual norm.
    """
    gs = _mode_vectors(loads, instances, "test_dim")
    sols = []
    res = 0.0
    for k, (g, inst) in enumerate(zip(gs, instances)):
        N = GramMatrix(inst.extended_gram(), label=f"normal matrix of mode {k}")
        rhs = inst.B.T @ inst.G_V.solve(g)
        try:
            u = N.solve(rhs)
        except AssemblyError as exc:
            raise np.linalg.LinAlgError(str(exc)) from exc
        sols.append(u)
        res += dual_norm(inst.B @ u - g, inst.G_V) ** 2
    spectrum = loads.spectrum if isinstance(loads, ModalField) else None
    if spectrum is None:
        lams = np.array([inst.lam for inst in instances])
        spectrum = SpatialSpectrum(lams, tuple((k + 1,) for k in range(len(lams))))
    field_ = ModalField.from_mode_vectors(spectrum, sols, instances[0].trial_constraints)
    return field_, math.sqrt(res)
