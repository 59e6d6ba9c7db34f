import math

import numpy as np
import pytest
import scipy.optimize as so
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from stvf.bochner import (
    AssemblyError,
    ComponentNorm,
    GramMatrix,
    NormTerm,
    SpaceTimeNormSpec,
    assemble_gram,
    dual_norm,
    flip,
    gram_quadratic,
    riesz_apply_inverse,
    sparse_gram,
)
from stvf import formulations as fm
from stvf.formulations import FormulationId
from stvf.spectrum import SobolevWeight as W, build_interval_spectrum
from stvf.temporal import Constraint, ModalField, build_time_grid, interpolate_nodal

PI2 = math.pi**2
NONE, LEFT, RIGHT = Constraint.NONE, Constraint.LEFT, Constraint.RIGHT
ALL_TIME_IDS = [f for f in FormulationId if not f.is_poisson]


def _spd(rng, n):
    A = rng.standard_normal((n, n))
    return A @ A.T + n * np.eye(n)


def test_heat_trial_gram_single_element():
    # hand assembly: constrained D column is (1/2, 1/2), M^{-1} (1/2, 1/2) = (1, 1)
    G = assemble_gram(fm.trial_norm("heat_strong_t"), PI2, build_time_grid(1.0, 1))
    assert G.shape == (1, 1)
    assert G.matrix[0, 0] == pytest.approx(1 / PI2 + PI2 / 3, rel=1e-14)


def test_l2_h1_test_norm_is_scaled_mass():
    grid = build_time_grid(1.0, 4)
    G = assemble_gram(fm.test_norm("heat_strong_t"), PI2, grid)
    np.testing.assert_allclose(G.matrix, PI2 * grid.M.toarray(), rtol=1e-14)


@pytest.mark.parametrize("lam", [0.0, -1.0])
def test_gram_rejects_nonpositive_eigenvalue(lam):
    with pytest.raises(ValueError):
        assemble_gram(fm.trial_norm("heat_strong_t"), lam, build_time_grid(1.0, 2))


def test_indefinite_gram_reports_eigenvalue():
    # a stiffness-only norm without constraints is singular (constants)
    spec = SpaceTimeNormSpec.single(NormTerm("stiffness", W.L2))
    with pytest.raises(AssemblyError, match="lambda"):
        assemble_gram(spec, 3.0, build_time_grid(1.0, 4))


def test_unknown_time_part():
    with pytest.raises(ValueError):
        NormTerm("hessian", W.L2)


def test_time_free_gram():
    spec = SpaceTimeNormSpec.single(NormTerm("mass", W.H1_0), NormTerm("mass", W.L2))
    assert assemble_gram(spec, 4.0, None).matrix[0, 0] == 5.0
    with pytest.raises(ValueError):
        assemble_gram(SpaceTimeNormSpec.single(NormTerm("stiffness", W.L2)), 4.0, None)


def test_dual_norm_examples():
    assert dual_norm([3.0, 4.0], GramMatrix(np.eye(2))) == pytest.approx(5.0)
    assert dual_norm([2.0, 0.0], GramMatrix(4 * np.eye(2))) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        dual_norm([1.0, 2.0, 3.0], GramMatrix(np.eye(2)))


def test_riesz_examples():
    g = np.array([1.0, -2.0, 0.5])
    np.testing.assert_array_equal(riesz_apply_inverse(g, GramMatrix(np.eye(3))), g)
    rng = np.random.default_rng(3)
    G = GramMatrix(_spd(rng, 6))
    x = rng.standard_normal(6)
    np.testing.assert_allclose(riesz_apply_inverse(G @ x, G), x, rtol=1e-10)
    with pytest.raises(ValueError):
        riesz_apply_inverse(np.ones(2), G)


def test_riesz_breakdown_is_numeric_error(monkeypatch):
    G = GramMatrix(np.eye(2))
    with pytest.raises(ValueError):
        riesz_apply_inverse(np.array([np.nan, 1.0]), G)
    # a solver returning garbage must be caught by the residual check
    monkeypatch.setattr(G, "solve", lambda g: g + 1.0)
    with pytest.raises(FloatingPointError):
        riesz_apply_inverse(np.array([1.0, 1.0]), G)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_dual_norm_consistency(n, seed):
    rng = np.random.default_rng(seed)
    G = GramMatrix(_spd(rng, n))
    x = rng.standard_normal(n)
    g = G @ x
    assert dual_norm(g, G) == pytest.approx(math.sqrt(x @ G.matrix @ x), rel=1e-10)
    assert dual_norm(g, G) == pytest.approx(math.sqrt(g @ riesz_apply_inverse(g, G)), rel=1e-10)


@settings(max_examples=15, deadline=None)
@given(st.integers(2, 5), st.integers(0, 2**32 - 1))
def test_dual_norm_is_supremum(n, seed):
    rng = np.random.default_rng(seed)
    G = GramMatrix(_spd(rng, n))
    g = rng.standard_normal(n)
    target = dual_norm(g, G)
    V = rng.standard_normal((200, n))
    sampled = (V @ g) / np.sqrt(np.einsum("si,ij,sj->s", V, G.matrix, V))
    assert sampled.max() <= target * (1 + 1e-12)
    res = so.minimize(lambda v: -(g @ v) / math.sqrt(v @ G.matrix @ v), V[np.argmax(sampled)], method="BFGS", options={"gtol": 1e-10})
    assert -res.fun == pytest.approx(target, rel=1e-6)


@pytest.mark.parametrize("fid", ALL_TIME_IDS)
@pytest.mark.parametrize("lam", [PI2, 25 * PI2])
def test_all_catalog_grams_spd(fid, lam):
    grid = build_time_grid(1.0, 16)
    for spec in (fm.trial_norm(fid), fm.test_norm(fid)):
        G = assemble_gram(spec, lam, grid)
        np.testing.assert_array_equal(G.matrix, G.matrix.T)
        assert np.all(np.diag(G.factor) > 0)


@pytest.mark.parametrize("fid", ALL_TIME_IDS)
def test_matrix_free_quadratic_matches_dense(fid):
    grid = build_time_grid(1.0, 12)
    rng = np.random.default_rng(0)
    for spec in (fm.trial_norm(fid), fm.test_norm(fid)):
        G = assemble_gram(spec, 4 * PI2, grid)
        x = rng.standard_normal(G.shape[0])
        assert gram_quadratic(spec, 4 * PI2, grid, x) == pytest.approx(x @ G.matrix @ x, rel=1e-12)
        if all(t.time_part != "derivative_dual" for c in spec.components for t in c.terms):
            np.testing.assert_allclose(sparse_gram(spec, 4 * PI2, grid).toarray(), G.matrix, rtol=1e-13)
        else:
            with pytest.raises(ValueError):
                sparse_gram(spec, 4 * PI2, grid)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 30), st.sampled_from([NONE, LEFT, RIGHT]), st.sampled_from([NONE, LEFT, RIGHT]), st.integers(0, 2**32 - 1))
def test_derivative_dual_projection_bound(n_t, con, pairing, seed):
    grid = build_time_grid(1.0, n_t)
    x = np.random.default_rng(seed).standard_normal(grid.ndof(con))
    spec = SpaceTimeNormSpec((ComponentNorm((NormTerm("derivative_dual", W.L2, pairing),), con),))
    q = gram_quadratic(spec, 1.0, grid, x)
    full = grid.K.toarray()[np.ix_(con.keep(grid.n_nodes), con.keep(grid.n_nodes))]
    assert -1e-12 <= q <= x @ full @ x * (1 + 1e-12) + 1e-12


@pytest.mark.parametrize("pairing, order", [(NONE, 1.9), (RIGHT, 0.9)])
def test_derivative_dual_converges_to_stiffness_for_smooth_data(pairing, order):
    # a terminal constraint on the pairing space costs a boundary layer: O(h) instead of O(h^2)
    spec = SpaceTimeNormSpec((ComponentNorm((NormTerm("derivative_dual", W.L2, pairing),), LEFT),))
    gaps = []
    for n in (32, 64, 128, 256):
        grid = build_time_grid(1.0, n)
        x = interpolate_nodal(lambda t: np.sin(3 * t), grid, LEFT)
        K = grid.K.toarray()[1:, 1:]
        gaps.append(1 - gram_quadratic(spec, 1.0, grid, x) / (x @ K @ x))
    gaps = np.array(gaps)
    assert np.all(gaps > 0)
    assert np.all(np.log2(gaps[:-1] / gaps[1:]) > order)


def test_flip_examples():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    np.testing.assert_array_equal(flip(x), [3.0, 4.0, 1.0, 2.0])
    np.testing.assert_array_equal(flip(flip(x)), x)
    with pytest.raises(ValueError):
        flip(np.ones(3))
    with pytest.raises(ValueError):
        flip(fm.test_norm("heat_strong_t"))
    spec = build_interval_spectrum(1.0, 2)
    field = ModalField(spec, np.arange(12.0).reshape(2, 2, 3), (LEFT, RIGHT))
    ff = flip(field)
    assert ff.constraints == (RIGHT, LEFT)
    np.testing.assert_array_equal(ff.coefficients[:, 0], field.coefficients[:, 1])
    with pytest.raises(ValueError):
        flip(ModalField(spec, np.zeros((2, 1, 3)), (LEFT,)))


@settings(max_examples=30, deadline=None)
@given(
    st.sampled_from(["wave_strong_t", "wave_ultraweak_t"]),
    st.sampled_from(["trial", "test"]),
    st.integers(1, 12),
    st.floats(1.0, 400.0),
    st.integers(0, 2**32 - 1),
)
def test_flip_is_isometry_between_flipped_norms(fid, side, n_t, lam, seed):
    spec = fm.trial_norm(fid) if side == "trial" else fm.test_norm(fid)
    if len(set(spec.constraints)) != 1:
        return
    grid = build_time_grid(1.0, n_t)
    G = assemble_gram(spec, lam, grid)
    Gf = assemble_gram(flip(spec), lam, grid)
    x = np.random.default_rng(seed).standard_normal(G.shape[0])
    assert flip(x) @ Gf.matrix @ flip(x) == pytest.approx(x @ G.matrix @ x, rel=1e-12)
    np.testing.assert_allclose(flip(G).matrix, Gf.matrix, rtol=1e-14)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, st.sampled_from([2, 4, 6]), elements=st.floats(-1e6, 1e6)))
def test_flip_involution(x):
    np.testing.assert_array_equal(flip(flip(x)), x)
