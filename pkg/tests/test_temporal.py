import math

import numpy as np
import pytest
import scipy.integrate as si
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from stvf.spectrum import build_interval_spectrum
from stvf.temporal import (
    Constraint,
    Integrand,
    ModalField,
    build_time_grid,
    constrain,
    element_pairings,
    exact_moments,
    interpolate_nodal,
    time_reversal,
)

NONE, LEFT, RIGHT = Constraint.NONE, Constraint.LEFT, Constraint.RIGHT

grids = st.builds(build_time_grid, st.floats(0.1, 5.0), st.integers(1, 40))


def test_single_element_matrices():
    g = build_time_grid(1.0, 1)
    np.testing.assert_allclose(g.M.toarray(), [[1 / 3, 1 / 6], [1 / 6, 1 / 3]])
    np.testing.assert_allclose(g.K.toarray(), [[1, -1], [-1, 1]])
    np.testing.assert_allclose(g.D.toarray(), [[-0.5, 0.5], [-0.5, 0.5]])


def test_two_unit_elements_hand_assembly():
    g = build_time_grid(2.0, 2)
    assert g.h == 1.0
    assert g.M[0, 0] == pytest.approx(1 / 3)
    np.testing.assert_allclose(g.M.toarray(), [[1 / 3, 1 / 6, 0], [1 / 6, 2 / 3, 1 / 6], [0, 1 / 6, 1 / 3]])


@pytest.mark.parametrize("T, n", [(0.0, 2), (-1.0, 2), (math.inf, 2), (1.0, 0), (1.0, 1.5)])
def test_grid_rejects_bad_input(T, n):
    with pytest.raises(ValueError):
        build_time_grid(T, n)


def test_constrain_examples():
    g = build_time_grid(1.0, 1)
    np.testing.assert_allclose(constrain(g.K, LEFT).toarray(), [[1.0]])
    assert constrain(g.e0, LEFT).tolist() == [0.0]
    np.testing.assert_allclose(constrain(g.D, RIGHT, LEFT).toarray(), [[0.5]])
    dense = constrain(g.M.toarray(), RIGHT)
    assert not sp.issparse(dense) and dense.shape == (1, 1)


def test_interpolate_examples():
    g = build_time_grid(1.0, 2)
    np.testing.assert_allclose(interpolate_nodal(lambda t: t, g, LEFT), [0.5, 1.0])
    np.testing.assert_allclose(interpolate_nodal(lambda t: 1.0, build_time_grid(1.0, 1)), [1.0, 1.0])
    np.testing.assert_allclose(
        interpolate_nodal(lambda t: t * np.sin(np.pi * t), g, LEFT), [0.5, 0.0], atol=1e-15
    )


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_interpolate_rejects_nonfinite():
    g = build_time_grid(1.0, 2)
    with pytest.raises(FloatingPointError):
        interpolate_nodal(lambda t: 1.0 / (t - 0.5), g)
    # a singularity at a deleted node is harmless
    interpolate_nodal(lambda t: 1.0 / t, g, LEFT)


def test_time_reversal_single_element():
    np.testing.assert_array_equal(time_reversal(build_time_grid(1.0, 1)).toarray(), [[0, 1], [1, 0]])


def test_exact_moments_examples():
    g = build_time_grid(1.0, 1)
    np.testing.assert_allclose(exact_moments(Integrand("poly", coeffs=(1.0,)), g), [0.5, 0.5])
    np.testing.assert_allclose(exact_moments(Integrand("poly", coeffs=(0.0, 1.0)), g), [1 / 6, 1 / 3])
    g64 = build_time_grid(1.0, 64)
    assert exact_moments(Integrand("sin", math.pi), g64).sum() == pytest.approx(2 / math.pi, rel=1e-12)
    assert np.all(exact_moments(Integrand("zero"), g64) == 0)


def test_integrand_catalog():
    with pytest.raises(ValueError):
        Integrand("cos", 1.0)
    a = 3.0
    t = np.linspace(0, 2, 7)
    # u1 is the antiderivative of t sin(a t) vanishing at 0
    ref = [si.quad(lambda s: s * np.sin(a * s), 0, x)[0] for x in t]
    np.testing.assert_allclose(Integrand("u1", a)(t), ref, atol=1e-13)


def test_exact_moments_against_adaptive_quadrature():
    g = build_time_grid(1.3, 5)
    f = Integrand("t_sin", 7.0)
    phi = lambda i: (lambda t: np.interp(t, g.nodes, np.eye(g.n_nodes)[i]))
    ref = [si.quad(lambda t: f(t) * phi(i)(t), 0, g.T, points=g.nodes[1:-1], epsabs=1e-14)[0] for i in range(g.n_nodes)]
    # a*h is about 1.8 here, a coarse case for the default order
    np.testing.assert_allclose(exact_moments(f, g), ref, rtol=1e-7)
    np.testing.assert_allclose(exact_moments(f, g, order=12), ref, rtol=1e-12, atol=1e-14)


def test_element_pairings_partition():
    g = build_time_grid(2.0, 4)
    Dp, Ap = element_pairings(g)
    # summing element integrals recovers the global ones
    np.testing.assert_allclose(np.ones(4) @ Dp.toarray(), g.D.toarray().sum(axis=0))
    np.testing.assert_allclose(np.ones(4) @ Ap.toarray(), g.M.toarray().sum(axis=0))


@settings(max_examples=40, deadline=None)
@given(grids, st.data())
def test_trace_identity(grid, data):
    x = np.array(data.draw(st.lists(st.floats(-10, 10), min_size=grid.n_nodes, max_size=grid.n_nodes)))
    lhs = x @ ((grid.D + grid.D.T) @ x)
    assert lhs == pytest.approx(x[-1] ** 2 - x[0] ** 2, abs=1e-12 * (1 + x @ x))


@settings(max_examples=40, deadline=None)
@given(grids)
def test_mass_spd_and_stiffness_kernel(grid):
    assert np.linalg.eigvalsh(grid.M.toarray()).min() > 0
    np.testing.assert_allclose(grid.K @ np.ones(grid.n_nodes), 0, atol=1e-12 / grid.h)


@settings(max_examples=40, deadline=None)
@given(grids)
def test_time_reversal_conjugation(grid):
    P = time_reversal(grid).toarray()
    M, K, D = grid.M.toarray(), grid.K.toarray(), grid.D.toarray()
    np.testing.assert_array_equal(P @ P, np.eye(grid.n_nodes))
    np.testing.assert_allclose(P @ M @ P.T, M, atol=1e-15)
    np.testing.assert_allclose(P @ K @ P.T, K, atol=1e-12)
    np.testing.assert_allclose(P @ D @ P.T, -D, atol=1e-15)


@settings(max_examples=20, deadline=None)
@given(st.sampled_from([NONE, LEFT, RIGHT]))
def test_constraint_reversal_is_involution(c):
    assert c.reversed().reversed() is c


def test_squared_integral_converges_second_order():
    lam = 4 * math.pi**2
    f = Integrand("t_sin", math.sqrt(lam))
    exact = si.quad(lambda t: f(t) ** 2, 0, 1, limit=200, epsabs=1e-14)[0]
    errs = []
    for n in (16, 32, 64, 128):
        g = build_time_grid(1.0, n)
        errs.append(abs(interpolate_nodal(f, g) @ exact_moments(f, g) - exact))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 1.8)


def test_modal_field_shapes():
    spec = build_interval_spectrum(1.0, 2)
    with pytest.raises(ValueError):
        ModalField(spec, np.zeros((3, 1, 4)), (LEFT,))
    with pytest.raises(ValueError):
        ModalField(spec, np.zeros((2, 2, 4)), (LEFT,))
    f = ModalField.from_mode_vectors(spec, [np.arange(4.0), np.zeros(4)], (LEFT, LEFT))
    assert f.components == 2
    np.testing.assert_array_equal(f.coefficients[0], [[0, 1], [2, 3]])
    np.testing.assert_array_equal(f.mode_vector(0), np.arange(4.0))
