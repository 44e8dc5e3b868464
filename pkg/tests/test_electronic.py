import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bohmion_dyn.electronic import (
    TwoLevelHamiltonian,
    bloch_from_rho,
    bloch_from_spinor,
    bo_surfaces,
    rho_from_bloch,
    spin_boson_grad,
    spin_boson_h,
    spin_vector,
)

coord = st.floats(-3, 3, allow_nan=False)


def test_spin_boson_matrix_entries():
    h = TwoLevelHamiltonian(2.0, 0.5, (0.3,), (0.8,), 0.1)
    r = np.array([[1.5]])
    H = h.matrix(r)[0]
    a = 0.5 * 2.0 * 0.25 * 1.5**2
    assert H[0, 0] == pytest.approx(a + 0.5 * 0.8 * 1.5)
    assert H[1, 1] == pytest.approx(a - 0.5 * 0.8 * 1.5)
    assert H[0, 1] == pytest.approx(0.5 * (0.3 * 1.5 + 0.1))
    a2, b2 = spin_boson_h(h, r)
    assert a2[0] == pytest.approx(a)
    assert b2[0, 1] == 0.0


def test_dimension_mismatch_rejected():
    with pytest.raises(ValueError):
        TwoLevelHamiltonian(1.0, 1.0, (1.0, 0.0), (1.0,), 0.0)


@settings(max_examples=40, deadline=None)
@given(coord, coord)
def test_bo_surfaces_diagonalise(x, y):
    h = TwoLevelHamiltonian.jahn_teller_e_epsilon(C=1.0, D=0.6)
    r = np.array([x, y])
    bo = bo_surfaces(h, r)
    H = h.matrix(r)
    assert np.allclose(H @ bo.v_lower, bo.lower * bo.v_lower, atol=1e-12)
    assert np.allclose(H @ bo.v_upper, bo.upper * bo.v_upper, atol=1e-12)
    assert abs(np.vdot(bo.v_lower, bo.v_upper)) < 1e-12
    assert bo.upper - bo.lower == pytest.approx(2 * np.linalg.norm(h.vector(r)), abs=1e-12)


def test_conical_intersection_is_flagged():
    h = TwoLevelHamiltonian.jahn_teller_e_epsilon()
    bo = bo_surfaces(h, np.array([[0.0, 0.0], [0.5, 0.0]]), degeneracy_tol=1e-12)
    assert bo.degenerate.tolist() == [True, False]
    assert bo.lower[0] == bo.upper[0] == 0.0


def test_gradients_match_finite_differences(rng):
    h = TwoLevelHamiltonian(1.3, 0.8, (0.4, -0.2), (1.0, 0.5), 0.3)
    r = rng.normal(size=(5, 2))
    ga, gb = spin_boson_grad(h, r)
    eps = 1e-6
    for j in range(2):
        e = np.zeros(2)
        e[j] = eps
        assert np.allclose((h.scalar(r + e) - h.scalar(r - e)) / (2 * eps), ga[:, j], atol=1e-8)
        assert np.allclose((h.vector(r + e) - h.vector(r - e)) / (2 * eps), gb[:, :, j], atol=1e-8)
    G = h.matrix_grad(r)
    assert G.shape == (5, 2, 2, 2)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 1, allow_nan=False), st.floats(0, np.pi), st.floats(-np.pi, np.pi), st.floats(0.1, 2))
def test_bloch_rho_roundtrip(length, theta, phi, trace):
    n = length * np.array([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)])
    rho = rho_from_bloch(n, trace)
    assert np.trace(rho).real == pytest.approx(trace)
    assert np.allclose(bloch_from_rho(rho), n, atol=1e-13)


def test_spinor_bloch_vector_is_unit(rng):
    psi = rng.normal(size=(10, 2)) + 1j * rng.normal(size=(10, 2))
    psi /= np.linalg.norm(psi, axis=-1, keepdims=True)
    n = bloch_from_spinor(psi)
    assert np.allclose(np.linalg.norm(n, axis=-1), 1.0)
    assert np.allclose(spin_vector(n, 2.0), n)


def test_bloch_from_rho_rejects_zero_trace():
    with pytest.raises(ValueError):
        bloch_from_rho(np.zeros((2, 2)))
