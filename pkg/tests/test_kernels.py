import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bohmion_dyn import _accel, kernels
from bohmion_dyn.kernels import (
    BohmionEnsemble,
    Kernel,
    bohmion_integral,
    bohmion_integral_grad,
    check_admissible,
    kernel_eval,
    kernel_grad,
    kernel_hessian,
    pair_integrals,
    smoothed_density,
)
from bohmion_dyn.numerics import Grid, quadrature


@pytest.mark.parametrize("dim,n", [(1, 256), (2, 96), (3, 40)])
def test_gaussian_kernel_is_normalised(dim, n):
    g = Grid.uniform(-5.0, 5.0, n, dim)
    k = Kernel("gaussian", 0.6, dim)
    assert quadrature(kernel_eval(k, g.points()).reshape(g.shape), g) == pytest.approx(1.0, abs=1e-12)


def test_helmholtz_kernel_normalised_and_kinked():
    g = Grid.uniform(-15.0, 15.0, 4096)
    k = Kernel("helmholtz1d", 0.5, 1)
    assert quadrature(kernel_eval(k, g.points()), g) == pytest.approx(1.0, abs=1e-5)
    assert kernel_grad(k, np.zeros((1, 1)))[0, 0] == 0.0
    with pytest.raises(ValueError):
        kernel_hessian(k, np.zeros((1, 1)))


def test_kernel_validation():
    with pytest.raises(ValueError):
        Kernel("lorentzian", 1.0)
    with pytest.raises(ValueError):
        Kernel("gaussian", -1.0)
    with pytest.raises(ValueError):
        Kernel("helmholtz1d", 1.0, 2)


def test_gradient_and_hessian_match_finite_differences(rng):
    k = Kernel("gaussian", 0.7, 2)
    r = rng.normal(size=(10, 2))
    h = 1e-6
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        fd = (kernel_eval(k, r + e) - kernel_eval(k, r - e)) / (2 * h)
        assert np.max(np.abs(kernel_grad(k, r)[:, j] - fd)) < 1e-9
        fd2 = (kernel_grad(k, r + e) - kernel_grad(k, r - e)) / (2 * h)
        assert np.max(np.abs(kernel_hessian(k, r)[:, :, j] - fd2)) < 1e-8


@pytest.mark.parametrize("alpha", [0.4, 0.5, 0.8])
def test_single_gaussian_self_integral_is_fisher_information(alpha, grid1d):
    # int |K'|^2 / K = 1 / alpha^2 for a normalised Gaussian
    k = Kernel("gaussian", alpha, 1)
    I, _ = pair_integrals([[0.3]], [1.0], k, grid1d)
    assert I[0, 0] == pytest.approx(1.0 / alpha**2, rel=1e-12)


def test_self_integral_in_two_dimensions():
    g = Grid.uniform(-6.0, 6.0, 96, 2)
    I, _ = pair_integrals([[0.2, -0.4]], [1.0], Kernel("gaussian", 0.5, 2), g)
    assert I[0, 0] == pytest.approx(2.0 / 0.25, rel=1e-10)


def test_helmholtz_self_integral():
    g = Grid.uniform(-15.0, 15.0, 4096)
    I, _ = pair_integrals([[0.0]], [1.0], Kernel("helmholtz1d", 0.5, 1), g)
    assert I[0, 0] == pytest.approx(4.0, rel=1e-3)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-2.5, 2.5), min_size=2, max_size=4), st.integers(0, 2**31 - 1))
def test_pair_matrix_symmetric_and_psd(qs, seed):
    w = np.random.default_rng(seed).dirichlet(np.ones(len(qs)))
    I, _ = pair_integrals(np.array(qs)[:, None], w, Kernel("gaussian", 0.5, 1), Grid.uniform(-8.0, 8.0, 256))
    assert np.array_equal(I, I.T)
    # I is a Gram matrix in the 1/Dbar-weighted inner product
    assert np.min(np.linalg.eigvalsh(I)) > -1e-10 * np.max(np.abs(I))


def test_quadratic_form_gradient_matches_fd(rng, grid1d, gauss1d):
    q = np.array([[-0.7], [0.4], [1.3]])
    w = np.array([0.2, 0.5, 0.3])
    C = rng.normal(size=(3, 3))
    C = C + C.T
    _, dU = pair_integrals(q, w, gauss1d, grid1d, C)
    h = 1e-5
    for a in range(3):
        qp, qm = q.copy(), q.copy()
        qp[a] += h
        qm[a] -= h
        fd = (np.sum(C * pair_integrals(qp, w, gauss1d, grid1d)[0]) - np.sum(C * pair_integrals(qm, w, gauss1d, grid1d)[0])) / (2 * h)
        assert dU[a, 0] == pytest.approx(fd, rel=1e-6, abs=1e-9)


def test_full_gradient_tensor_contracts_to_force_path(rng, grid1d, gauss1d):
    ens = BohmionEnsemble([0.3, 0.7], [[-0.5], [0.8]])
    G = bohmion_integral_grad(ens, gauss1d, grid1d)
    C = np.array([[0.4, -0.1], [-0.1, 0.9]])
    _, dU = pair_integrals(ens.positions, ens.weights, gauss1d, grid1d, C)
    assert np.allclose(np.einsum("abck,bc->ak", G, C), dU, rtol=1e-10, atol=1e-12)
    assert bohmion_integral(0, 1, ens, gauss1d, grid1d) == pytest.approx(
        pair_integrals(ens.positions, ens.weights, gauss1d, grid1d)[0][0, 1])


def test_translation_invariance_of_pair_integrals(grid1d, gauss1d):
    q = np.array([[-0.6], [0.5]])
    w = [0.4, 0.6]
    I0, _ = pair_integrals(q, w, gauss1d, grid1d)
    I1, _ = pair_integrals(q + 0.37, w, gauss1d, grid1d)
    assert np.max(np.abs(I1 - I0)) < 1e-10


def test_relative_floor_is_inert_for_admissible_ensembles(grid1d, gauss1d):
    q = np.array([[-1.5], [1.5]])
    a, _ = pair_integrals(q, [0.5, 0.5], gauss1d, grid1d, rel_floor=1e-14)
    b, _ = pair_integrals(q, [0.5, 0.5], gauss1d, grid1d, rel_floor=1e-10)
    assert np.max(np.abs(a - b)) / np.max(np.abs(a)) < 1e-6


def test_admissibility_names_the_offender(grid1d, gauss1d):
    with pytest.raises(ValueError, match="Bohmion 1"):
        check_admissible(np.array([[0.0], [6.5]]), gauss1d, grid1d)
    check_admissible(np.array([[0.0], [5.9]]), gauss1d, grid1d)


def test_ensemble_validation():
    with pytest.raises(ValueError, match="sum to 1"):
        BohmionEnsemble([0.5, 0.6], [[0.0], [1.0]])
    with pytest.raises(ValueError, match="positive"):
        BohmionEnsemble([1.5, -0.5], [[0.0], [1.0]])
    with pytest.raises(ValueError, match="trace convention"):
        BohmionEnsemble([0.5, 0.5], [[0.0], [1.0]], rho=np.array([np.eye(2) / 2] * 2), rho_trace="weight")
    ens = BohmionEnsemble.from_bloch([0.5, 0.5], [[0.0], [1.0]], bloch=[[0, 0, 1], [1, 0, 0]], rho_trace="unit")
    assert np.allclose(np.trace(ens.rho, axis1=1, axis2=2), 1.0)


def test_smoothed_density_integrates_to_one(grid1d, gauss1d):
    ens = BohmionEnsemble([0.25, 0.75], [[-1.0], [2.0]])
    assert quadrature(smoothed_density(ens, gauss1d, grid1d), grid1d) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.skipif(not _accel.USE_NUMBA, reason="numba disabled")
def test_numba_and_numpy_paths_agree(rng):
    g = Grid.uniform(-6.0, 6.0, 48, 2)
    k = Kernel("gaussian", 0.5, 2)
    Q = rng.uniform(-1.5, 1.5, size=(4, 2))
    w = rng.dirichlet(np.ones(4))
    C = np.outer(w, w)
    a = kernels._pair_integrals_nb(g.points(), Q, w, k.code, k.width, k.norm, 1e-14, g.cell_volume, C, True)
    b = kernels._pair_integrals_np(g.points(), Q, w, k, 1e-14, g.cell_volume, C, True)
    c = kernels._pair_integrals_par(g.points(), Q, w, k.code, k.width, k.norm, 1e-14, g.cell_volume, C, True)
    for x, y in ((a, b), (a, c)):
        assert np.allclose(x[0], y[0], rtol=1e-12)
        assert np.allclose(x[1], y[1], rtol=1e-11, atol=1e-14)
