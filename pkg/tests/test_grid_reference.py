import numpy as np
import pytest

from bohmion_dyn import grid_reference as gr
from bohmion_dyn.acceptance import cold_fluid_fields, ef_reference_wavefunction, halving_ratio, vibronic_reference_state
from bohmion_dyn.electronic import TwoLevelHamiltonian
from bohmion_dyn.numerics import Grid


@pytest.fixture
def box():
    return Grid.uniform(-16.0, 16.0, 256)


def test_gaussian_packet_moments(box):
    psi = gr.gaussian_packet(box, 1.5, 0.8, 0.4)
    assert gr.norm(psi, box) == pytest.approx(1.0, abs=1e-14)
    assert gr.position_mean(psi, box) == pytest.approx(1.5, abs=1e-12)
    # <T> = p^2/2 + 1/(4 width^2)
    assert gr.energy_1d(psi, 0.0, box) == pytest.approx(0.08 + 1 / (4 * 0.64), rel=1e-12)


def test_free_packet_spreads_as_predicted(box):
    psi = gr.gaussian_packet(box, 0.0, 1.0)
    out = gr.split_step_1d(psi, 0.0, box, 1e-2, 200)
    x = box.axis(0)
    var = gr.quadrature(x**2 * np.abs(out) ** 2, box)
    # sigma_x^2(t) = (1 + t^2)/2 for unit width, m = hbar = 1
    assert var == pytest.approx(0.5 * (1 + 2.0**2), rel=1e-10)


def test_harmonic_ground_state_is_stationary(box):
    x = box.axis(0)
    psi = gr.gaussian_packet(box, 0.0, 1.0)
    out = gr.split_step_1d(psi, 0.5 * x**2, box, 1e-3, 1000)
    overlap = abs(gr.quadrature(np.conj(psi) * out, box))
    assert overlap == pytest.approx(1.0, abs=1e-12)
    assert gr.energy_1d(out, 0.5 * x**2, box) == pytest.approx(0.5, abs=1e-12)


def test_energy_error_of_strang_splitting_is_second_order(box):
    x = box.axis(0)
    V = 0.5 * x**2
    psi = gr.gaussian_packet(box, 1.0, 1.0)
    err = []
    for dt in (1e-3, 5e-4):
        E0 = gr.energy_1d(psi, V, box)
        out = psi
        worst = 0.0
        for _ in range(10):
            out = gr.split_step_1d(out, V, box, dt, int(round(0.3 / dt)))
            worst = max(worst, abs(gr.energy_1d(out, V, box) - E0))
        err.append(worst)
    assert 3.5 < err[0] / err[1] < 4.5


def test_vibronic_reduces_to_uncoupled_surfaces(box):
    h = TwoLevelHamiltonian(1.0, 1.0, (0.0,), (0.0,), 0.0)
    Psi = vibronic_reference_state(box)
    out = gr.split_step_vibronic(Psi, h, box, 1e-3, 300)
    ref = gr.split_step_1d(Psi[:, 0], 0.5 * box.axis(0) ** 2, box, 1e-3, 300)
    assert np.max(np.abs(out[:, 0] - ref)) < 1e-13


def test_vibronic_potential_only_matches_matrix_exponential(box):
    h = TwoLevelHamiltonian(1.0, 1.0, (0.5,), (1.0,), 0.2)
    Psi = vibronic_reference_state(box)
    out = gr.split_step_vibronic(Psi, h, box, 1e-2, 10, kinetic=False)
    import scipy.linalg

    H = h.matrix(box.axis(0)[:, None])
    for j in (10, 128, 200):
        assert np.allclose(out[j], scipy.linalg.expm(-0.1j * H[j]) @ Psi[j], atol=1e-13)


def test_vibronic_shape_is_checked(box):
    h = TwoLevelHamiltonian(1.0, 1.0, (0.5,), (1.0,), 0.2)
    with pytest.raises(ValueError):
        gr.split_step_vibronic(np.zeros((256, 3)), h, box, 1e-3, 1)


def test_nan_input_is_rejected(box):
    psi = gr.gaussian_packet(box)
    psi[5] = np.nan
    with pytest.raises(FloatingPointError):
        gr.split_step_1d(psi, 0.0, box, 1e-3, 1)


def test_madelung_fields_of_plane_wave_packet(box):
    psi = gr.gaussian_packet(box, 0.0, 1.3, 0.7)
    f = gr.madelung_extract(psi, box)
    assert np.allclose(f.valid("u"), 0.7, atol=1e-9)
    assert np.allclose(f.D, np.abs(psi) ** 2)
    assert np.allclose(gr.madelung_synthesis(f.D, np.angle(psi)), psi)


def test_madelung_masks_low_density(box):
    psi = gr.gaussian_packet(box, 0.0, 0.5)
    f = gr.madelung_extract(psi, box)
    assert not f.mask.all()
    assert np.all(f.u[~f.mask] == 0.0)


def test_ef_extraction_invariants(box):
    h, Psi = ef_reference_wavefunction(box, t=1.0)
    f = gr.ef_extract(Psi, h, box)
    assert f.pnc_residual() < 1e-12
    assert f.reconstruction_residual(Psi) < 1e-10
    # the QGT of psi_e is non-negative
    assert np.min(f.Q[f.mask]) > -1e-12


def test_constant_spinor_has_flat_connection(box):
    h = TwoLevelHamiltonian(1.0, 1.0, (0.5,), (1.0,), 0.0)
    Psi = vibronic_reference_state(box, 0.0, (0.6, 0.0, 0.8))
    f = gr.ef_extract(Psi, h, box)
    assert np.max(np.abs(f.A[f.mask])) < 1e-9
    assert np.max(np.abs(f.Q[f.mask])) < 1e-9


def test_cold_fluid_refinement_converges():
    res = []
    for n in (128, 256, 512):
        grid, D, u, V = cold_fluid_fields(n)
        res.append(gr.cold_fluid_check(D, u, grid, V=V)["current_residual"])
    assert halving_ratio(res) <= 1.0
    assert res[-1] < 1e-10


def test_cold_fluid_matrix_is_hermitian():
    grid, D, u, _ = cold_fluid_fields(128)
    rho = gr.cold_fluid_matrix(D, u, grid)
    assert np.allclose(rho, rho.conj().T, atol=1e-15)


def test_cold_fluid_rejects_coarse_grid():
    grid, D, u, _ = cold_fluid_fields(32)
    with pytest.raises(ValueError, match="64"):
        gr.cold_fluid_check(D, u, grid)


def test_fourier_interpolation_is_exact_for_band_limited_data(box):
    x = box.axis(0)
    L = box.lengths[0]
    f = np.sin(2 * np.pi * 3 * x / L)
    t = np.linspace(-12, 12, 17)
    assert np.allclose(gr.fourier_interpolate(f, box, t), np.sin(2 * np.pi * 3 * t / L), atol=1e-12)


def test_two_dimensional_grid_rejected():
    g = Grid.uniform(-4.0, 4.0, 16, 2)
    with pytest.raises(ValueError, match="one-dimensional"):
        gr.madelung_extract(np.ones(g.shape), g)
