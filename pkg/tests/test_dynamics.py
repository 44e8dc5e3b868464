import numpy as np
import pytest

from bohmion_dyn import _accel, dynamics
from bohmion_dyn.acceptance import ef_reference_system, spinor_from_bloch
from bohmion_dyn.dynamics import (
    EFBohmionSystem,
    EhrenfestState,
    SingleSurfaceSystem,
    ef_bohmion_energy,
    ef_effective_hamiltonian,
    electronic_flow,
    electronic_rhs,
    integrate,
    integrate_ehrenfest,
    single_surface_energy,
    single_surface_force,
    step_ef_bohmion,
    step_single_surface,
    trajectory_columns,
)
from bohmion_dyn.electronic import TwoLevelHamiltonian
from bohmion_dyn.errors import NumericalAbort
from bohmion_dyn.kernels import BohmionEnsemble, Kernel
from bohmion_dyn.numerics import Grid
from bohmion_dyn.potentials import HarmonicPotential


def _three(grid1d, gauss1d, **kw):
    ens = BohmionEnsemble([0.3, 0.3, 0.4], [[-1.0], [0.2], [1.1]], [[0.3], [-0.1], [0.0]])
    return SingleSurfaceSystem(ens, gauss1d, grid1d, **kw)


def test_single_bohmion_self_energy(grid1d):
    # hbar^2/(8m) * I_11 with I_11 = 1/alpha^2
    s = SingleSurfaceSystem(BohmionEnsemble([1.0], [[0.0]]), Kernel("gaussian", 0.5, 1), grid1d)
    assert single_surface_energy(s)["quantum_term"] == pytest.approx(0.5, rel=1e-12)


def test_free_bohmion_moves_uniformly(grid1d, gauss1d):
    s = SingleSurfaceSystem(BohmionEnsemble([1.0], [[-1.0]], [[0.5]]), gauss1d, grid1d)
    for _ in range(1000):
        s = step_single_surface(s, 1e-3)
    assert s.ensemble.positions[0, 0] == pytest.approx(-0.5, abs=1e-10)


def test_total_momentum_conserved_without_potential(grid1d, gauss1d):
    s = _three(grid1d, gauss1d)
    P0 = s.ensemble.momenta.sum()
    assert abs(single_surface_force(s).sum()) < 1e-12
    for _ in range(500):
        s = step_single_surface(s, 1e-3)
    assert abs(s.ensemble.momenta.sum() - P0) < 1e-12


def test_single_surface_energy_has_second_order_error(grid1d, gauss1d):
    drifts = []
    for dt in (2e-3, 1e-3):
        s = _three(grid1d, gauss1d, potential=HarmonicPotential(1.0, 1.0))
        E = [r[-4] for *_, r in integrate(s, dt, int(round(1.0 / dt)), 10)]
        drifts.append(np.max(np.abs(np.array(E) - E[0])))
    assert 3.0 < drifts[0] / drifts[1] < 5.0


def test_step_does_not_modify_input(grid1d, gauss1d):
    s = _three(grid1d, gauss1d)
    q = s.ensemble.positions.copy()
    step_single_surface(s, 1e-3)
    assert np.array_equal(s.ensemble.positions, q)


def test_electronic_flow_matches_rhs():
    s = ef_reference_system()
    for h in (1e-5, 1e-6):
        fd = (electronic_flow(s, h) - s.ensemble.rho) / h
        # first-order difference quotient: error ~ h
        assert np.max(np.abs(fd - electronic_rhs(s))) < 2.0 * h


def test_effective_hamiltonian_is_hermitian():
    s = ef_reference_system()
    H = ef_effective_hamiltonian(s)
    assert np.allclose(H, np.conj(np.swapaxes(H, -1, -2)))
    assert np.array_equal(ef_effective_hamiltonian(s, 1), H[1])


def test_ef_step_preserves_traces_and_spectra():
    s = ef_reference_system()
    ev0 = np.linalg.eigvalsh(s.ensemble.rho)
    tr0 = np.trace(s.ensemble.rho, axis1=1, axis2=2)
    for _ in range(300):
        s = step_ef_bohmion(s, 1e-3)
    assert np.max(np.abs(np.trace(s.ensemble.rho, axis1=1, axis2=2) - tr0)) < 1e-14
    assert np.max(np.abs(np.linalg.eigvalsh(s.ensemble.rho) - ev0)) < 1e-12


def test_ef_step_is_time_reversible():
    s0 = ef_reference_system()
    s = s0
    for dt in (1e-3, -1e-3):
        for _ in range(100):
            s = step_ef_bohmion(s, dt)
    assert np.max(np.abs(s.ensemble.rho - s0.ensemble.rho)) < 1e-13
    assert np.max(np.abs(s.ensemble.positions - s0.ensemble.positions)) < 1e-13


def test_variational_coupling_conserves_energy_better_than_printed():
    drift = {}
    for coupling in ("variational", "printed"):
        s = ef_reference_system(coupling)
        E = [r[-4] for *_, r in integrate(s, 1e-3, 3000, 100)]
        drift[coupling] = np.max(np.abs(np.array(E) - E[0])) / abs(E[0])
    assert drift["variational"] < 1e-5
    assert drift["printed"] > 10 * drift["variational"]


def test_ef_energy_is_dt_squared_accurate():
    drifts = []
    for dt in (4e-3, 2e-3):
        s = ef_reference_system()
        E = [r[-4] for *_, r in integrate(s, dt, int(round(2.0 / dt)), 5)]
        drifts.append(np.max(np.abs(np.array(E) - E[0])))
    assert 3.0 < drifts[0] / drifts[1] < 5.0


def test_quantum_off_decouples_bohmions(grid1d, gauss1d):
    base = ef_reference_system()
    s = EFBohmionSystem(base.ensemble, gauss1d, base.grid, base.hamiltonian, quantum=False)
    assert s.kappa == 0.0
    assert ef_bohmion_energy(s)["quantum_term"] == 0.0


def test_ef_system_validation(grid1d, gauss1d):
    ens = BohmionEnsemble([1.0], [[0.0]])
    h = TwoLevelHamiltonian(1.0, 1.0, (0.0,), (1.0,), 0.0)
    with pytest.raises(ValueError, match="electronic matrices"):
        EFBohmionSystem(ens, gauss1d, grid1d, h)
    ens = BohmionEnsemble.from_bloch([1.0], [[0.0]], bloch=[[0, 0, 1]])
    with pytest.raises(ValueError):
        EFBohmionSystem(ens, gauss1d, grid1d, h, coupling="other")
    with pytest.raises(ValueError):
        EFBohmionSystem(ens, gauss1d, grid1d, TwoLevelHamiltonian.jahn_teller_e_epsilon())


def test_escape_from_box_aborts_with_last_good_state(grid1d, gauss1d):
    s = SingleSurfaceSystem(BohmionEnsemble([1.0], [[0.0]], [[500.0]]), gauss1d, grid1d)
    with pytest.raises(NumericalAbort) as info:
        for _ in integrate(s, 1e-3, 100):
            pass
    good = info.value.last_good
    assert np.all(np.abs(good.ensemble.positions) <= 6.0)
    assert info.value.step == 11


def test_trajectory_columns_layout():
    cols = trajectory_columns(2, 1, True)
    assert cols[:4] == ["time", "q0_0", "p0_0", "F0_0"]
    assert cols[-4:] == ["total_energy", "kinetic", "electronic", "quantum_term"]
    assert "purity1" in cols


def test_ehrenfest_conserves_norm_and_energy():
    h = TwoLevelHamiltonian(1.0, 1.0, (0.5,), (1.0,), 0.2)
    st = EhrenfestState([1.0], [0.0], spinor_from_bloch([1.0, 0.0, 0.0]))
    rows = np.array([r for *_, r in integrate_ehrenfest(st, h, 1.0, 1.0, 1e-3, 5000, 50)])
    assert np.max(np.abs(rows[:, 3] - 1.0)) < 1e-12
    E = rows[:, -4]
    assert np.max(np.abs(E - E[0])) / abs(E[0]) < 1e-5


def test_ehrenfest_without_coupling_is_classical():
    h = TwoLevelHamiltonian(1.0, 1.0, (0.0,), (0.0,), 0.0)
    st = EhrenfestState([1.0], [0.0], [1.0, 0.0])
    *_, (k, t, state, row) = integrate_ehrenfest(st, h, 1.0, 1.0, 1e-3, 3142, 3142)
    assert state.q[0] == pytest.approx(np.cos(t), abs=1e-6)


@pytest.mark.skipif(not _accel.USE_NUMBA, reason="numba disabled")
def test_flow_kernels_agree(rng):
    b = rng.normal(size=(5, 3)) * 0.2
    h = rng.normal(size=(5, 3))
    I = rng.uniform(size=(5, 5))
    I = I + I.T
    a = b.copy()
    dynamics._electronic_flow_nb(a, h, I, 0.7, 1e-2, 1.0)
    c = dynamics._electronic_flow_np(b.copy(), h, I, 0.7, 1e-2, 1.0)
    assert np.max(np.abs(a - c)) < 1e-14
