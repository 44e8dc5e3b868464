import json

import numpy as np
import pytest

from bohmion_dyn import geometry as geo
from bohmion_dyn.electronic import TwoLevelHamiltonian


@pytest.fixture(scope="module")
def grid():
    return geo.parameter_grid(48, 2)


@pytest.fixture(scope="module")
def fields(grid):
    rng = np.random.default_rng(77)
    return [geo.random_smooth_field(rng, grid) for _ in range(5)]


def test_identity_checks_pass_on_random_fields(fields):
    for f in fields:
        for rep in (geo.qgt_covariance_check(f), geo.qgt_closed_form_check(f), geo.curvature_check(f),
                    geo.qgt_uncertainty_check(f), geo.takabayasi_check(f)):
            assert rep.passed, rep.to_dict()


def test_metric_is_positive_semidefinite(fields):
    for f in fields:
        g = geo.qgt(f).metric
        assert np.min(np.linalg.eigvalsh(g)) > -1e-12


@pytest.mark.parametrize("projector", ["state", "identity"])
def test_covariance_residual_ignores_gamma_ambiguity(fields, projector):
    f = fields[0]
    c = np.random.default_rng(1).normal(size=f.grid.shape + (2,))
    if projector == "state":
        P = f.psi[..., :, None] * f.psi[..., None, :].conj()
    else:
        P = np.broadcast_to(np.eye(2), f.grid.shape + (2, 2))
    shifted = f.gamma + 1j * c[..., :, None, None] * P[..., None, :, :]
    base = geo.qgt_covariance_check(f).max_residual
    assert abs(geo.qgt_covariance_check(f, gamma=shifted).max_residual - base) < 1e-11


def test_qgt_is_gauge_invariant(fields, grid):
    f = fields[1]
    X, Y = grid.mesh()
    phase = np.exp(1j * (np.sin(X) + 2 * np.cos(Y)))
    g = geo.ParametrizedStateField(grid, f.psi * phase[..., None])
    # the product field has a wider spectrum, so spectral truncation sets the floor
    assert np.max(np.abs(g.Q - f.Q)) < 1e-9
    # the connection shifts by the phase gradient
    dA = geo.berry_connection(g) - geo.berry_connection(f)
    assert np.max(np.abs(dA[..., 0] - np.cos(X))) < 1e-9


def test_bloch_sphere_closed_form(grid):
    rep = geo.bloch_closed_form_check(np.random.default_rng(5), grid)
    assert rep.passed


@pytest.mark.parametrize("n,tol", [(16, 5e-3), (32, 5e-6), (64, 1e-12)])
def test_hedgehog_takabayasi_converges(n, tol):
    f = geo.hedgehog_field(geo.parameter_grid(n, 2))
    assert geo.takabayasi_check(f).max_residual < tol


def test_takabayasi_rejects_mixed_states(grid):
    n = np.zeros(grid.shape + (3,))
    n[..., 2] = 0.5
    with pytest.raises(ValueError, match="mixed"):
        geo.takabayasi_tensor(n, grid)


def test_unnormalised_field_rejected(grid):
    with pytest.raises(ValueError, match="normalised"):
        geo.ParametrizedStateField(grid, 2 * np.ones(grid.shape + (2,)) / np.sqrt(2))


def test_report_serialises(fields):
    rep = geo.curvature_check(fields[0])
    d = json.loads(rep.to_json())
    assert {"check_name", "max_residual", "location", "grid_meta", "pass"} <= set(d)


def test_berry_phase_quantised_and_parametrisation_free():
    h = TwoLevelHamiltonian.jahn_teller_e_epsilon(C=1.3, D=0.7)
    loop = geo.circle_loop((0.0, 0.0), 0.8, 256)
    phase = geo.berry_phase_loop(h, loop)
    assert abs(phase - np.pi) < 1e-10
    assert abs(abs(geo.berry_phase_loop(h, loop[::-1])) - np.pi) < 1e-10
    assert abs(geo.berry_phase_loop(h, loop, "upper") - np.pi) < 1e-10
    assert abs(geo.berry_phase_loop(h, geo.circle_loop((2.0, 1.0), 0.5, 256))) < 1e-10


def test_elliptic_loop_still_encloses():
    h = TwoLevelHamiltonian.jahn_teller_e_epsilon()
    t = 2 * np.pi * np.arange(400) / 400
    loop = np.stack([0.3 + 2.0 * np.cos(t), 0.5 * np.sin(t)], axis=-1)
    assert abs(geo.berry_phase_loop(h, loop) - np.pi) < 1e-10


def test_berry_phase_input_checks():
    h = TwoLevelHamiltonian.jahn_teller_e_epsilon()
    with pytest.raises(ValueError, match="64"):
        geo.berry_phase_loop(h, geo.circle_loop(points=32))
    with pytest.raises(ValueError, match="degeneracy"):
        geo.berry_phase_loop(h, geo.circle_loop((1.0, 0.0), 1.0, 128))
