"""Acceptance scenarios 1-10 as plain functions.

Each ``criterion_N`` runs one fixed, seeded scenario and returns a
:class:`CriterionResult` with named measurements compared against fixed
tolerances. The verification suite and the acceptance tests both call these;
criterion 11 (determinism of the verification artifacts) is checked by
running the suite twice and lives in the tests.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import geometry as geo
from .dynamics import (
    EFBohmionSystem,
    SingleSurfaceSystem,
    _ef_force,
    _sample_row,
    _single_step,
    integrate,
    single_surface_energy,
    single_surface_force,
    single_surface_potential,
    trajectory_columns,
)
from .electronic import TwoLevelHamiltonian, rho_from_bloch
from .grid_reference import (
    cold_fluid_check,
    continuity_residual,
    ef_extract,
    ef_gauge_transform,
    energy_1d,
    energy_vibronic,
    gaussian_packet,
    madelung_extract,
    norm,
    position_mean,
    split_step_1d,
    split_step_vibronic,
)
from .kernels import BohmionEnsemble, Kernel, pair_integrals
from .numerics import Grid, quadrature
from .potentials import HarmonicPotential

# cold-fluid refinement: below this the residual sits at rounding level and
# "halving" is not expected any more
ROUNDOFF_FLOOR = 1e-12


# tolerance per measurement, keyed "c<criterion>.<measurement>"; a measurement
# passes when value < tolerance, or value <= tolerance for the keys in INCLUSIVE
TOLERANCES = {
    "c1.abs_phase_minus_pi": 1e-3,
    "c1.abs_phase_outside": 1e-3,
    "c2.energy_rel_drift": 1e-5,
    "c2.trace_drift": 1e-12,
    "c2.purity_drift": 1e-10,
    "c3.quantum_force_norm": 1e-8,
    "c3.I11_translation_residual": 1e-10,
    "c4.max_abs_q_minus_cos": 1e-4,
    "c5.single_surface_rel_error": 1e-6,
    "c5.ef_bohmion_rel_error": 1e-6,
    "c6.norm_drift_1d": 1e-12,
    "c6.norm_drift_vibronic": 1e-12,
    "c6.energy_rel_drift_1d": 1e-8,
    "c6.energy_rel_drift_vibronic": 1e-8,
    "c6.coherent_state_max_error": 1e-4,
    "c7.quantum_potential_error": 1e-8,
    "c7.continuity_rel_residual": 1e-5,
    "c8.diag_residual_n512": 1e-6,
    "c8.current_residual_n512": 1e-6,
    "c8.energy_residual_n512": 1e-6,
    "c8.diag_residual_halving_ratio": 1.0,
    "c8.current_residual_halving_ratio": 1.0,
    "c9.covariance_residual": 1e-10,
    "c9.curvature_two_formulas": 1e-8,
    "c9.uncertainty_violation": 1e-12,
    "c9.bloch_closed_form": 1e-8,
    "c9.takabayasi_residual": 1e-7,
    "c10.pnc_residual": 1e-12,
    "c10.reconstruction_residual": 1e-10,
    "c10.epsilon_gauge_residual": 1e-8,
    "c10.connection_shift_residual": 1e-8,
}

INCLUSIVE = {"c8.diag_residual_halving_ratio", "c8.current_residual_halving_ratio", "c9.uncertainty_violation"}


@dataclass
class Measurement:
    name: str
    value: float
    tolerance: float
    passed: bool
    deterministic: bool = True


@dataclass
class CriterionResult:
    number: int
    title: str
    measurements: list = field(default_factory=list)
    runtime: float = 0.0
    runtime_limit: Optional[float] = None
    artifacts: dict = field(default_factory=dict)  # name -> (header, rows)
    info: dict = field(default_factory=dict)

    def add(self, name, value):
        key = f"c{self.number}.{name}"
        tol = TOLERANCES[key]
        value = float(value)
        ok = np.isfinite(value) and (value <= tol if key in INCLUSIVE else value < tol)
        self.measurements.append(Measurement(name, value, float(tol), bool(ok)))

    @property
    def runtime_ok(self) -> bool:
        return self.runtime_limit is None or self.runtime < self.runtime_limit

    @property
    def passed(self) -> bool:
        return all(m.passed for m in self.measurements) and self.runtime_ok

    def line(self) -> str:
        parts = [f"{m.name}={m.value:.3e}<{m.tolerance:.0e}" for m in self.measurements]
        status = "PASS" if self.passed else "FAIL"
        lim = f"<{self.runtime_limit:g}s" if self.runtime_limit is not None else ""
        return f"[{status}] criterion {self.number}: {self.title} | {'; '.join(parts)} | runtime {self.runtime:.2f}s{lim}"


def _timed(number, title, limit):
    def deco(fn: Callable[[CriterionResult], None]):
        def wrapper(**kw) -> CriterionResult:
            res = CriterionResult(number, title, runtime_limit=limit)
            t0 = time.perf_counter()
            fn(res, **kw)
            res.runtime = time.perf_counter() - t0
            return res

        wrapper.__name__ = fn.__name__
        wrapper.__doc__ = fn.__doc__
        wrapper.number = number
        wrapper.title = title
        wrapper.runtime_limit = limit
        return wrapper

    return deco


def _drift(x):
    x = np.asarray(x, dtype=float)
    return float(np.max(np.abs(x - x[0])))


def _rel_drift(x):
    x = np.asarray(x, dtype=float)
    return _drift(x) / abs(x[0])


# -- 1 -------------------------------------------------------------------------


@_timed(1, "Berry phase around the E x epsilon conical intersection", 1.0)
def criterion_1(res: CriterionResult):
    h = TwoLevelHamiltonian.jahn_teller_e_epsilon(C=1.0, D=1.0)
    enclosing = geo.berry_phase_loop(h, geo.circle_loop((0.0, 0.0), 1.0, 512), "lower")
    outside = geo.berry_phase_loop(h, geo.circle_loop((3.0, 0.0), 1.0, 512), "lower")
    res.info.update(phase_enclosing=enclosing, phase_outside=outside)
    res.add("abs_phase_minus_pi", abs(enclosing - np.pi))
    res.add("abs_phase_outside", abs(outside))


# -- 2 -------------------------------------------------------------------------


def ef_reference_system(coupling: str = "variational") -> EFBohmionSystem:
    """N = 2 spin-boson Bohmions (M = omega = D = 1, C = E = 0), alpha = 0.5, n = 256."""
    grid = Grid.uniform(-8.0, 8.0, 256)
    kernel = Kernel("gaussian", 0.5, 1)
    h = TwoLevelHamiltonian(1.0, 1.0, (0.0,), (1.0,), 0.0)
    ens = BohmionEnsemble.from_bloch(
        [0.5, 0.5], [[-1.0], [1.0]], [[0.0], [0.0]], [[0.8, 0.0, 0.3], [0.0, 0.6, -0.5]]
    )
    return EFBohmionSystem(ens, kernel, grid, h, coupling=coupling)


@_timed(2, "EF-Bohmion conservation (N=2 spin-boson, 1e5 steps)", 60.0)
def criterion_2(res: CriterionResult, steps: int = 100_000, coupling: str = "variational"):
    system = ef_reference_system(coupling)
    N = system.ensemble.count
    cols = trajectory_columns(N, 1, True)
    iE = cols.index("total_energy")
    itr = [cols.index(f"tr{a}") for a in range(N)]
    ipu = [cols.index(f"purity{a}") for a in range(N)]
    samples = []
    for n, t, _, row in integrate(system, 1e-3, steps, 100):
        samples.append(row)
    arr = np.array(samples)
    res.add("energy_rel_drift", _rel_drift(arr[:, iE]))
    res.add("trace_drift", max(_drift(arr[:, i]) for i in itr))
    res.add("purity_drift", max(_drift(arr[:, i]) for i in ipu))
    res.artifacts["ef_bohmion_trajectory"] = (cols, samples[::10])


# -- 3 -------------------------------------------------------------------------


@_timed(3, "single-Bohmion quantum-force nullity", 1.0)
def criterion_3(res: CriterionResult, seed: int = 3, trials: int = 10):
    rng = np.random.default_rng(seed)
    grid = Grid.uniform(-8.0, 8.0, 256)
    kernel = Kernel("gaussian", 0.5, 1)
    fmax = 0.0
    tmax = 0.0
    for _ in range(trials):
        q = rng.uniform(-2.0, 2.0, size=(1, 1))
        system = SingleSurfaceSystem(BohmionEnsemble([1.0], q), kernel, grid)
        fmax = max(fmax, float(np.linalg.norm(single_surface_force(system, quantum_only=True))))
        I0, _ = pair_integrals(q, [1.0], kernel, grid)
        I1, _ = pair_integrals(q + rng.uniform(-1.0, 1.0), [1.0], kernel, grid)
        tmax = max(tmax, abs(I1[0, 0] - I0[0, 0]))
    res.add("quantum_force_norm", fmax)
    res.add("I11_translation_residual", tmax)


# -- 4 -------------------------------------------------------------------------


@_timed(4, "classical limit: harmonic Bohmion vs cos(t)", 5.0)
def criterion_4(res: CriterionResult):
    grid = Grid.uniform(-8.0, 8.0, 256)
    system = SingleSurfaceSystem(
        BohmionEnsemble([1.0], [[1.0]], [[0.0]]), Kernel("gaussian", 0.5, 1), grid,
        HarmonicPotential(1.0, 1.0), quantum=False,
    )
    dt = 1e-3
    steps = int(round(10 * 2 * np.pi / dt))
    # step directly so the error is checked at every step without the
    # per-sample energy bookkeeping
    err = 0.0
    q = np.empty(steps + 1)
    q[0] = system.ensemble.positions[0, 0]
    s = system
    F = single_surface_force(s)
    rows = [_sample_row(0.0, s, F, single_surface_energy(s), False)]
    for n in range(1, steps + 1):
        s, F = _single_step(s, dt, F)
        q[n] = s.ensemble.positions[0, 0]
        if n % 1000 == 0:
            rows.append(_sample_row(n * dt, s, F, single_surface_energy(s), False))
    err = float(np.max(np.abs(q - np.cos(dt * np.arange(steps + 1)))))
    cols = trajectory_columns(1, 1, False)
    res.add("max_abs_q_minus_cos", err)
    res.artifacts["classical_limit_trajectory"] = (cols, rows)


# -- 5 -------------------------------------------------------------------------


def _fd_grad(fun, q, h=1e-5):
    g = np.zeros_like(q)
    for idx in np.ndindex(q.shape):
        qp = q.copy()
        qm = q.copy()
        qp[idx] += h
        qm[idx] -= h
        g[idx] = (fun(qp) - fun(qm)) / (2 * h)
    return g


def _random_rho(rng, weights):
    n = rng.normal(size=(len(weights), 3))
    n *= (rng.uniform(0.2, 1.0, size=len(weights)) / np.linalg.norm(n, axis=1))[:, None]
    return rho_from_bloch(n, weights)


@_timed(5, "analytic forces vs finite differences of the energy", 30.0)
def criterion_5(res: CriterionResult, seed: int = 5, configs: int = 20):
    rng = np.random.default_rng(seed)
    grid = Grid.uniform(-8.0, 8.0, 256)
    kernel = Kernel("gaussian", 0.5, 1)
    worst_ss = 0.0
    worst_ef = 0.0
    for _ in range(configs):
        N = int(rng.integers(2, 4))
        w = rng.dirichlet(np.full(N, 2.0))
        q = rng.uniform(-2.0, 2.0, size=(N, 1))
        ss = SingleSurfaceSystem(BohmionEnsemble(w, q), kernel, grid,
                                 HarmonicPotential(1.0, rng.uniform(0.5, 1.5)))
        F = single_surface_force(ss)
        Ffd = -_fd_grad(lambda x: single_surface_potential(ss, x)["total"], q)
        worst_ss = max(worst_ss, float(np.linalg.norm(F - Ffd) / np.linalg.norm(F)))

        h = TwoLevelHamiltonian(1.0, rng.uniform(0.5, 1.5), (rng.normal(),), (rng.normal(),), rng.normal())
        ens = BohmionEnsemble(w, q, rho=_random_rho(rng, w))
        ef = EFBohmionSystem(ens, kernel, grid, h)
        rho = ens.rho

        def U(x):
            e = ef.quantum_coefficients(rho)
            I, _ = pair_integrals(x, w, kernel, grid)
            Hm = h.matrix(x)
            return float(np.einsum("aij,aji->", rho, Hm).real + np.sum(e * I))

        F = _ef_force(ef, q, rho)[0]
        Ffd = -_fd_grad(U, q)
        worst_ef = max(worst_ef, float(np.linalg.norm(F - Ffd) / np.linalg.norm(F)))
    res.add("single_surface_rel_error", worst_ss)
    res.add("ef_bohmion_rel_error", worst_ef)


# -- 6 -------------------------------------------------------------------------


GRID_ENERGY_DT = 1e-4


def spinor_from_bloch(n) -> np.ndarray:
    n = np.asarray(n, dtype=float)
    n = n / np.linalg.norm(n)
    theta = np.arccos(np.clip(n[2], -1.0, 1.0))
    phi = np.arctan2(n[1], n[0])
    return np.array([np.cos(theta / 2), np.exp(1j * phi) * np.sin(theta / 2)])


def vibronic_reference_state(grid: Grid, center=1.0, bloch=(1.0, 0.0, 0.0)):
    return gaussian_packet(grid, center, 1.0)[:, None] * spinor_from_bloch(bloch)[None, :]


def _audit_1d(psi, V, grid, dt, steps, chunk):
    E = [energy_1d(psi, V, grid)]
    nrm = [norm(psi, grid)]
    for _ in range(steps // chunk):
        psi = split_step_1d(psi, V, grid, dt, chunk)
        E.append(energy_1d(psi, V, grid))
        nrm.append(norm(psi, grid))
    return psi, np.array(E), np.array(nrm)


def _audit_vibronic(Psi, h, grid, dt, steps, chunk):
    E = [energy_vibronic(Psi, h, grid)]
    nrm = [norm(Psi, grid)]
    for _ in range(steps // chunk):
        Psi = split_step_vibronic(Psi, h, grid, dt, chunk)
        E.append(energy_vibronic(Psi, h, grid))
        nrm.append(norm(Psi, grid))
    return Psi, np.array(E), np.array(nrm)


@_timed(6, "grid solvers: norm, energy and coherent-state tracking", 30.0)
def criterion_6(res: CriterionResult, energy_dt: float = GRID_ENERGY_DT):
    grid = Grid.uniform(-16.0, 16.0, 256)
    x = grid.axis(0)
    V = 0.5 * x**2
    h = TwoLevelHamiltonian(1.0, 1.0, (0.5,), (1.0,), 0.0)
    steps = 10_000
    _, E1, N1 = _audit_1d(gaussian_packet(grid, 1.0, 1.0), V, grid, energy_dt, steps, 100)
    _, E2, N2 = _audit_vibronic(vibronic_reference_state(grid), h, grid, energy_dt, steps, 100)
    res.add("norm_drift_1d", _drift(N1))
    res.add("norm_drift_vibronic", _drift(N2))
    res.add("energy_rel_drift_1d", _rel_drift(E1))
    res.add("energy_rel_drift_vibronic", _rel_drift(E2))
    res.info["energy_dt"] = energy_dt

    dt = 1e-3
    total = int(round(2 * 2 * np.pi / dt))
    psi = gaussian_packet(grid, 1.0, 1.0)
    err = abs(position_mean(psi, grid) - 1.0)
    rows = [[0.0, position_mean(psi, grid)]]
    chunk = 50
    done = 0
    while done < total:
        k = min(chunk, total - done)
        psi = split_step_1d(psi, V, grid, dt, k)
        done += k
        xm = position_mean(psi, grid)
        err = max(err, abs(xm - np.cos(done * dt)))
        rows.append([done * dt, xm])
    res.add("coherent_state_max_error", err)
    res.artifacts["coherent_state_mean"] = (["time", "x_mean"], rows)


# -- 7 -------------------------------------------------------------------------


@_timed(7, "Madelung extraction: quantum potential and continuity", 5.0)
def criterion_7(res: CriterionResult):
    grid = Grid.uniform(-16.0, 16.0, 256)
    x = grid.axis(0)
    m = hbar = 1.0
    sigma = 1.3
    psi = gaussian_packet(grid, 0.0, sigma, 0.7)  # D ~ exp(-x^2/sigma^2)
    f = madelung_extract(psi, grid, m, hbar)
    exact = hbar**2 / (2 * m * sigma**2) - hbar**2 * x**2 / (2 * m * sigma**4)
    res.add("quantum_potential_error", np.max(np.abs(f.V_Q - exact)[f.mask]))

    V = 0.5 * x**2
    dt = 1e-3
    a = split_step_1d(gaussian_packet(grid, 1.0, 0.8, 0.3), V, grid, dt, 500)
    b = split_step_1d(a, V, grid, dt, 1)
    c = split_step_1d(b, V, grid, dt, 1)
    res.add("continuity_rel_residual", continuity_residual(a, b, c, dt, grid, m, hbar))


# -- 8 -------------------------------------------------------------------------


def cold_fluid_fields(n: int, L: float = 40.0, sigma: float = 1.0, slope: float = 0.5, offset: float = 0.0):
    grid = Grid.uniform(-L / 2, L / 2, n)
    x = grid.axis(0)
    D = np.exp(-(x**2) / sigma**2) / (np.sqrt(np.pi) * sigma)
    return grid, D, slope * x + offset, 0.5 * x**2


def halving_ratio(seq, floor=ROUNDOFF_FLOOR) -> float:
    """Worst ``r(2n) / max(r(n)/2, floor)`` over consecutive refinements.

    At most 1 means every doubling at least halved the residual, or the
    residual already sits at the rounding floor.
    """
    return max(b / max(a / 2, floor) for a, b in zip(seq, seq[1:]))


@_timed(8, "cold-fluid closure: density, current and energy", 10.0)
def criterion_8(res: CriterionResult):
    reports = {}
    for n in (128, 256, 512, 1024):
        grid, D, u, V = cold_fluid_fields(n)
        reports[n] = cold_fluid_check(D, u, grid, 1.0, 1.0, V)
    r = reports[512]
    res.add("diag_residual_n512", r["diag_residual"])
    res.add("current_residual_n512", r["current_residual"])
    res.add("energy_residual_n512", r["energy_residual"])
    for key in ("diag_residual", "current_residual"):
        seq = [reports[n][key] for n in sorted(reports)]
        res.add(f"{key}_halving_ratio", halving_ratio(seq))
    res.artifacts["cold_fluid_refinement"] = (
        ["n", "diag_residual", "current_residual", "energy_residual"],
        [[n, reports[n]["diag_residual"], reports[n]["current_residual"], reports[n]["energy_residual"]]
         for n in sorted(reports)],
    )


# -- 9 -------------------------------------------------------------------------


@_timed(9, "QGT identity battery on 1000 random two-level fields", 60.0)
def criterion_9(res: CriterionResult, seed: int = 9, fields: int = 1000):
    rng = np.random.default_rng(seed)
    grid = geo.parameter_grid(64, 2)
    worst = {"covariance": 0.0, "curvature": 0.0, "uncertainty": 0.0, "bloch": 0.0, "takabayasi": 0.0}
    for _ in range(fields):
        f = geo.random_smooth_field(rng, grid)
        worst["covariance"] = max(worst["covariance"], geo.qgt_covariance_check(f).max_residual)
        worst["curvature"] = max(worst["curvature"], geo.curvature_check(f).max_residual)
        worst["uncertainty"] = max(worst["uncertainty"], geo.qgt_uncertainty_check(f).max_residual)
        worst["takabayasi"] = max(worst["takabayasi"], geo.takabayasi_check(f).max_residual)
        worst["bloch"] = max(worst["bloch"], geo.bloch_closed_form_check(rng, grid).max_residual)
    res.add("covariance_residual", worst["covariance"])
    res.add("curvature_two_formulas", worst["curvature"])
    # the uncertainty check reports the violation beyond zero; allowed slack 1e-12
    res.add("uncertainty_violation", worst["uncertainty"])
    res.add("bloch_closed_form", worst["bloch"])
    res.add("takabayasi_residual", worst["takabayasi"])


# -- 10 ------------------------------------------------------------------------


def ef_reference_wavefunction(grid: Grid, t: float = 2.0):
    """A genuinely entangled vibronic state: a packet propagated on coupled surfaces."""
    h = TwoLevelHamiltonian(1.0, 1.0, (0.7,), (1.0,), 0.3)
    Psi = vibronic_reference_state(grid, 1.2, (0.0, 0.0, 1.0))
    dt = 1e-3
    return h, split_step_vibronic(Psi, h, grid, dt, int(round(t / dt)))


@_timed(10, "exact-factorisation extraction and gauge invariance", 10.0)
def criterion_10(res: CriterionResult, seed: int = 10, shifts: int = 10):
    grid = Grid.uniform(-16.0, 16.0, 256)
    h, Psi = ef_reference_wavefunction(grid)
    f = ef_extract(Psi, h, grid, gauge_ref=(1.0, 0.0))
    res.add("pnc_residual", f.pnc_residual())
    res.add("reconstruction_residual", f.reconstruction_residual(Psi))
    rng = np.random.default_rng(seed)
    x = grid.axis(0)
    L = grid.lengths[0]
    worst = 0.0
    worst_A = 0.0
    for _ in range(shifts):
        c = rng.normal(size=(4, 2))
        k = 2 * np.pi * np.arange(1, 5) / L
        theta = np.sum(c[:, 0, None] * np.sin(np.outer(k, x)) + c[:, 1, None] * np.cos(np.outer(k, x)), axis=0)
        dtheta = np.sum(k[:, None] * (c[:, 0, None] * np.cos(np.outer(k, x)) - c[:, 1, None] * np.sin(np.outer(k, x))), axis=0)
        A2, eps2 = ef_gauge_transform(f, h, grid, theta, dtheta)
        worst = max(worst, float(np.max(np.abs(eps2 - f.epsilon)[f.mask])))
        worst_A = max(worst_A, float(np.max(np.abs(A2 - f.A - dtheta)[f.mask])))
    # an independent gauge: a different reference spinor changes psi_e by a local phase
    g2 = ef_extract(Psi, h, grid, gauge_ref=(0.6, 0.8j))
    both = f.mask & g2.mask
    worst = max(worst, float(np.max(np.abs(g2.epsilon - f.epsilon)[both])))
    res.add("epsilon_gauge_residual", worst)
    res.add("connection_shift_residual", worst_A)
    norm_total = quadrature(f.D, grid)
    res.info["norm"] = norm_total


CRITERIA = {fn.number: fn for fn in (
    criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
    criterion_6, criterion_7, criterion_8, criterion_9, criterion_10,
)}

MODULE_OF = {1: "geometry", 2: "bohmion", 3: "kernels", 4: "bohmion", 5: "bohmion", 6: "grid_reference",
             7: "grid_reference", 8: "grid_reference", 9: "geometry", 10: "grid_reference"}
