"""Bohmion trajectory dynamics and the Ehrenfest mean-field reference.

Two Bohmion models are integrated here:

* single-surface Bohmions, potential energy
  ``U = sum_a w_a V(q_a) + hbar^2/(8m) sum_ab w_a w_b I_ab``;
* exact-factorisation (EF) Bohmions carrying a 2x2 electronic matrix each,
  ``E = sum_a |p_a|^2/(2 M w_a) + sum_a <rho_a, H_e(q_a)>
        + hbar^2/(4M) sum_ab (<rho_a|rho_b> - w_a w_b) I_ab``,
  with ``i hbar drho_a/dt = [H_a^eff, rho_a]``.

Both use symmetric, time-reversible splittings built from exactly solvable
pieces (Verlet kicks and drifts, 2x2 unitary conjugations).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Iterator, Optional

import numpy as np

from . import _accel
from ._accel import njit
from .electronic import TwoLevelHamiltonian, bloch_from_rho, bloch_from_spinor
from .errors import NumericalAbort, NumericalError
from .kernels import DEFAULT_REL_FLOOR, BohmionEnsemble, Kernel, pair_integrals
from .numerics import Grid, expm_two_level
from .potentials import Potential, ZeroPotential

COUPLINGS = ("variational", "printed")


@lru_cache(maxsize=32)
def _grid_points(grid: Grid) -> np.ndarray:
    pts = grid.points()
    pts.setflags(write=False)
    return pts


def _integrals(ensemble, kernel, grid, coeff=None, rel_floor=DEFAULT_REL_FLOOR, positions=None):
    q = ensemble.positions if positions is None else positions
    return pair_integrals(q, ensemble.weights, kernel, grid, coeff, rel_floor, points=_grid_points(grid))


# -- single surface -----------------------------------------------------------


@dataclass
class SingleSurfaceSystem:
    ensemble: BohmionEnsemble
    kernel: Kernel
    grid: Grid
    potential: Potential = field(default_factory=ZeroPotential)
    mass: float = 1.0
    hbar: float = 1.0
    quantum: bool = True
    rel_floor: float = DEFAULT_REL_FLOOR

    def quantum_coefficients(self) -> np.ndarray:
        w = self.ensemble.weights
        if not self.quantum:
            return np.zeros((w.size, w.size))
        return self.hbar**2 / (8.0 * self.mass) * np.outer(w, w)

    def inertia(self) -> np.ndarray:
        return self.mass * self.ensemble.weights[:, None]


def single_surface_potential(system: SingleSurfaceSystem, positions=None) -> dict:
    """Potential-energy parts ``{"external", "quantum", "total"}``."""
    ens = system.ensemble
    q = ens.positions if positions is None else np.asarray(positions, dtype=float)
    external = float(ens.weights @ system.potential.value(q))
    quantum = 0.0
    if system.quantum:
        I, _ = _integrals(ens, system.kernel, system.grid, rel_floor=system.rel_floor, positions=q)
        quantum = float(np.sum(system.quantum_coefficients() * I))
    return {"external": external, "quantum": quantum, "total": external + quantum}


def _single_force(system: SingleSurfaceSystem, q):
    ens = system.ensemble
    F = -ens.weights[:, None] * system.potential.gradient(q)
    I = None
    if system.quantum:
        I, dU = _integrals(ens, system.kernel, system.grid, system.quantum_coefficients(), system.rel_floor, q)
        F = F - dU
    return F, I


def single_surface_force(system: SingleSurfaceSystem, quantum_only: bool = False) -> np.ndarray:
    """``F_a = -dU/dq_a`` for every Bohmion, shape ``(N, d)``."""
    if quantum_only:
        if not system.quantum:
            return np.zeros_like(system.ensemble.positions)
        _, dU = _integrals(
            system.ensemble, system.kernel, system.grid, system.quantum_coefficients(), system.rel_floor
        )
        return -dU
    return _single_force(system, system.ensemble.positions)[0]


def single_surface_energy(system: SingleSurfaceSystem) -> dict:
    ens = system.ensemble
    kinetic = float(np.sum(ens.momenta**2 / (2.0 * system.inertia())))
    parts = single_surface_potential(system)
    return {
        "kinetic": kinetic,
        "electronic": parts["external"],
        "quantum_term": parts["quantum"],
        "total_energy": kinetic + parts["total"],
    }


def step_single_surface(system: SingleSurfaceSystem, dt: float, force=None) -> SingleSurfaceSystem:
    """One Verlet step; returns a new system (the input is not modified)."""
    out, _ = _single_step(system, dt, force)
    return out


def _single_step(system, dt, force=None):
    if not dt != 0 or not np.isfinite(dt):
        raise ValueError("dt must be finite and non-zero")
    ens = system.ensemble
    inertia = system.inertia()
    F0 = _single_force(system, ens.positions)[0] if force is None else force
    p = ens.momenta + 0.5 * dt * F0
    q = ens.positions + dt * p / inertia
    F1, _ = _single_force(system, q)
    p = p + 0.5 * dt * F1
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
        raise NumericalError("non-finite Bohmion state")
    new = replace(ens, positions=q, momenta=p, validate=False)
    return replace(system, ensemble=new), F1


# -- EF Bohmions --------------------------------------------------------------


@dataclass
class EFBohmionSystem:
    """Bohmions with electronic matrices coupled through ``H_e`` and the kernel terms.

    ``coupling`` selects the factor in front of the kernel term of the
    electronic equation: ``"variational"`` uses ``hbar^2/(2M)`` (the
    derivative of the energy with respect to ``rho_a``, which makes the
    energy an exact invariant), ``"printed"`` uses ``hbar^2/(4M)``.
    """

    ensemble: BohmionEnsemble
    kernel: Kernel
    grid: Grid
    hamiltonian: TwoLevelHamiltonian
    mass: float = 1.0
    hbar: float = 1.0
    quantum: bool = True
    coupling: str = "variational"
    gradient_scope: str = "drop_xi"
    rel_floor: float = DEFAULT_REL_FLOOR

    def __post_init__(self):
        if self.ensemble.rho is None:
            raise ValueError("EF Bohmions need electronic matrices")
        if self.coupling not in COUPLINGS:
            raise ValueError(f"coupling must be one of {COUPLINGS}")
        if self.gradient_scope != "drop_xi":
            raise ValueError("only gradient_scope='drop_xi' is implemented")
        if self.hamiltonian.dim != self.ensemble.dim:
            raise ValueError("Hamiltonian and ensemble dimensions disagree")

    @property
    def prefactor(self) -> float:
        return self.hbar**2 / (4.0 * self.mass)

    @property
    def kappa(self) -> float:
        """Coefficient of ``sum_b I_ab rho_b`` in the effective Hamiltonian."""
        if not self.quantum:
            return 0.0
        return self.prefactor * (2.0 if self.coupling == "variational" else 1.0)

    def inertia(self) -> np.ndarray:
        return self.mass * self.ensemble.weights[:, None]

    def quantum_coefficients(self, rho=None) -> np.ndarray:
        rho = self.ensemble.rho if rho is None else rho
        w = self.ensemble.weights
        if not self.quantum:
            return np.zeros((w.size, w.size))
        overlap = np.einsum("aij,bij->ab", np.conj(rho), rho).real
        return self.prefactor * (overlap - np.outer(w, w))


def _ef_force(system: EFBohmionSystem, q, rho):
    ens = system.ensemble
    h = system.hamiltonian
    tr = np.trace(rho, axis1=-2, axis2=-1).real
    tn = np.einsum("aij,kji->ak", rho, _SIGMA).real  # Tr(rho sigma_k)
    F = -(tr[:, None] * h.scalar_grad(q) + np.einsum("ak,akj->aj", tn, h.vector_grad(q)))
    C = system.quantum_coefficients(rho)
    if system.quantum:
        I, dU = _integrals(ens, system.kernel, system.grid, C, system.rel_floor, q)
        F = F - dU
    else:
        I, _ = _integrals(ens, system.kernel, system.grid, None, system.rel_floor, q)
    return F, I


def ef_bohmion_force(system: EFBohmionSystem) -> np.ndarray:
    """``F_a = -dE/dq_a`` at frozen electronic matrices."""
    return _ef_force(system, system.ensemble.positions, system.ensemble.rho)[0]


def ef_bohmion_energy(system: EFBohmionSystem, I=None) -> dict:
    ens = system.ensemble
    kinetic = float(np.sum(ens.momenta**2 / (2.0 * system.inertia())))
    H = system.hamiltonian.matrix(ens.positions)
    electronic = float(np.einsum("aij,aji->", ens.rho, H).real)
    quantum = 0.0
    if system.quantum:
        if I is None:
            I, _ = _integrals(ens, system.kernel, system.grid, rel_floor=system.rel_floor)
        quantum = float(np.sum(system.quantum_coefficients() * I))
    return {
        "kinetic": kinetic,
        "electronic": electronic,
        "quantum_term": quantum,
        "total_energy": kinetic + electronic + quantum,
    }


def ef_effective_hamiltonian(system: EFBohmionSystem, a: Optional[int] = None, I=None) -> np.ndarray:
    """``H_a^eff = H_e(q_a) + kappa sum_b I_ab rho_b`` for one or all Bohmions."""
    ens = system.ensemble
    H = system.hamiltonian.matrix(ens.positions)
    if system.quantum:
        if I is None:
            I, _ = _integrals(ens, system.kernel, system.grid, rel_floor=system.rel_floor)
        H = H + system.kappa * np.einsum("ab,bij->aij", I, ens.rho)
    return H if a is None else H[a]


def electronic_rhs(system: EFBohmionSystem, I=None) -> np.ndarray:
    """``d rho_a/dt`` in commutator-sum form, term by term.

    ``([H_e(q_a), rho_a] + kappa sum_b I_ab [rho_b, rho_a]) / (i hbar)``.
    """
    ens = system.ensemble
    rho = ens.rho
    H = system.hamiltonian.matrix(ens.positions)
    out = H @ rho - rho @ H
    if system.quantum:
        if I is None:
            I, _ = _integrals(ens, system.kernel, system.grid, rel_floor=system.rel_floor)
        for a in range(ens.count):
            for b in range(ens.count):
                out[a] += system.kappa * I[a, b] * (rho[b] @ rho[a] - rho[a] @ rho[b])
    return out / (1j * system.hbar)


# 2x2 electronic flows in closed form --------------------------------------
#
# Writing rho = a 1 + b.sigma, a conjugation by exp(-i t (c + h.sigma)/hbar)
# leaves a untouched and rotates b about h by the angle 2 |h| t / hbar. The
# flows below act on b only, so traces are preserved bit for bit.

from .numerics import SIGMA as _SIGMA  # noqa: E402


@njit(cache=True)
def _rotate(b, hx, hy, hz, tau):
    # b <- R b, rotation about h by 2 |h| tau (Rodrigues)
    nh = np.sqrt(hx * hx + hy * hy + hz * hz)
    if nh == 0.0:
        return
    kx = hx / nh
    ky = hy / nh
    kz = hz / nh
    th = 2.0 * nh * tau
    c = np.cos(th)
    s = np.sin(th)
    x, y, z = b[0], b[1], b[2]
    kb = kx * x + ky * y + kz * z
    b[0] = x * c + (ky * z - kz * y) * s + kx * kb * (1.0 - c)
    b[1] = y * c + (kz * x - kx * z) * s + ky * kb * (1.0 - c)
    b[2] = z * c + (kx * y - ky * x) * s + kz * kb * (1.0 - c)


@njit(cache=True)
def _electronic_flow_nb(b, h, I, kappa, dt, hbar):
    N = b.shape[0]
    tau_half = 0.5 * dt / hbar
    for a in range(N):
        _rotate(b[a], h[a, 0], h[a, 1], h[a, 2], tau_half)
    if kappa != 0.0 and N > 1:
        npair = N * (N - 1) // 2
        pa = np.empty(npair, dtype=np.int64)
        pb = np.empty(npair, dtype=np.int64)
        k = 0
        for a in range(N):
            for c in range(a + 1, N):
                pa[k] = a
                pb[k] = c
                k += 1
        for sweep in range(2 * npair - 1):
            k = sweep if sweep < npair else 2 * npair - 2 - sweep
            tau = (dt if k == npair - 1 else 0.5 * dt) / hbar
            a = pa[k]
            c = pb[k]
            g = kappa * I[a, c]
            gx = g * (b[a, 0] + b[c, 0])
            gy = g * (b[a, 1] + b[c, 1])
            gz = g * (b[a, 2] + b[c, 2])
            _rotate(b[a], gx, gy, gz, tau)
            _rotate(b[c], gx, gy, gz, tau)
    for a in range(N):
        _rotate(b[a], h[a, 0], h[a, 1], h[a, 2], tau_half)


def _pair_sequence(N):
    pairs = [(a, b) for a in range(N) for b in range(a + 1, N)]
    if not pairs:
        return []
    seq = [(a, b, 0.5) for a, b in pairs[:-1]]
    seq.append((*pairs[-1], 1.0))
    seq += [(a, b, 0.5) for a, b in reversed(pairs[:-1])]
    return seq


def _rotate_np(b, h, tau):
    """Row-wise Rodrigues rotation of ``b`` about ``h`` by ``2 |h| tau``."""
    nh = np.linalg.norm(h, axis=-1, keepdims=True)
    k = np.divide(h, nh, out=np.zeros_like(h), where=nh > 0)
    th = 2.0 * nh * tau
    c, s = np.cos(th), np.sin(th)
    kb = np.sum(k * b, axis=-1, keepdims=True)
    return b * c + np.cross(k, b) * s + k * kb * (1.0 - c)


def _electronic_flow_np(b, h, I, kappa, dt, hbar):
    b = _rotate_np(b, h, 0.5 * dt / hbar)
    if kappa != 0.0:
        for a, c, frac in _pair_sequence(b.shape[0]):
            g = kappa * I[a, c] * (b[a] + b[c])
            b[[a, c]] = _rotate_np(b[[a, c]], np.stack([g, g]), frac * dt / hbar)
    return _rotate_np(b, h, 0.5 * dt / hbar)


def electronic_flow(system: EFBohmionSystem, dt: float, I=None, positions=None, rho=None) -> np.ndarray:
    """Evolve every ``rho_a`` over ``dt`` at frozen positions.

    The flow splits into one exactly solvable piece per Bohmion
    (``[H_e(q_a), rho_a]``) and one per pair ``(a, b)``: since
    ``rho_a + rho_b`` is conserved by the pair term, that piece is a
    conjugation by ``exp(-i t kappa I_ab (rho_a + rho_b) / hbar)``. The pieces
    are composed palindromically, so the map is symmetric in ``dt`` and every
    spectrum is preserved exactly.
    """
    ens = system.ensemble
    q = ens.positions if positions is None else positions
    rho = np.asarray(ens.rho if rho is None else rho, dtype=complex)
    h = np.ascontiguousarray(system.hamiltonian.vector(q), dtype=float)
    kappa = system.kappa
    if kappa != 0.0 and I is None:
        I, _ = _integrals(ens, system.kernel, system.grid, rel_floor=system.rel_floor, positions=q)
    if I is None:
        I = np.zeros((ens.count, ens.count))
    half_tr = 0.5 * (rho[:, 0, 0] + rho[:, 1, 1]).real
    b = np.ascontiguousarray(np.einsum("aij,kji->ak", rho, _SIGMA).real * 0.5)
    if _accel.USE_NUMBA:
        _electronic_flow_nb(b, h, np.ascontiguousarray(I, dtype=float), kappa, dt, system.hbar)
    else:
        b = _electronic_flow_np(b, h, I, kappa, dt, system.hbar)
    out = np.empty_like(rho)
    out[:, 0, 0] = half_tr + b[:, 2]
    out[:, 1, 1] = half_tr - b[:, 2]
    out[:, 0, 1] = b[:, 0] - 1j * b[:, 1]
    out[:, 1, 0] = b[:, 0] + 1j * b[:, 1]
    return out


def _ef_step(system: EFBohmionSystem, dt, force=None):
    if not dt != 0 or not np.isfinite(dt):
        raise ValueError("dt must be finite and non-zero")
    ens = system.ensemble
    inertia = system.inertia()
    F0 = _ef_force(system, ens.positions, ens.rho)[0] if force is None else force
    p = ens.momenta + 0.5 * dt * F0
    q = ens.positions + 0.5 * dt * p / inertia
    rho = electronic_flow(system, dt, positions=q)
    q = q + 0.5 * dt * p / inertia
    F1, I1 = _ef_force(system, q, rho)
    p = p + 0.5 * dt * F1
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p)) and np.all(np.isfinite(rho))):
        raise NumericalError("non-finite EF Bohmion state")
    new = replace(ens, positions=q, momenta=p, rho=rho, validate=False)
    return replace(system, ensemble=new), F1, I1


def step_ef_bohmion(system: EFBohmionSystem, dt: float, force=None) -> EFBohmionSystem:
    """Strang step: half kick, half drift, electronic flow, half drift, half kick."""
    return _ef_step(system, dt, force)[0]


# -- trajectories ---------------------------------------------------------------


def trajectory_columns(n_bohmions: int, dim: int, electronic: bool) -> list:
    cols = ["time"]
    for a in range(n_bohmions):
        cols += [f"q{a}_{k}" for k in range(dim)]
        cols += [f"p{a}_{k}" for k in range(dim)]
        cols += [f"F{a}_{k}" for k in range(dim)]
        if electronic:
            cols += [f"tr{a}", f"purity{a}", f"n{a}_x", f"n{a}_y", f"n{a}_z"]
    return cols + ["total_energy", "kinetic", "electronic", "quantum_term"]


def _sample_row(t, system, force, energy, electronic):
    ens = system.ensemble
    row = [t]
    if electronic:
        tr = np.trace(ens.rho, axis1=-2, axis2=-1).real
        pur = np.einsum("aij,aji->a", ens.rho, ens.rho).real / tr**2
        n = bloch_from_rho(ens.rho)
    for a in range(ens.count):
        row += list(ens.positions[a]) + list(ens.momenta[a]) + list(force[a])
        if electronic:
            row += [tr[a], pur[a], *n[a]]
    row += [energy["total_energy"], energy["kinetic"], energy["electronic"], energy["quantum_term"]]
    return row


def integrate(system, dt: float, steps: int, sample_stride: int = 1) -> Iterator[tuple]:
    """Propagate a Bohmion system, yielding ``(step, time, system, row)`` samples.

    Works for both system types; the first sample is the initial state.
    Raises :class:`NumericalAbort` (carrying the last finite system) if the
    state blows up.
    """
    if steps < 0 or sample_stride < 1:
        raise ValueError("steps must be >= 0 and sample_stride >= 1")
    electronic = isinstance(system, EFBohmionSystem)
    F = None
    if electronic:
        F, I = _ef_force(system, system.ensemble.positions, system.ensemble.rho)
        energy = ef_bohmion_energy(system, I)
    else:
        F, _ = _single_force(system, system.ensemble.positions)
        energy = single_surface_energy(system)
    yield 0, 0.0, system, _sample_row(0.0, system, F, energy, electronic)
    for n in range(1, steps + 1):
        try:
            if electronic:
                new, F, I = _ef_step(system, dt, F)
            else:
                new, F = _single_step(system, dt, F)
        except (NumericalError, ValueError) as exc:
            # ValueError here means a Bohmion left the admissible region
            raise NumericalAbort(str(exc), last_good=system, step=n - 1) from exc
        system = new
        if n % sample_stride == 0 or n == steps:
            t = n * dt
            energy = ef_bohmion_energy(system, I) if electronic else single_surface_energy(system)
            yield n, t, system, _sample_row(t, system, F, energy, electronic)


# -- Ehrenfest --------------------------------------------------------------


@dataclass
class EhrenfestState:
    q: np.ndarray
    p: np.ndarray
    psi: np.ndarray

    def __post_init__(self):
        self.q = np.atleast_1d(np.asarray(self.q, dtype=float))
        self.p = np.atleast_1d(np.asarray(self.p, dtype=float))
        self.psi = np.asarray(self.psi, dtype=complex).reshape(2)


def ehrenfest_force(h: TwoLevelHamiltonian, q, psi) -> np.ndarray:
    """``-<psi| grad H_e(q) |psi>`` for a normalised spinor."""
    n = bloch_from_spinor(psi)
    return -(h.scalar_grad(q) + n @ h.vector_grad(q))


def ehrenfest_energy(h: TwoLevelHamiltonian, q, p, psi, mass: float = 1.0) -> dict:
    kinetic = float(np.dot(p, p) / (2.0 * mass))
    electronic = float(np.vdot(psi, h.matrix(q) @ psi).real)
    return {"kinetic": kinetic, "electronic": electronic, "quantum_term": 0.0, "total_energy": kinetic + electronic}


def ehrenfest_step(q, p, psi, h: TwoLevelHamiltonian, mass: float, hbar: float, dt: float, force=None):
    """Symmetric mean-field step: half kick, half drift, unitary, half drift, half kick.

    Returns ``(q, p, psi, force_at_new_q)``.
    """
    if abs(np.linalg.norm(psi) - 1.0) > 1e-10:
        raise ValueError("Ehrenfest spinor must be normalised")
    F0 = ehrenfest_force(h, q, psi) if force is None else force
    p = p + 0.5 * dt * F0
    q = q + 0.5 * dt * p / mass
    psi = expm_two_level(h.matrix(q), dt, hbar) @ psi
    q = q + 0.5 * dt * p / mass
    F1 = ehrenfest_force(h, q, psi)
    p = p + 0.5 * dt * F1
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p)) and np.all(np.isfinite(psi))):
        raise NumericalError("non-finite Ehrenfest state")
    return q, p, psi, F1


def ehrenfest_columns(dim: int) -> list:
    return (
        ["time"]
        + [f"q_{k}" for k in range(dim)]
        + [f"p_{k}" for k in range(dim)]
        + ["norm", "n_x", "n_y", "n_z", "total_energy", "kinetic", "electronic", "quantum_term"]
    )


def integrate_ehrenfest(state: EhrenfestState, h, mass, hbar, dt, steps, sample_stride=1):
    q, p, psi = state.q.copy(), state.p.copy(), state.psi.copy()
    F = ehrenfest_force(h, q, psi)

    def row(t):
        e = ehrenfest_energy(h, q, p, psi, mass)
        n = bloch_from_spinor(psi)
        return [t, *q, *p, float(np.linalg.norm(psi)), *n, e["total_energy"], e["kinetic"], e["electronic"], 0.0]

    yield 0, 0.0, EhrenfestState(q, p, psi), row(0.0)
    for k in range(1, steps + 1):
        try:
            q, p, psi, F = ehrenfest_step(q, p, psi, h, mass, hbar, dt, F)
        except NumericalError as exc:
            raise NumericalAbort(str(exc), last_good=EhrenfestState(q, p, psi), step=k - 1) from exc
        if k % sample_stride == 0 or k == steps:
            yield k, k * dt, EhrenfestState(q, p, psi), row(k * dt)


Integrator = Callable[..., Iterator[tuple]]
