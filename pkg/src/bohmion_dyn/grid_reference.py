"""Grid-based quantum reference solvers and hydrodynamic / EF extraction.

Everything here lives on 1-D periodic :class:`~bohmion_dyn.numerics.Grid`
objects. Wavefunctions are plain complex arrays, shape ``(n,)`` for a single
particle and ``(n, 2)`` for a nucleus carrying a two-level electron.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .electronic import TwoLevelHamiltonian
from .errors import NumericalError
from .numerics import Grid, expm_two_level, quadrature, spectral_derivative

DENSITY_FLOOR = 1e-10


def _require_1d(grid: Grid):
    if grid.dim != 1:
        raise ValueError("grid reference solvers are one-dimensional")
    if not grid.periodic:
        raise ValueError("grid reference solvers need a periodic grid")


def _check_finite(psi, what="wavefunction"):
    if not np.all(np.isfinite(psi)):
        raise NumericalError(f"non-finite {what}")


def norm(psi, grid: Grid) -> float:
    return float(np.sqrt(quadrature(np.abs(psi) ** 2, grid)))


def normalize(psi, grid: Grid) -> np.ndarray:
    n = norm(psi, grid)
    if n == 0:
        raise ValueError("cannot normalise a zero wavefunction")
    return np.asarray(psi, dtype=complex) / n


def _kinetic_phase(grid, mass, hbar, tau):
    k = grid.wavenumbers(0)
    return np.exp(-1j * hbar * k**2 * tau / (2.0 * mass))


# -- propagation --------------------------------------------------------------


def split_step_1d(psi, V, grid: Grid, dt: float, steps: int, mass: float = 1.0, hbar: float = 1.0):
    """Strang kinetic-potential-kinetic propagation of a scalar wavefunction.

    Adjacent kinetic half steps are fused, so ``steps`` steps cost
    ``steps + 1`` FFT pairs.
    """
    _require_1d(grid)
    psi = np.array(psi, dtype=complex)
    V = np.broadcast_to(np.asarray(V, dtype=float), grid.shape)
    _check_finite(psi)
    _check_finite(V, "potential")
    if steps == 0:
        return psi
    half = _kinetic_phase(grid, mass, hbar, 0.5 * dt)
    full = half * half
    pot = np.exp(-1j * V * dt / hbar)
    phi = np.fft.fft(psi) * half
    for s in range(steps):
        phi = np.fft.fft(pot * np.fft.ifft(phi))
        phi *= full if s < steps - 1 else half
    out = np.fft.ifft(phi)
    _check_finite(out)
    return out


def split_step_vibronic(
    Psi,
    h: TwoLevelHamiltonian,
    grid: Grid,
    dt: float,
    steps: int,
    mass: Optional[float] = None,
    hbar: float = 1.0,
    kinetic: bool = True,
):
    """Strang propagation of ``i hbar dPsi/dt = (-hbar^2/2M d^2 + H_e(r)) Psi``.

    The potential step applies the closed-form ``exp(-i dt H_e(r)/hbar)`` at
    every node. ``mass`` defaults to the Hamiltonian's nuclear mass.
    """
    _require_1d(grid)
    if h.dim != 1:
        raise ValueError("vibronic solver needs a 1-D Hamiltonian")
    M = h.mass if mass is None else mass
    Psi = np.array(Psi, dtype=complex)
    if Psi.shape != grid.shape + (2,):
        raise ValueError(f"expected shape {grid.shape + (2,)}, got {Psi.shape}")
    _check_finite(Psi)
    if steps == 0:
        return Psi
    x = grid.axis(0)[:, None]
    U = expm_two_level(h.matrix(x), dt, hbar)
    if not kinetic:
        for _ in range(steps):
            Psi = np.einsum("xij,xj->xi", U, Psi)
        return Psi
    half = _kinetic_phase(grid, M, hbar, 0.5 * dt)[:, None]
    full = half * half
    phi = np.fft.fft(Psi, axis=0) * half
    for s in range(steps):
        chi = np.fft.ifft(phi, axis=0)
        chi = np.einsum("xij,xj->xi", U, chi)
        phi = np.fft.fft(chi, axis=0)
        phi *= full if s < steps - 1 else half
    out = np.fft.ifft(phi, axis=0)
    _check_finite(out)
    return out


def energy_1d(psi, V, grid: Grid, mass: float = 1.0, hbar: float = 1.0) -> float:
    """``<psi|(-hbar^2/2m) d^2 + V|psi>`` with spectral kinetic energy."""
    k = grid.wavenumbers(0)
    n = grid.shape[0]
    phi = np.fft.fft(psi, axis=0)
    # Parseval: sum |psi|^2 h = (h/n) sum |phi|^2
    w = (hbar * k) ** 2 / (2.0 * mass)
    if phi.ndim > 1:
        w = w[:, None]
    kinetic = float(np.sum(w * np.abs(phi) ** 2) * grid.cell_volume / n)
    V = np.asarray(V, dtype=float)
    if V.ndim and phi.ndim > 1 and V.shape == grid.shape:
        V = V[:, None]
    return kinetic + float(np.sum(V * np.abs(psi) ** 2) * grid.cell_volume)


def energy_vibronic(Psi, h: TwoLevelHamiltonian, grid: Grid, mass=None, hbar=1.0) -> float:
    M = h.mass if mass is None else mass
    kinetic = energy_1d(Psi, 0.0, grid, M, hbar)
    H = h.matrix(grid.axis(0)[:, None])
    pot = np.einsum("xi,xij,xj->", np.conj(Psi), H, Psi).real * grid.cell_volume
    return kinetic + float(pot)


def position_mean(psi, grid: Grid) -> float:
    rho = np.abs(psi) ** 2
    if rho.ndim > 1:
        rho = rho.sum(axis=-1)
    return quadrature(grid.axis(0) * rho, grid) / quadrature(rho, grid)


def gaussian_packet(grid: Grid, center=0.0, width=1.0, momentum=0.0, hbar=1.0):
    """Normalised ``exp(-(x-c)^2/(2 width^2) + i p x/hbar)``."""
    x = grid.axis(0)
    psi = np.exp(-((x - center) ** 2) / (2.0 * width**2) + 1j * momentum * x / hbar)
    return normalize(psi, grid)


# -- Madelung -----------------------------------------------------------------


@dataclass
class MadelungFields:
    D: np.ndarray
    mu: np.ndarray
    u: np.ndarray
    V_Q: np.ndarray
    mask: np.ndarray  # True where the fields are valid

    def valid(self, name: str) -> np.ndarray:
        return getattr(self, name)[self.mask]


def madelung_extract(psi, grid: Grid, mass: float = 1.0, hbar: float = 1.0, density_floor: float = DENSITY_FLOOR):
    """Density, current, velocity and quantum potential of a scalar wavefunction.

    Cells with ``D < density_floor * max D`` are masked; ``u`` and ``V_Q`` are
    set to zero there.
    """
    _require_1d(grid)
    psi = np.asarray(psi, dtype=complex)
    _check_finite(psi)
    D = np.abs(psi) ** 2
    if not np.any(D > 0):
        raise ValueError("wavefunction is identically zero")
    dpsi = spectral_derivative(psi, grid, 0)
    mu = hbar * np.imag(np.conj(psi) * dpsi)
    mask = D >= density_floor * D.max()
    sqrtD = np.sqrt(D)
    lap = spectral_derivative(sqrtD, grid, 0, order=2)
    safe = np.where(mask, D, 1.0)
    u = np.where(mask, mu / (mass * safe), 0.0)
    VQ = np.where(mask, -(hbar**2) / (2.0 * mass) * lap / np.sqrt(safe), 0.0)
    return MadelungFields(D, mu, u, VQ, mask)


def madelung_synthesis(D, S, hbar: float = 1.0) -> np.ndarray:
    return np.sqrt(D) * np.exp(1j * np.asarray(S) / hbar)


def continuity_residual(psi_before, psi_mid, psi_after, delta: float, grid: Grid, mass=1.0, hbar=1.0) -> float:
    """``max|dD/dt + d(Du)/dx| / max D`` at the middle snapshot.

    ``dD/dt`` is a central difference over ``2 delta``; the flux ``D u`` is
    ``mu/m`` at the middle time.
    """
    D0 = np.abs(psi_before) ** 2
    D2 = np.abs(psi_after) ** 2
    mid = madelung_extract(psi_mid, grid, mass, hbar)
    dDdt = (D2 - D0) / (2.0 * delta)
    div = spectral_derivative(mid.mu / mass, grid, 0)
    return float(np.max(np.abs(dDdt + div)) / np.max(mid.D))


# -- exact factorisation ----------------------------------------------------


@dataclass
class EFFields:
    D: np.ndarray
    chi: np.ndarray
    S: np.ndarray
    psi_e: np.ndarray
    dpsi_e: np.ndarray
    A: np.ndarray
    epsilon: np.ndarray
    Q: np.ndarray
    mask: np.ndarray

    def reconstruction_residual(self, Psi) -> float:
        rec = self.chi[:, None] * self.psi_e
        return float(np.max(np.abs(rec - Psi)[self.mask]))

    def pnc_residual(self) -> float:
        return float(np.max(np.abs(np.linalg.norm(self.psi_e, axis=-1) - 1.0)[self.mask]))


def ef_quantities(psi_e, dpsi_e, H, mass: float = 1.0, hbar: float = 1.0):
    """Berry connection, effective potential and QGT from the electronic factor.

    ``A = <psi_e| -i hbar d psi_e>``,
    ``eps = <H_e> + hbar^2/(2M) |d psi_e|^2 - A^2/(2M)``,
    ``Q = |d psi_e|^2 - |<psi_e|d psi_e>|^2``. All inputs are pointwise, so no
    derivative of masked data is ever taken.
    """
    inner = np.einsum("xi,xi->x", np.conj(psi_e), dpsi_e)
    A = (-1j * hbar * inner).real
    dd = np.einsum("xi,xi->x", np.conj(dpsi_e), dpsi_e).real
    eH = np.einsum("xi,xij,xj->x", np.conj(psi_e), H, psi_e).real
    eps = eH + hbar**2 / (2.0 * mass) * dd - A**2 / (2.0 * mass)
    Q = dd - np.abs(inner) ** 2
    return A, eps, Q


def ef_extract(
    Psi,
    h: TwoLevelHamiltonian,
    grid: Grid,
    gauge_ref=(1.0, 0.0),
    mass: Optional[float] = None,
    hbar: float = 1.0,
    density_floor: float = DENSITY_FLOOR,
) -> EFFields:
    """Exact-factorisation fields ``Psi = chi psi_e`` with ``|psi_e| = 1``.

    The local phase is fixed by making ``<gauge_ref|psi_e>`` real positive;
    where that overlap drops below ``1e-8`` the largest component of
    ``psi_e`` is made real positive instead. Derivatives of ``psi_e`` are
    obtained from spectral derivatives of ``Psi`` by the quotient rule.
    """
    _require_1d(grid)
    M = h.mass if mass is None else mass
    Psi = np.asarray(Psi, dtype=complex)
    _check_finite(Psi)
    g = np.asarray(gauge_ref, dtype=complex)
    g = g / np.linalg.norm(g)
    D = np.sum(np.abs(Psi) ** 2, axis=-1)
    mask = D >= density_floor * D.max()
    if not np.any(mask):
        raise ValueError("analysis region is empty")
    dPsi = spectral_derivative(Psi, grid, 0)
    dD = 2.0 * np.sum(np.real(np.conj(Psi) * dPsi), axis=-1)

    f = Psi @ np.conj(g)
    df = dPsi @ np.conj(g)
    safeD = np.where(mask, D, 1.0)
    weak = np.abs(f) < 1e-8 * np.sqrt(safeD)
    k = np.argmax(np.abs(Psi), axis=-1)
    fk = np.take_along_axis(Psi, k[:, None], axis=-1)[:, 0]
    dfk = np.take_along_axis(dPsi, k[:, None], axis=-1)[:, 0]
    f = np.where(weak, fk, f)
    df = np.where(weak, dfk, df)
    absf2 = np.where(mask, np.abs(f) ** 2, 1.0)
    theta = np.angle(f)
    dtheta = np.imag(np.conj(f) * df) / absf2

    phase = np.exp(-1j * theta)[:, None]
    root = np.sqrt(safeD)[:, None]
    psi_e = Psi * phase / root
    dpsi_e = (dPsi - Psi * (1j * dtheta + 0.5 * dD / safeD)[:, None]) * phase / root
    psi_e[~mask] = 0.0
    dpsi_e[~mask] = 0.0

    H = h.matrix(grid.axis(0)[:, None])
    A, eps, Q = ef_quantities(psi_e, dpsi_e, H, M, hbar)
    for arr in (A, eps, Q):
        arr[~mask] = 0.0
    S = hbar * theta
    chi = np.sqrt(D) * np.exp(1j * theta)
    return EFFields(D, chi, S, psi_e, dpsi_e, A, eps, Q, mask)


def ef_gauge_transform(fields: EFFields, h, grid, theta, dtheta, mass=None, hbar=1.0):
    """Recompute ``(A, eps)`` after ``psi_e -> exp(i theta/hbar) psi_e``."""
    M = h.mass if mass is None else mass
    ph = np.exp(1j * np.asarray(theta) / hbar)[:, None]
    psi = ph * fields.psi_e
    dpsi = ph * (fields.dpsi_e + (1j / hbar) * np.asarray(dtheta)[:, None] * fields.psi_e)
    A, eps, _ = ef_quantities(psi, dpsi, h.matrix(grid.axis(0)[:, None]), M, hbar)
    return np.where(fields.mask, A, 0.0), np.where(fields.mask, eps, 0.0)


# -- cold fluid closure -------------------------------------------------------


def fourier_interpolate(values, grid: Grid, x) -> np.ndarray:
    """Trigonometric interpolant of periodic samples evaluated at points ``x``.

    The Nyquist mode (even ``n``) is split symmetrically so real data give a
    real interpolant.
    """
    values = np.asarray(values)
    n = grid.shape[0]
    c = np.fft.fft(values) / n
    k = grid.wavenumbers(0)
    t = np.asarray(x, dtype=float) - grid.axis(0)[0]
    E = np.exp(1j * np.outer(t, k))
    if n % 2 == 0:
        E[:, n // 2] = np.cos(k[n // 2] * t)
    out = E @ c
    return out.real if np.isrealobj(values) else out


def _taper(s, L):
    # smooth 0..1 cut-off: 1 for |s| <= L/4, 0 for |s| >= L/2
    r = np.clip((np.abs(s) - 0.25 * L) / (0.25 * L), 0.0, 1.0)

    def bump(t):
        return np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)

    return bump(1.0 - r) / (bump(1.0 - r) + bump(r))


def cold_fluid_matrix(D, u, grid: Grid, mass=1.0, hbar=1.0, density_floor=1e-13):
    """``rho(x, x') = D(m) exp(i m (x - x') u(m)/hbar)``, ``m = (x + x')/2``.

    The displacement ``x - x'`` is taken as the periodic minimal image and the
    matrix is tapered smoothly to zero for ``|x - x'| > L/4``; every entry
    within that band (in particular the diagonal and its neighbourhood) is
    the exact closure. ``D`` and the momentum density ``m D u`` are evaluated
    at the half-grid midpoints by trigonometric interpolation, and the
    velocity is recovered as ``mu D / (m (D^2 + delta^2))`` with
    ``delta = density_floor * max D`` so it fades smoothly where ``D`` vanishes.
    """
    n = grid.shape[0]
    h = grid.spacing[0]
    L = grid.lengths[0]
    D = np.asarray(D, dtype=float)
    mu = mass * D * np.asarray(u, dtype=float)
    half = grid.axis(0)[0] + 0.5 * h * np.arange(2 * n)
    Dh = fourier_interpolate(D, grid, half)
    muh = fourier_interpolate(mu, grid, half)
    delta = density_floor * Dh.max()
    uh = muh * Dh / (mass * (Dh**2 + delta**2))
    i = np.arange(n)
    di = (i[:, None] - i[None, :] + n // 2) % n - n // 2  # wrapped i - j
    kmid = (2 * i[None, :] + di) % (2 * n)
    s = di * h
    rho = _taper(s, L) * Dh[kmid] * np.exp(1j * mass * s * uh[kmid] / hbar)
    return rho


def cold_fluid_check(D, u, grid: Grid, mass=1.0, hbar=1.0, V=None) -> dict:
    """Residuals of the cold-fluid closure against the hydrodynamic fields.

    Returns relative ``max|diag rho - D|`` and ``max|J - m D u|`` where
    ``J(x) = (1/2){P, rho}_+(x, x) = Re (P rho)(x, x)`` with spectral ``P``,
    together with ``<rho, H>`` and the closure energy
    ``int (|mu|^2/(2 m D) + D V)``.
    """
    _require_1d(grid)
    if grid.shape[0] < 64:
        raise ValueError("cold-fluid check needs at least 64 grid points")
    D = np.asarray(D, dtype=float)
    u = np.asarray(u, dtype=float)
    _check_finite(D, "density")
    _check_finite(u, "velocity")
    if np.any(D < 0):
        raise ValueError("density must be non-negative")
    V = np.zeros_like(D) if V is None else np.asarray(V, dtype=float)
    rho = cold_fluid_matrix(D, u, grid, mass, hbar)
    diag = np.real(np.diag(rho))
    Prho = -1j * hbar * spectral_derivative(rho, grid, 0)
    J = np.real(np.diag(Prho))
    mDu = mass * D * u
    diag_res = float(np.max(np.abs(diag - D)) / np.max(np.abs(D)))
    scale = np.max(np.abs(mDu))
    cur_res = float(np.max(np.abs(J - mDu)) / scale) if scale > 0 else float(np.max(np.abs(J)))
    d2 = spectral_derivative(rho, grid, 0, order=2)
    kin = -(hbar**2) / (2.0 * mass) * np.real(np.diag(d2))
    energy = quadrature(kin + V * diag, grid)
    closure = quadrature(0.5 * mass * D * u**2 + D * V, grid)
    return {
        "diag_residual": diag_res,
        "current_residual": cur_res,
        "energy": energy,
        "closure_energy": closure,
        "energy_residual": abs(energy - closure) / max(abs(closure), 1e-300),
        "n": grid.shape[0],
    }
