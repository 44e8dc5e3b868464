"""Two-level electronic Hamiltonians, Born-Oppenheimer surfaces and Bloch vectors.

The Hamiltonian is ``a(r) 1 + b(r) . sigma`` with the spin-boson family

    a(r) = M omega^2 |r|^2 / 2,        b(r) = (C.r + E, 0, D.r) / 2,

which covers the E x beta and E x epsilon Jahn-Teller models.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import SIGMA, pauli_compose


@dataclass(frozen=True)
class TwoLevelHamiltonian:
    """Spin-boson parameter pack; ``C`` and ``D`` live in R^dim."""

    mass: float = 1.0
    omega: float = 1.0
    C: tuple = (0.0,)
    D: tuple = (0.0,)
    E: float = 0.0
    dim: int = field(init=False)

    def __post_init__(self):
        C = tuple(float(c) for c in np.atleast_1d(self.C))
        D = tuple(float(c) for c in np.atleast_1d(self.D))
        if len(C) != len(D):
            raise ValueError("C and D must have the same dimension")
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "dim", len(C))

    @classmethod
    def jahn_teller_e_epsilon(cls, C=1.0, D=1.0, mass=1.0, omega=1.0):
        return cls(mass, omega, (C, 0.0), (0.0, D), 0.0)

    def scalar(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        return 0.5 * self.mass * self.omega**2 * np.sum(r * r, axis=-1)

    def vector(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        C = np.asarray(self.C)
        D = np.asarray(self.D)
        bx = 0.5 * (r @ C + self.E)
        bz = 0.5 * (r @ D)
        return np.stack([bx, np.zeros_like(bx), bz], axis=-1)

    def scalar_grad(self, r) -> np.ndarray:
        return self.mass * self.omega**2 * np.asarray(r, dtype=float)

    def vector_grad(self, r) -> np.ndarray:
        """``db_k/dr_j`` with shape ``(..., 3, dim)``."""
        r = np.asarray(r, dtype=float)
        jac = np.zeros((3, self.dim))
        jac[0] = 0.5 * np.asarray(self.C)
        jac[2] = 0.5 * np.asarray(self.D)
        return np.broadcast_to(jac, r.shape[:-1] + (3, self.dim))

    def matrix(self, r) -> np.ndarray:
        return pauli_compose(self.scalar(r), self.vector(r))

    def matrix_grad(self, r) -> np.ndarray:
        """``dH/dr_j`` with shape ``(..., dim, 2, 2)``."""
        ga = self.scalar_grad(r)
        gb = np.swapaxes(self.vector_grad(r), -1, -2)  # (..., dim, 3)
        return pauli_compose(ga, gb)

    def params(self) -> dict:
        return {"M": self.mass, "omega": self.omega, "C": list(self.C), "D": list(self.D), "E": self.E}


def spin_boson_h(params: TwoLevelHamiltonian, r):
    """Return ``(a, b)`` at ``r``."""
    return params.scalar(r), params.vector(r)


def spin_boson_grad(params: TwoLevelHamiltonian, r):
    """Return ``(grad a, grad b)``; ``grad b`` has shape ``(..., 3, dim)``."""
    return params.scalar_grad(r), params.vector_grad(r)


@dataclass
class BOSurfaces:
    lower: np.ndarray
    upper: np.ndarray
    v_lower: np.ndarray
    v_upper: np.ndarray
    degenerate: np.ndarray


def _fix_gauge(v):
    # largest-magnitude component real positive
    idx = np.argmax(np.abs(v), axis=-1)
    comp = np.take_along_axis(v, idx[..., None], axis=-1)
    return v * (np.conj(comp) / np.abs(comp))


def bo_surfaces(h: TwoLevelHamiltonian, r, degeneracy_tol: float = 0.0) -> BOSurfaces:
    """Adiabatic energies ``a -+ |b|`` and gauge-fixed eigenvectors at ``r``.

    Where ``|b| <= degeneracy_tol`` the +z basis is returned and flagged.
    """
    a = h.scalar(r)
    b = h.vector(r)
    nb = np.linalg.norm(b, axis=-1)
    degenerate = nb <= degeneracy_tol
    safe = np.where(degenerate, 1.0, nb)
    bhat = np.where(degenerate[..., None], np.array([0.0, 0.0, 1.0]), b / safe[..., None])
    x, y, z = bhat[..., 0], bhat[..., 1], bhat[..., 2]
    # eigenvectors of bhat.sigma; pick the better-conditioned closed form
    up_a = np.stack([1.0 + z, x + 1j * y], axis=-1)
    up_b = np.stack([x - 1j * y, 1.0 - z], axis=-1)
    use_a = (z >= 0)[..., None]
    v_up = np.where(use_a, up_a, up_b)
    dn_a = np.stack([-(x - 1j * y), 1.0 + z], axis=-1)
    dn_b = np.stack([1.0 - z, -(x + 1j * y)], axis=-1)
    v_dn = np.where(use_a, dn_a, dn_b)
    v_up = _fix_gauge(v_up / np.linalg.norm(v_up, axis=-1, keepdims=True))
    v_dn = _fix_gauge(v_dn / np.linalg.norm(v_dn, axis=-1, keepdims=True))
    return BOSurfaces(a - nb, a + nb, v_dn, v_up, degenerate)


def bloch_from_rho(rho) -> np.ndarray:
    """``n_i = Tr(rho sigma_i) / Tr(rho)`` for one matrix or a stack."""
    rho = np.asarray(rho)
    tr = np.trace(rho, axis1=-2, axis2=-1).real
    if np.any(tr <= 0):
        raise ValueError("density matrix must have positive trace")
    n = np.einsum("...ij,kji->...k", rho, SIGMA).real
    return n / tr[..., None]


def rho_from_bloch(n, trace=1.0) -> np.ndarray:
    """``(t/2)(1 + n.sigma)``."""
    n = np.asarray(n, dtype=float)
    t = np.asarray(trace, dtype=float)
    return pauli_compose(0.5 * t, 0.5 * t[..., None] * n)


def bloch_from_spinor(psi) -> np.ndarray:
    """Bloch vector ``<psi|sigma|psi>`` of (a field of) normalised spinors."""
    psi = np.asarray(psi)
    return np.einsum("...i,kij,...j->...k", np.conj(psi), SIGMA, psi).real


def spin_vector(n, hbar: float = 1.0) -> np.ndarray:
    return 0.5 * hbar * np.asarray(n)
