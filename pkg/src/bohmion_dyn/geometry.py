"""Quantum-geometry diagnostics for spinor fields over a parameter grid.

A :class:`ParametrizedStateField` holds a unit spinor at every node of a
periodic parameter grid. From it we compute the quantum geometric tensor

    Q_ij = <d_i psi|(1 - psi psi^dagger)|d_j psi>,

the Berry connection ``A_j = <psi|-i hbar d_j psi>``, the curvature
``B_ij = 2 hbar Im Q_ij = d_i A_j - d_j A_i`` and the skew-Hermitian
connection ``gamma_j`` with ``d_j psi = -gamma_j psi``, and check the
identities relating them. Each check returns a :class:`CheckReport`.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

from .electronic import TwoLevelHamiltonian, bo_surfaces, bloch_from_rho
from .numerics import SIGMA, Grid, spectral_derivative

PARAM_BOX = (0.0, 2.0 * np.pi)


@dataclass
class CheckReport:
    check_name: str
    max_residual: float
    tolerance: float
    location: Optional[list] = None
    grid_meta: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.max_residual) and self.max_residual < self.tolerance)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pass"] = self.passed
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _location(grid: Grid, arr) -> list:
    """Grid coordinates of the largest entry of ``arr`` (axes beyond the grid ignored)."""
    arr = np.abs(np.asarray(arr))
    extra = arr.shape[grid.dim:]
    if extra:
        arr = arr.reshape(grid.shape + (-1,)).max(axis=-1)
    idx = np.unravel_index(int(np.argmax(arr)), grid.shape)
    return [float(grid.axis(i)[k]) for i, k in enumerate(idx)]


class ParametrizedStateField:
    """Unit spinors ``psi(r)``, shape ``grid.shape + (n,)``, on a periodic grid."""

    def __init__(self, grid: Grid, psi, hbar: float = 1.0, tol: float = 1e-12):
        psi = np.asarray(psi, dtype=complex)
        if psi.shape[:-1] != grid.shape:
            raise ValueError(f"spinor array {psi.shape} does not match grid {grid.shape}")
        if not np.all(np.isfinite(psi)):
            raise ValueError("non-finite spinor field")
        err = np.max(np.abs(np.linalg.norm(psi, axis=-1) - 1.0))
        if err > tol:
            raise ValueError(f"spinor field not normalised (max error {err:.3g})")
        self.grid = grid
        self.psi = psi
        self.hbar = hbar

    @classmethod
    def normalized(cls, grid, psi, hbar=1.0):
        psi = np.asarray(psi, dtype=complex)
        return cls(grid, psi / np.linalg.norm(psi, axis=-1, keepdims=True), hbar)

    @property
    def dim(self) -> int:
        return self.grid.dim

    @property
    def components(self) -> int:
        return self.psi.shape[-1]

    @cached_property
    def dpsi(self) -> np.ndarray:
        """Spectral derivatives, shape ``grid.shape + (d, n)``."""
        return np.stack([spectral_derivative(self.psi, self.grid, j) for j in range(self.dim)], axis=-2)

    @cached_property
    def overlap(self) -> np.ndarray:
        """``<psi|d_j psi>``, shape ``grid.shape + (d,)``."""
        return np.einsum("...k,...jk->...j", np.conj(self.psi), self.dpsi)

    @cached_property
    def Q(self) -> np.ndarray:
        dd = np.conj(self.dpsi) @ np.swapaxes(self.dpsi, -1, -2)
        a = self.overlap
        return dd - np.conj(a)[..., :, None] * a[..., None, :]

    @cached_property
    def gamma(self) -> np.ndarray:
        return gamma_connection(self)

    def bloch(self) -> np.ndarray:
        if self.components != 2:
            raise ValueError("Bloch vectors need a two-level field")
        rho = self.psi[..., :, None] * np.conj(self.psi[..., None, :])
        return bloch_from_rho(rho)


@dataclass
class QGTField:
    Q: np.ndarray  # grid.shape + (d, d)
    hbar: float = 1.0

    @property
    def metric(self) -> np.ndarray:
        return self.Q.real

    @property
    def curvature(self) -> np.ndarray:
        return 2.0 * self.hbar * self.Q.imag


def qgt(f: ParametrizedStateField) -> QGTField:
    return QGTField(f.Q, f.hbar)


def berry_connection(f: ParametrizedStateField) -> np.ndarray:
    """``A_j = hbar Im <psi|d_j psi>``, shape ``grid.shape + (d,)``."""
    return f.hbar * f.overlap.imag


def berry_curvature(f: ParametrizedStateField, method: str = "qgt") -> np.ndarray:
    """``B_ij`` from ``2 hbar Im Q`` (``method="qgt"``) or the curl of ``A`` (``"curl"``)."""
    if f.dim < 2:
        raise ValueError("curvature needs a parameter space of dimension >= 2")
    if method == "qgt":
        return qgt(f).curvature
    if method != "curl":
        raise ValueError(f"unknown method {method!r}")
    A = berry_connection(f)
    dA = np.stack([spectral_derivative(A, f.grid, i) for i in range(f.dim)], axis=-2)  # d_i A_j
    return dA - np.swapaxes(dA, -1, -2)


def gamma_connection(f: ParametrizedStateField, tol: float = 1e-8) -> np.ndarray:
    """``gamma_j = psi (d_j psi)^dagger - (d_j psi) psi^dagger + <psi|d_j psi> psi psi^dagger``.

    Shape ``grid.shape + (d, n, n)``.
    """
    err = np.max(np.abs(np.linalg.norm(f.psi, axis=-1) - 1.0))
    if err > tol:
        raise ValueError(f"gamma connection needs unit spinors (max norm error {err:.3g})")
    psi = f.psi[..., None, :]
    dpsi = f.dpsi
    outer = lambda u, v: u[..., :, None] * np.conj(v[..., None, :])  # noqa: E731
    proj = outer(psi, psi)
    return outer(psi, dpsi) - outer(dpsi, psi) + f.overlap[..., None, None] * proj


def covariance_residual(f: ParametrizedStateField, gamma=None) -> np.ndarray:
    """Pointwise ``|Q_ij - (<g_i><g_j> - <g_i g_j>)|`` for a given (or canonical) gamma."""
    return np.abs(f.Q - gamma_covariance(f, gamma))


def gamma_covariance(f: ParametrizedStateField, gamma=None) -> np.ndarray:
    """``<g_i><g_j> - <g_i g_j>`` with ``<.> = <psi|.|psi>``."""
    g = f.gamma if gamma is None else gamma
    psi = f.psi[..., None, :, None]
    gpsi = (g @ psi)[..., 0]  # (..., d, n)
    hpsi = (np.conj(np.swapaxes(g, -1, -2)) @ psi)[..., 0]
    mean = np.einsum("...k,...ik->...i", np.conj(f.psi), gpsi)
    # <g_i g_j> = <g_i^dagger psi|g_j psi>
    second = np.conj(hpsi) @ np.swapaxes(gpsi, -1, -2)
    return mean[..., :, None] * mean[..., None, :] - second


def qgt_covariance_check(f: ParametrizedStateField, tol: float = 1e-10, gamma=None) -> CheckReport:
    res = covariance_residual(f, gamma)
    return CheckReport("qgt_covariance", float(res.max()), tol, _location(f.grid, res), f.grid.meta())


def su2_image(gamma) -> tuple:
    """Split 2x2 skew-Hermitian ``gamma = i c 1 - (i/2) g . sigma``; returns ``(c, g)``."""
    c = (np.trace(gamma, axis1=-2, axis2=-1) / 2j).real
    g = (1j * np.einsum("...kl,slk->...s", gamma, SIGMA)).real
    return c, g


def qgt_two_level_closed_form(f: ParametrizedStateField, gamma=None) -> np.ndarray:
    """``Q_ij = g_i.g_j/4 - (s.g_i)(s.g_j)/hbar^2 + (i/(2 hbar)) s.(g_i x g_j)``, ``s = hbar n/2``."""
    if f.components != 2:
        raise ValueError("closed form needs a two-level field")
    g = f.gamma if gamma is None else gamma
    _, vec = su2_image(g)  # (..., d, 3)
    s = 0.5 * f.hbar * f.bloch()
    sg = np.einsum("...s,...is->...i", s, vec)
    cross = np.cross(vec[..., :, None, :], vec[..., None, :, :])
    return (
        0.25 * np.einsum("...is,...js->...ij", vec, vec)
        - sg[..., :, None] * sg[..., None, :] / f.hbar**2
        + (0.5j / f.hbar) * np.einsum("...s,...ijs->...ij", s, cross)
    )


def qgt_closed_form_check(f: ParametrizedStateField, tol: float = 1e-9) -> CheckReport:
    closed = qgt_two_level_closed_form(f)
    res = np.abs(gamma_covariance(f) - closed)
    return CheckReport(
        "qgt_two_level_closed_form", float(res.max()), tol, _location(f.grid, res), f.grid.meta(),
        {"qgt_vs_closed_form": float(np.max(np.abs(f.Q - closed)))},
    )


def curvature_check(f: ParametrizedStateField, tol: float = 1e-8) -> CheckReport:
    res = np.abs(berry_curvature(f, "qgt") - berry_curvature(f, "curl"))
    return CheckReport("curvature_two_formulas", float(res.max()), tol, _location(f.grid, res), f.grid.meta())


def qgt_uncertainty_check(f: ParametrizedStateField, slack: float = 1e-12) -> CheckReport:
    """Schrodinger ``Q_ii Q_jj >= |Q_ij|^2`` and Robertson ``sqrt(Q_ii Q_jj) >= |Im Q_ij|``.

    ``max_residual`` is the worst violation (0 when both hold everywhere);
    the minimal margins are reported in ``extra``.
    """
    if f.dim < 2:
        raise ValueError("uncertainty relations need d >= 2")
    Q = qgt(f).Q
    diag = np.real(np.diagonal(Q, axis1=-2, axis2=-1))
    prod = diag[..., :, None] * diag[..., None, :]
    schr = prod - np.abs(Q) ** 2
    rob = np.sqrt(np.clip(prod, 0.0, None)) - np.abs(Q.imag)
    worst = np.minimum(schr, rob)
    violation = np.clip(-worst, 0.0, None)
    loc = _location(f.grid, worst.min(axis=(-1, -2))) if np.any(violation > 0) else None
    return CheckReport(
        "qgt_uncertainty",
        float(violation.max()),
        slack,
        loc,
        f.grid.meta(),
        {"min_schrodinger_margin": float(schr.min()), "min_robertson_margin": float(rob.min()),
         "min_diagonal": float(diag.min())},
    )


def takabayasi_tensor(n, grid: Grid) -> np.ndarray:
    """``T_ij = n . (d_i n x d_j n)`` for a unit-vector field ``n`` (``grid.shape + (3,)``)."""
    n = np.asarray(n, dtype=float)
    if np.max(np.abs(np.linalg.norm(n, axis=-1) - 1.0)) > 1e-8:
        raise ValueError("Takabayasi tensor needs a pure-state (unit) Bloch field; mixed state rejected")
    dn = np.stack([spectral_derivative(n, grid, i) for i in range(grid.dim)], axis=-2)
    cross = np.cross(dn[..., :, None, :], dn[..., None, :, :])
    return np.einsum("...s,...ijs->...ij", n, cross)


def takabayasi_vector(n, grid: Grid) -> np.ndarray:
    """Hodge dual ``T_c = eps_cij T_ij / 2`` in d = 3 (``T_3`` only, as a 1-vector, in d = 2)."""
    T = takabayasi_tensor(n, grid)
    if grid.dim == 2:
        return T[..., 0, 1][..., None]
    return np.stack([T[..., 1, 2], T[..., 2, 0], T[..., 0, 1]], axis=-1)


def takabayasi_check(f: ParametrizedStateField, tol: float = 1e-7) -> CheckReport:
    """Max ``|B_ij - (hbar/2) n.(d_i n x d_j n)|`` with ``B`` from the QGT."""
    if f.components != 2 or f.dim not in (2, 3):
        raise ValueError("Takabayasi check needs a two-level field over d = 2 or 3")
    B = qgt(f).curvature
    T = takabayasi_tensor(f.bloch(), f.grid)
    res = np.abs(B - 0.5 * f.hbar * T)
    return CheckReport("takabayasi_mermin_ho", float(res.max()), tol, _location(f.grid, res), f.grid.meta())


# -- random and analytic test fields -----------------------------------------


def parameter_grid(n: int = 64, dim: int = 2) -> Grid:
    return Grid.uniform(PARAM_BOX[0], PARAM_BOX[1], n, dim)


def random_smooth_field(rng: np.random.Generator, grid: Grid, modes: int = 2, components: int = 2,
                        amplitude: float = 0.3, hbar: float = 1.0) -> ParametrizedStateField:
    """Normalised random trigonometric polynomial of degree ``modes`` per axis.

    A random constant unit spinor is added and the oscillating part is
    capped at ``amplitude`` in norm, so for ``amplitude < 1`` the raw field
    stays away from zero and its normalisation is well resolved.
    """
    mesh = grid.mesh()
    L = np.array(grid.lengths)
    ks = np.array(np.meshgrid(*[np.arange(-modes, modes + 1)] * grid.dim, indexing="ij")).reshape(grid.dim, -1).T
    ks = ks[np.any(ks != 0, axis=1)]
    coef = (rng.normal(size=(len(ks), components)) + 1j * rng.normal(size=(len(ks), components)))
    coef *= amplitude / np.sqrt(2 * len(ks))
    base = rng.normal(size=components) + 1j * rng.normal(size=components)
    base /= np.linalg.norm(base)
    phase_arg = sum(mesh[i][..., None] * (2 * np.pi * ks[:, i] / L[i]) for i in range(grid.dim))
    osc = np.einsum("...m,mc->...c", np.exp(1j * phase_arg), coef)
    peak = np.max(np.linalg.norm(osc, axis=-1))
    if peak > amplitude:
        osc *= amplitude / peak
    return ParametrizedStateField.normalized(grid, base + osc, hbar)


def bloch_sphere_field(grid: Grid, theta, phi, hbar: float = 1.0) -> ParametrizedStateField:
    """``psi = (cos(theta/2), sin(theta/2) exp(i phi))`` for angle fields on the grid."""
    psi = np.stack([np.cos(0.5 * theta), np.sin(0.5 * theta) * np.exp(1j * phi)], axis=-1)
    return ParametrizedStateField(grid, psi, hbar)


def bloch_sphere_closed_form(theta_grad, phi_grad, theta, hbar: float = 1.0):
    """Metric and curvature of the Bloch-sphere pullback.

    ``theta_grad`` and ``phi_grad`` have shape ``grid.shape + (d,)``.
    Returns ``(T, B)`` with ``T = (dth dth + sin^2 th dph dph)/4`` and
    ``B_ij = (hbar/2) sin th (d_i th d_j ph - d_j th d_i ph)``.
    """
    tt = theta_grad[..., :, None] * theta_grad[..., None, :]
    pp = phi_grad[..., :, None] * phi_grad[..., None, :]
    tp = theta_grad[..., :, None] * phi_grad[..., None, :]
    s = np.sin(theta)[..., None, None]
    return 0.25 * (tt + s**2 * pp), 0.5 * hbar * s * (tp - np.swapaxes(tp, -1, -2))


def random_bloch_angles(rng: np.random.Generator, grid: Grid, modes: int = 2):
    """Smooth periodic ``theta``, ``phi`` fields with analytic gradients.

    ``phi`` may wind an integer number of times around each axis.
    """
    mesh = grid.mesh()
    L = np.array(grid.lengths)
    theta = np.full(grid.shape, rng.uniform(0.6, 2.5))
    phi = np.zeros(grid.shape)
    dth = np.zeros(grid.shape + (grid.dim,))
    dph = np.zeros(grid.shape + (grid.dim,))
    for i in range(grid.dim):
        w = int(rng.integers(-1, 2))
        k0 = 2 * np.pi / L[i]
        phi += w * k0 * mesh[i]
        dph[..., i] += w * k0
        for m in range(1, modes + 1):
            a, b, c, e = rng.normal(scale=0.3 / m, size=4)
            arg = m * k0 * mesh[i]
            theta += a * np.sin(arg) + b * np.cos(arg)
            dth[..., i] += m * k0 * (a * np.cos(arg) - b * np.sin(arg))
            phi += c * np.sin(arg) + e * np.cos(arg)
            dph[..., i] += m * k0 * (c * np.cos(arg) - e * np.sin(arg))
    return theta, phi, dth, dph


def bloch_closed_form_check(rng, grid: Grid, hbar=1.0, tol=1e-8) -> CheckReport:
    theta, phi, dth, dph = random_bloch_angles(rng, grid)
    f = bloch_sphere_field(grid, theta, phi, hbar)
    T, B = bloch_sphere_closed_form(dth, dph, theta, hbar)
    q = qgt(f)
    res = np.maximum(np.abs(q.metric - T), np.abs(q.curvature - B))
    return CheckReport("bloch_sphere_closed_form", float(res.max()), tol, _location(grid, res), grid.meta())


def hedgehog_field(grid: Grid, eps: float = 0.8, hbar: float = 1.0) -> ParametrizedStateField:
    """``(1, eps (sin x + i sin y))`` normalised: ``n`` covers a cap of the sphere twice per cell."""
    X, Y = grid.mesh()[:2]
    psi = np.stack([np.ones_like(X, dtype=complex), eps * (np.sin(X) + 1j * np.sin(Y))], axis=-1)
    return ParametrizedStateField.normalized(grid, psi, hbar)


# -- Berry phase --------------------------------------------------------------


def circle_loop(center=(0.0, 0.0), radius: float = 1.0, points: int = 512, start: float = 0.0) -> np.ndarray:
    t = start + 2 * np.pi * np.arange(points) / points
    return np.stack([center[0] + radius * np.cos(t), center[1] + radius * np.sin(t)], axis=-1)


def berry_phase_loop(h: TwoLevelHamiltonian, loop, band: str = "lower", min_gap: float = 1e-8) -> float:
    """Discrete Berry phase ``-Im log prod_k <v_k|v_(k+1)>`` around a closed loop, in (-pi, pi]."""
    loop = np.asarray(loop, dtype=float)
    if loop.ndim != 2 or loop.shape[1] != h.dim:
        raise ValueError(f"loop must have shape (K, {h.dim})")
    if loop.shape[0] < 64:
        raise ValueError("Berry phase loop needs at least 64 points")
    if band not in ("lower", "upper"):
        raise ValueError("band must be 'lower' or 'upper'")
    nb = np.linalg.norm(h.vector(loop), axis=-1)
    if np.any(nb < min_gap):
        k = int(np.argmin(nb))
        raise ValueError(f"loop passes within {nb[k]:.3g} of a degeneracy at point {k}")
    bo = bo_surfaces(h, loop)
    v = bo.v_lower if band == "lower" else bo.v_upper
    ov = np.einsum("ki,ki->k", np.conj(v), np.roll(v, -1, axis=0))
    # product of unit-modulus-normalised overlaps avoids underflow on long loops
    phase = -float(np.angle(np.prod(ov / np.abs(ov))))
    if phase <= -np.pi:
        phase += 2 * np.pi
    return phase
