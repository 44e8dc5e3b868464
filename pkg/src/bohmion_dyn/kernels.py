"""Smoothing kernels and the regularised pair integrals behind Bohmion forces.

The central quantity is

    I_ab = int grad K(r - q_a) . grad K(r - q_b) / Dbar(r) dr,
    Dbar(r) = sum_c w_c K(r - q_c),

evaluated by the midpoint rule on a shared grid. All pair integrals of an
ensemble come out of one sweep over the grid (the denominator is shared), and
the same sweep can also return the gradient of a quadratic form
``sum_bc C_bc I_bc`` with respect to every position.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _accel
from ._accel import njit, prange
from .errors import NumericalError
from .numerics import Grid, is_hermitian, pauli_compose

GAUSSIAN, HELMHOLTZ1D = 0, 1
_FAMILY_CODES = {"gaussian": GAUSSIAN, "helmholtz1d": HELMHOLTZ1D}
DEFAULT_REL_FLOOR = 1e-14


@dataclass(frozen=True)
class Kernel:
    family: str = "gaussian"
    width: float = 1.0
    dim: int = 1

    def __post_init__(self):
        if self.family not in _FAMILY_CODES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if not self.width > 0:
            raise ValueError("kernel width must be positive")
        if self.dim not in (1, 2, 3):
            raise ValueError("kernel dimension must be 1, 2 or 3")
        if self.family == "helmholtz1d" and self.dim != 1:
            raise ValueError("helmholtz1d kernel is only defined in one dimension")

    @property
    def code(self) -> int:
        return _FAMILY_CODES[self.family]

    @property
    def smooth(self) -> bool:
        return self.family == "gaussian"

    @property
    def norm(self) -> float:
        if self.family == "gaussian":
            return (2.0 * np.pi * self.width**2) ** (-0.5 * self.dim)
        return 0.5 / self.width


def kernel_eval(kernel: Kernel, r) -> np.ndarray:
    """Kernel value at displacement(s) ``r`` of shape ``(..., dim)``."""
    r = np.asarray(r, dtype=float)
    alpha = kernel.width
    if kernel.family == "gaussian":
        return kernel.norm * np.exp(-0.5 * np.sum(r * r, axis=-1) / alpha**2)
    return kernel.norm * np.exp(-np.abs(r[..., 0]) / alpha)


def kernel_grad(kernel: Kernel, r) -> np.ndarray:
    """Gradient with respect to ``r``; the helmholtz kink at 0 maps to 0."""
    r = np.asarray(r, dtype=float)
    K = kernel_eval(kernel, r)[..., None]
    alpha = kernel.width
    if kernel.family == "gaussian":
        return -r / alpha**2 * K
    return -np.sign(r) / alpha * K


def kernel_hessian(kernel: Kernel, r) -> np.ndarray:
    """Second derivatives, Gaussian only (the helmholtz kernel has a kink)."""
    if not kernel.smooth:
        raise ValueError("kernel_hessian needs a twice-differentiable kernel")
    r = np.asarray(r, dtype=float)
    alpha2 = kernel.width**2
    K = kernel_eval(kernel, r)[..., None, None]
    eye = np.eye(r.shape[-1])
    return (r[..., :, None] * r[..., None, :] / alpha2**2 - eye / alpha2) * K


@dataclass
class BohmionEnsemble:
    """Weights, positions and momenta of N Bohmions.

    ``rho`` (optional) holds one 2x2 electronic matrix per Bohmion. Under the
    default ``rho_trace="weight"`` convention ``Tr rho_a = w_a``; with
    ``"unit"`` each trace is 1.
    """

    weights: np.ndarray
    positions: np.ndarray
    momenta: Optional[np.ndarray] = None
    rho: Optional[np.ndarray] = None
    rho_trace: str = "weight"
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim == 1:
            pos = pos.reshape(len(self.weights), -1)
        self.positions = pos
        if self.momenta is None:
            self.momenta = np.zeros_like(pos)
        self.momenta = np.asarray(self.momenta, dtype=float).reshape(pos.shape)
        if self.rho is not None:
            self.rho = np.asarray(self.rho, dtype=complex).reshape(len(self.weights), 2, 2)
        if self.rho_trace not in ("weight", "unit"):
            raise ValueError("rho_trace must be 'weight' or 'unit'")
        if self.validate:
            self.check()

    @property
    def count(self) -> int:
        return len(self.weights)

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    def target_traces(self) -> np.ndarray:
        return self.weights.copy() if self.rho_trace == "weight" else np.ones(self.count)

    def check(self, tol: float = 1e-12) -> None:
        w = self.weights
        if w.size < 1:
            raise ValueError("ensemble needs at least one Bohmion")
        if np.any(w <= 0):
            raise ValueError("Bohmion weights must be positive")
        if abs(w.sum() - 1.0) > tol:
            raise ValueError(f"weights must sum to 1 (got {w.sum():.16g})")
        if self.positions.shape[0] != w.size:
            raise ValueError("one position per weight required")
        for name, arr in (("positions", self.positions), ("momenta", self.momenta)):
            if not np.all(np.isfinite(arr)):
                raise NumericalError(f"non-finite {name}")
        if self.rho is not None:
            if not is_hermitian(self.rho, 1e-13):
                raise ValueError("electronic matrices must be Hermitian")
            tr = np.trace(self.rho, axis1=-2, axis2=-1).real
            bad = np.flatnonzero(np.abs(tr - self.target_traces()) > tol)
            if bad.size:
                raise ValueError(
                    f"Bohmion {bad[0]}: Tr rho = {tr[bad[0]]:.16g} violates the "
                    f"{self.rho_trace!r} trace convention"
                )
            evals = np.linalg.eigvalsh(self.rho)
            if np.any(evals < -tol):
                raise ValueError("electronic matrices must be positive semidefinite")

    @classmethod
    def from_bloch(cls, weights, positions, momenta=None, bloch=None, rho_trace="weight"):
        """Build an ensemble whose electronic matrices are ``(t/2)(1 + n.sigma)``."""
        weights = np.asarray(weights, dtype=float).reshape(-1)
        rho = None
        if bloch is not None:
            n = np.asarray(bloch, dtype=float).reshape(len(weights), 3)
            t = weights if rho_trace == "weight" else np.ones_like(weights)
            rho = pauli_compose(0.5 * t, 0.5 * t[:, None] * n)
        return cls(weights, positions, momenta, rho, rho_trace)

    def copy(self) -> "BohmionEnsemble":
        return BohmionEnsemble(
            self.weights.copy(),
            self.positions.copy(),
            self.momenta.copy(),
            None if self.rho is None else self.rho.copy(),
            self.rho_trace,
            validate=False,
        )


def check_admissible(positions, kernel: Kernel, grid: Grid, margin: float = 4.0) -> None:
    """Every Bohmion must sit at least ``margin`` kernel widths inside the box."""
    pos = np.asarray(positions, dtype=float)
    if pos.shape[1] != grid.dim or kernel.dim != grid.dim:
        raise ValueError("ensemble, kernel and grid dimensions disagree")
    lo = np.asarray(grid.lower) + margin * kernel.width
    hi = np.asarray(grid.upper) - margin * kernel.width
    ok = np.all((pos >= lo) & (pos <= hi), axis=1)
    if ok.all():
        return
    a = int(np.flatnonzero(~ok)[0])
    if not np.all(np.isfinite(pos[a])):
        raise NumericalError(f"Bohmion {a} has a non-finite position")
    raise ValueError(
        f"Bohmion {a} at {pos[a].tolist()} is closer than {margin:g} kernel widths to the grid boundary"
    )


def smoothed_density(ensemble: BohmionEnsemble, kernel: Kernel, grid: Grid, check: bool = True):
    """``Dbar(r) = sum_a w_a K(r - q_a)`` sampled on the grid."""
    if check:
        check_admissible(ensemble.positions, kernel, grid)
    X = grid.points()
    disp = X[None, :, :] - ensemble.positions[:, None, :]
    D = np.einsum("a,ap->p", ensemble.weights, kernel_eval(kernel, disp))
    return D.reshape(grid.shape)


# -- pair integrals: numba path ---------------------------------------------


@njit(cache=True)
def _density_nb(X, Q, w, family, alpha, norm):
    """Kernel table ``K[a, p]`` and the smoothed density at every node."""
    P, d = X.shape
    N = Q.shape[0]
    Kt = np.empty((N, P))
    D = np.zeros(P)
    inv2a2 = 0.5 / (alpha * alpha)
    for a in range(N):
        for p in range(P):
            if family == GAUSSIAN:
                s = 0.0
                for k in range(d):
                    t = X[p, k] - Q[a, k]
                    s += t * t
                Kt[a, p] = norm * np.exp(-s * inv2a2)
            else:
                Kt[a, p] = norm * np.exp(-abs(X[p, 0] - Q[a, 0]) / alpha)
            D[p] += w[a] * Kt[a, p]
    return Kt, D


@njit(cache=True)
def _accumulate_range(X, Q, w, family, alpha, Kt, Dbar, floor, C, want_grad, start, stop, I, dU):
    P, d = X.shape
    N = Q.shape[0]
    g = np.empty((N, d))
    r = np.empty((N, d))
    Gc = np.empty((N, d))
    a2 = alpha * alpha
    a4 = a2 * a2
    for p in range(start, stop):
        den = Dbar[p]
        floored = den <= floor
        if floored:
            den = floor
        if den <= 0.0:
            continue
        inv = 1.0 / den
        for a in range(N):
            Ka = Kt[a, p]
            if family == GAUSSIAN:
                for k in range(d):
                    r[a, k] = X[p, k] - Q[a, k]
                    g[a, k] = -r[a, k] / a2 * Ka
            else:
                r[a, 0] = X[p, 0] - Q[a, 0]
                if r[a, 0] > 0.0:
                    g[a, 0] = -Ka / alpha
                elif r[a, 0] < 0.0:
                    g[a, 0] = Ka / alpha
                else:
                    g[a, 0] = 0.0
        for a in range(N):
            for b in range(a, N):
                s = 0.0
                for k in range(d):
                    s += g[a, k] * g[b, k]
                I[a, b] += s * inv
        if want_grad:
            S = 0.0
            for a in range(N):
                for k in range(d):
                    s = 0.0
                    for c in range(N):
                        s += C[a, c] * g[c, k]
                    Gc[a, k] = s
                    S += g[a, k] * s
            for a in range(N):
                rG = 0.0
                for k in range(d):
                    rG += r[a, k] * Gc[a, k]
                for k in range(d):
                    hg = Kt[a, p] * (r[a, k] * rG / a4 - Gc[a, k] / a2)
                    dU[a, k] -= 2.0 * hg * inv
                    if not floored:
                        dU[a, k] += w[a] * g[a, k] * S * inv * inv


@njit(cache=True)
def _pair_integrals_nb(X, Q, w, family, alpha, norm, rel_floor, vol, C, want_grad):
    P, d = X.shape
    N = Q.shape[0]
    Kt, Dbar = _density_nb(X, Q, w, family, alpha, norm)
    floor = rel_floor * Dbar.max()
    I = np.zeros((N, N))
    dU = np.zeros((N, d))
    _accumulate_range(X, Q, w, family, alpha, Kt, Dbar, floor, C, want_grad, 0, P, I, dU)
    for a in range(N):
        for b in range(a + 1, N):
            I[b, a] = I[a, b]
    return I * vol, dU * vol


_NCHUNKS = 16


@njit(cache=True, parallel=True)
def _pair_integrals_par(X, Q, w, family, alpha, norm, rel_floor, vol, C, want_grad):
    # Fixed chunking: results are bitwise reproducible for any thread count.
    P, d = X.shape
    N = Q.shape[0]
    Kt, Dbar = _density_nb(X, Q, w, family, alpha, norm)
    floor = rel_floor * Dbar.max()
    Ic = np.zeros((_NCHUNKS, N, N))
    dUc = np.zeros((_NCHUNKS, N, d))
    step = (P + _NCHUNKS - 1) // _NCHUNKS
    for c in prange(_NCHUNKS):
        start = c * step
        stop = min(P, start + step)
        _accumulate_range(X, Q, w, family, alpha, Kt, Dbar, floor, C, want_grad, start, stop, Ic[c], dUc[c])
    I = np.zeros((N, N))
    dU = np.zeros((N, d))
    for c in range(_NCHUNKS):
        I += Ic[c]
        dU += dUc[c]
    for a in range(N):
        for b in range(a + 1, N):
            I[b, a] = I[a, b]
    return I * vol, dU * vol


# -- pair integrals: numpy path ---------------------------------------------


def _pair_integrals_np(X, Q, w, kernel: Kernel, rel_floor, vol, C, want_grad):
    r = X[None, :, :] - Q[:, None, :]
    K = kernel_eval(kernel, r)
    g = kernel_grad(kernel, r)
    Dbar = w @ K
    floor = rel_floor * Dbar.max()
    floored = Dbar <= floor
    den = np.where(floored, floor, Dbar)
    live = den > 0
    inv = np.zeros_like(den)
    inv[live] = 1.0 / den[live]
    I = np.einsum("apk,bpk,p->ab", g, g, inv) * vol
    dU = np.zeros_like(Q)
    if want_grad:
        alpha2 = kernel.width**2
        Gc = np.einsum("ac,cpk->apk", C, g)
        S = np.einsum("apk,apk->p", g, Gc)
        rG = np.einsum("apk,apk->ap", r, Gc)
        hg = K[:, :, None] * (r * rG[:, :, None] / alpha2**2 - Gc / alpha2)
        inv2 = np.where(floored, 0.0, inv * inv)
        dU = (-2.0 * np.einsum("apk,p->ak", hg, inv) + w[:, None] * np.einsum("apk,p->ak", g, S * inv2)) * vol
    return I, dU


def pair_integrals(
    positions,
    weights,
    kernel: Kernel,
    grid: Grid,
    coeff=None,
    rel_floor: float = DEFAULT_REL_FLOOR,
    check: bool = True,
    points=None,
):
    """All pair integrals ``I`` and, if ``coeff`` is given, ``d/dq_a sum_bc C_bc I_bc``.

    Returns ``(I, dU)``; ``dU`` is ``None`` when no coefficient matrix is passed.
    ``coeff`` must be symmetric. ``points`` may carry a cached ``grid.points()``.
    """
    Q = np.ascontiguousarray(positions, dtype=float)
    w = np.ascontiguousarray(weights, dtype=float)
    if check:
        check_admissible(Q, kernel, grid)
    want_grad = coeff is not None
    if want_grad and not kernel.smooth:
        raise ValueError("gradients of pair integrals need a smooth (gaussian) kernel")
    C = np.zeros((len(w), len(w))) if coeff is None else np.ascontiguousarray(coeff, dtype=float)
    X = grid.points() if points is None else points
    vol = grid.cell_volume
    if _accel.USE_NUMBA:
        fn = _pair_integrals_par if _accel.get_threads() > 1 else _pair_integrals_nb
        I, dU = fn(X, Q, w, kernel.code, kernel.width, kernel.norm, rel_floor, vol, C, want_grad)
    else:
        I, dU = _pair_integrals_np(X, Q, w, kernel, rel_floor, vol, C, want_grad)
    if not np.all(np.isfinite(I)) or (want_grad and not np.all(np.isfinite(dU))):
        raise NumericalError("NaN in integrand")
    return I, (dU if want_grad else None)


def bohmion_integral(a, b, ensemble: BohmionEnsemble, kernel: Kernel, grid: Grid, rel_floor=DEFAULT_REL_FLOOR):
    """The single pair integral ``I_ab``."""
    I, _ = pair_integrals(ensemble.positions, ensemble.weights, kernel, grid, rel_floor=rel_floor)
    return float(I[a, b])


def bohmion_integral_grad(ensemble: BohmionEnsemble, kernel: Kernel, grid: Grid, rel_floor=DEFAULT_REL_FLOOR):
    """Full derivative tensor ``G[a, b, c, :] = d I_bc / d q_a``.

    Memory is ``O(N^3 * grid)``; this is the reference form used for checks,
    not the force path (which contracts on the fly, see ``pair_integrals``).
    """
    if not kernel.smooth:
        raise ValueError("gradients of pair integrals need a smooth (gaussian) kernel")
    check_admissible(ensemble.positions, kernel, grid)
    X = grid.points()
    Q = ensemble.positions
    w = ensemble.weights
    r = X[None, :, :] - Q[:, None, :]
    K = kernel_eval(kernel, r)
    g = kernel_grad(kernel, r)
    H = kernel_hessian(kernel, r)
    Dbar = w @ K
    floor = rel_floor * Dbar.max()
    floored = Dbar <= floor
    den = np.where(floored, floor, Dbar)
    inv = 1.0 / den
    inv2 = np.where(floored, 0.0, inv * inv)
    N = len(w)
    Hg = np.einsum("bpkl,cpl,p->bck", H, g, inv)  # int H_b g_c / Dbar
    G = np.zeros((N, N, N, Q.shape[1]))
    for a in range(N):
        G[a, a, :, :] -= Hg[a]
        G[a, :, a, :] -= Hg[a]
    G += np.einsum("a,apk,bpl,cpl,p->abck", w, g, g, g, inv2)
    return G * grid.cell_volume
