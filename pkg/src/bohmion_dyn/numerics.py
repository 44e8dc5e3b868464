"""Grids, quadrature, spectral derivatives, 2x2 algebra and Verlet stepping."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import NumericalError

# Pauli matrices, index 0..2 = x, y, z
SIGMA = np.array(
    [
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)
IDENTITY2 = np.eye(2, dtype=complex)


@dataclass(frozen=True)
class Grid:
    """Uniform periodic rectangular grid with cell-centred nodes.

    Node ``j`` along an axis sits at ``lower + (j + 1/2) * h`` with
    ``h = (upper - lower) / n``, so the node set is symmetric about the box
    centre and the plain sum ``sum(f) * prod(h)`` is the midpoint rule.
    """

    lower: tuple
    upper: tuple
    shape: tuple
    periodic: bool = True

    def __post_init__(self):
        lower = tuple(float(v) for v in np.atleast_1d(self.lower))
        upper = tuple(float(v) for v in np.atleast_1d(self.upper))
        shape = tuple(int(v) for v in np.atleast_1d(self.shape))
        if not (len(lower) == len(upper) == len(shape)):
            raise ValueError("lower, upper and shape must have the same length")
        if not 1 <= len(shape) <= 3:
            raise ValueError(f"grid dimension must be 1, 2 or 3, got {len(shape)}")
        for i, (lo, hi, n) in enumerate(zip(lower, upper, shape)):
            if n < 8:
                raise ValueError(f"axis {i}: need at least 8 points, got {n}")
            if not hi > lo:
                raise ValueError(f"axis {i}: upper bound must exceed lower bound")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "shape", shape)

    @classmethod
    def uniform(cls, lower, upper, n, dim=1):
        return cls((lower,) * dim, (upper,) * dim, (n,) * dim)

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def spacing(self) -> tuple:
        return tuple((hi - lo) / n for lo, hi, n in zip(self.lower, self.upper, self.shape))

    @property
    def lengths(self) -> tuple:
        return tuple(hi - lo for lo, hi in zip(self.lower, self.upper))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def axis(self, i: int) -> np.ndarray:
        lo, h, n = self.lower[i], self.spacing[i], self.shape[i]
        return lo + (np.arange(n) + 0.5) * h

    def axes(self) -> list:
        return [self.axis(i) for i in range(self.dim)]

    def mesh(self) -> list:
        return np.meshgrid(*self.axes(), indexing="ij")

    def points(self) -> np.ndarray:
        """All nodes as an array of shape ``(size, dim)`` in C order."""
        return np.stack([m.ravel() for m in self.mesh()], axis=-1)

    def wavenumbers(self, i: int) -> np.ndarray:
        n, h = self.shape[i], self.spacing[i]
        return 2.0 * np.pi * np.fft.fftfreq(n, d=h)

    def refined(self, factor: int = 2) -> "Grid":
        return Grid(self.lower, self.upper, tuple(n * factor for n in self.shape), self.periodic)

    def meta(self) -> dict:
        return {
            "dim": self.dim,
            "lower": list(self.lower),
            "upper": list(self.upper),
            "shape": list(self.shape),
            "spacing": list(self.spacing),
            "periodic": self.periodic,
        }


@dataclass
class GridField:
    """Scalar (``components == 1``) or spinor field sampled on a grid.

    ``values`` has shape ``grid.shape`` for scalars and
    ``grid.shape + (components,)`` otherwise.
    """

    grid: Grid
    values: np.ndarray
    components: int = field(default=1)

    def __post_init__(self):
        self.values = np.asarray(self.values)
        expected = self.grid.shape if self.components == 1 else self.grid.shape + (self.components,)
        if self.values.shape != expected:
            raise ValueError(f"field shape {self.values.shape} does not match grid {expected}")
        if not np.all(np.isfinite(self.values)):
            raise NumericalError("non-finite entries in field")


def quadrature(values, grid: Grid) -> float:
    """Midpoint-rule integral over the grid box.

    Trailing axes beyond ``grid.dim`` are summed as well, so a spinor density
    can be passed directly.
    """
    values = np.asarray(values)
    if not np.all(np.isfinite(values)):
        raise NumericalError("NaN in integrand")
    return float(np.sum(values) * grid.cell_volume) if np.isrealobj(values) else complex(
        np.sum(values) * grid.cell_volume
    )


def spectral_derivative(values, grid: Grid, axis: int, order: int = 1) -> np.ndarray:
    """Fourier derivative of a periodic field along ``axis``.

    For odd-order derivatives the Nyquist mode is zeroed so that real fields
    stay real and the operator stays exactly anti-self-adjoint.
    """
    if not grid.periodic:
        raise ValueError("spectral derivatives need a periodic grid")
    if not 0 <= axis < grid.dim:
        raise IndexError(f"axis {axis} out of range for a {grid.dim}-d grid")
    values = np.asarray(values)
    k = grid.wavenumbers(axis)
    factor = (1j * k) ** order
    n = grid.shape[axis]
    if order % 2 == 1 and n % 2 == 0:
        factor[n // 2] = 0.0
    bshape = [1] * values.ndim
    bshape[axis] = n
    out = np.fft.ifft(np.fft.fft(values, axis=axis) * factor.reshape(bshape), axis=axis)
    if np.isrealobj(values):
        return out.real
    return out


def gradient(values, grid: Grid) -> np.ndarray:
    """Spectral gradient; the derivative index is the last axis."""
    return np.stack([spectral_derivative(values, grid, i) for i in range(grid.dim)], axis=-1)


def laplacian(values, grid: Grid) -> np.ndarray:
    return sum(spectral_derivative(values, grid, i, order=2) for i in range(grid.dim))


# -- two-level algebra -------------------------------------------------------


def pauli_decompose(H):
    """Split (a stack of) 2x2 matrices into ``a * 1 + b . sigma``.

    Returns ``(a, b)`` with ``b`` of shape ``(..., 3)``. Both are complex in
    general; for Hermitian input they are real up to rounding.
    """
    H = np.asarray(H)
    a = 0.5 * (H[..., 0, 0] + H[..., 1, 1])
    bx = 0.5 * (H[..., 0, 1] + H[..., 1, 0])
    by = 0.5j * (H[..., 0, 1] - H[..., 1, 0])
    bz = 0.5 * (H[..., 0, 0] - H[..., 1, 1])
    return a, np.stack([bx, by, bz], axis=-1)


def pauli_compose(a, b):
    """Build ``a * 1 + b . sigma`` for broadcastable ``a`` and ``b[..., 3]``."""
    a = np.asarray(a)
    b = np.asarray(b)
    out = np.empty(np.broadcast_shapes(a.shape, b.shape[:-1]) + (2, 2), dtype=complex)
    out[..., 0, 0] = a + b[..., 2]
    out[..., 1, 1] = a - b[..., 2]
    out[..., 0, 1] = b[..., 0] - 1j * b[..., 1]
    out[..., 1, 0] = b[..., 0] + 1j * b[..., 1]
    return out


def is_hermitian(H, tol: float = 1e-14) -> bool:
    H = np.asarray(H)
    return bool(np.max(np.abs(H - np.conj(np.swapaxes(H, -1, -2))), initial=0.0) <= tol)


def expm_two_level(H, dt: float, hbar: float = 1.0) -> np.ndarray:
    """Closed-form ``exp(-i dt H / hbar)`` for Hermitian 2x2 matrices.

    With ``H = a 1 + b.sigma`` this is
    ``exp(-i a dt/hbar) (cos(|b| dt/hbar) 1 - i sin(|b| dt/hbar) bhat.sigma)``.
    Accepts a single matrix or a stack ``(..., 2, 2)``.
    """
    H = np.asarray(H, dtype=complex)
    if not (np.all(np.isfinite(H)) and np.isfinite(dt)):
        raise NumericalError("non-finite input to expm_two_level")
    a, b = pauli_decompose(H)
    a = a.real
    b = b.real
    tau = dt / hbar
    theta = np.sqrt(np.sum(b * b, axis=-1)) * tau
    # sin(theta)/theta, smooth through theta = 0
    sinc = np.sinc(theta / np.pi)
    coeff = np.asarray(-1j * tau * sinc)
    U = pauli_compose(np.cos(theta), coeff[..., None] * b)
    return np.exp(-1j * a * tau)[..., None, None] * U


def conjugate_by(U, rho):
    """``U rho U^dagger`` for single matrices or stacks."""
    return U @ rho @ np.conj(np.swapaxes(U, -1, -2))


# -- Verlet -----------------------------------------------------------------


def verlet_step(
    q,
    p,
    force_fn: Callable[[np.ndarray], np.ndarray],
    mass,
    dt: float,
    force=None,
):
    """One kick-drift-kick Stormer-Verlet step.

    ``mass`` broadcasts against ``q``. A precomputed force at ``q`` may be
    passed to save one evaluation. Returns ``(q, p)``.
    """
    mass = np.asarray(mass, dtype=float)
    if np.any(mass <= 0):
        raise ValueError("masses must be positive")
    f0 = force_fn(q) if force is None else force
    _check_force(f0)
    p_half = p + 0.5 * dt * f0
    q_new = q + dt * p_half / mass
    f1 = force_fn(q_new)
    _check_force(f1)
    return q_new, p_half + 0.5 * dt * f1


def _check_force(f):
    if not np.all(np.isfinite(f)):
        raise NumericalError("force evaluation returned non-finite values; step aborted")


def random_unit_spinors(rng: np.random.Generator, count: int, n: int = 2) -> np.ndarray:
    v = rng.normal(size=(count, n)) + 1j * rng.normal(size=(count, n))
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


__all__: Sequence[str] = [
    "SIGMA",
    "IDENTITY2",
    "Grid",
    "GridField",
    "quadrature",
    "spectral_derivative",
    "gradient",
    "laplacian",
    "pauli_decompose",
    "pauli_compose",
    "is_hermitian",
    "expm_two_level",
    "conjugate_by",
    "verlet_step",
]
