"""External potentials for the single-surface Bohmion model.

Only closed families are supported (plus a tabulated 1-D potential with a cubic
spline gradient) so that scenario files never carry executable code.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline


class Potential:
    def value(self, q) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, q) -> np.ndarray:
        raise NotImplementedError

    def spec(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class ZeroPotential(Potential):
    def value(self, q):
        return np.zeros(np.shape(q)[:-1])

    def gradient(self, q):
        return np.zeros(np.shape(q))

    def spec(self):
        return {"family": "none"}


@dataclass(frozen=True)
class HarmonicPotential(Potential):
    """``m omega^2 |q - center|^2 / 2``."""

    mass: float = 1.0
    omega: float = 1.0
    center: float = 0.0

    def value(self, q):
        x = np.asarray(q, dtype=float) - self.center
        return 0.5 * self.mass * self.omega**2 * np.sum(x * x, axis=-1)

    def gradient(self, q):
        return self.mass * self.omega**2 * (np.asarray(q, dtype=float) - self.center)

    def spec(self):
        return {"family": "harmonic", "omega": self.omega, "center": self.center}


@dataclass(frozen=True)
class DoubleWellPotential(Potential):
    """Quartic double well ``depth * (|q|^2 - x0^2)^2 / x0^4``."""

    depth: float = 1.0
    x0: float = 1.0

    def value(self, q):
        q = np.asarray(q, dtype=float)
        s = np.sum(q * q, axis=-1) - self.x0**2
        return self.depth * s * s / self.x0**4

    def gradient(self, q):
        q = np.asarray(q, dtype=float)
        s = np.sum(q * q, axis=-1, keepdims=True) - self.x0**2
        return 4.0 * self.depth * s * q / self.x0**4

    def spec(self):
        return {"family": "double_well", "depth": self.depth, "x0": self.x0}


class TabulatedPotential(Potential):
    """1-D potential from samples, interpolated by a not-a-knot cubic spline."""

    def __init__(self, x, v):
        self.x = np.asarray(x, dtype=float)
        self.v = np.asarray(v, dtype=float)
        self._spline = CubicSpline(self.x, self.v)
        self._deriv = self._spline.derivative()

    def value(self, q):
        q = np.asarray(q, dtype=float)
        if q.shape[-1] != 1:
            raise ValueError("tabulated potentials are one-dimensional")
        return self._spline(q[..., 0])

    def gradient(self, q):
        q = np.asarray(q, dtype=float)
        return self._deriv(q[..., 0])[..., None]

    def spec(self):
        return {"family": "tabulated", "x": self.x.tolist(), "v": self.v.tolist()}
