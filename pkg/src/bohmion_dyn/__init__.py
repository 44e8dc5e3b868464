"""Bohmion trajectory dynamics with grid-based quantum references.

Main entry points:

* :class:`SingleSurfaceSystem`, :class:`EFBohmionSystem` and :func:`integrate`
  for kernel-regularised Bohmion trajectories;
* :mod:`bohmion_dyn.grid_reference` for split-step solvers and the
  Madelung / exact-factorisation / cold-fluid extractions;
* :mod:`bohmion_dyn.geometry` for quantum-geometric-tensor diagnostics and
  Berry phases;
* ``bohmion-dyn`` (:mod:`bohmion_dyn.cli`) for scenario files and the
  verification suite.
"""
from ._accel import backend, get_threads, set_threads
from ._version import __version__
from .dynamics import (
    EFBohmionSystem,
    EhrenfestState,
    SingleSurfaceSystem,
    ef_bohmion_energy,
    ef_bohmion_force,
    electronic_flow,
    integrate,
    integrate_ehrenfest,
    single_surface_energy,
    single_surface_force,
    step_ef_bohmion,
    step_single_surface,
)
from .electronic import TwoLevelHamiltonian, bo_surfaces, bloch_from_rho, rho_from_bloch
from .errors import BohmionError, ConfigError, NumericalAbort, NumericalError
from .kernels import BohmionEnsemble, Kernel, check_admissible, pair_integrals, smoothed_density
from .numerics import Grid, quadrature, spectral_derivative
from .potentials import DoubleWellPotential, HarmonicPotential, TabulatedPotential, ZeroPotential

__all__ = [
    "__version__",
    "backend",
    "get_threads",
    "set_threads",
    "EFBohmionSystem",
    "EhrenfestState",
    "SingleSurfaceSystem",
    "ef_bohmion_energy",
    "ef_bohmion_force",
    "electronic_flow",
    "integrate",
    "integrate_ehrenfest",
    "single_surface_energy",
    "single_surface_force",
    "step_ef_bohmion",
    "step_single_surface",
    "TwoLevelHamiltonian",
    "bo_surfaces",
    "bloch_from_rho",
    "rho_from_bloch",
    "BohmionError",
    "ConfigError",
    "NumericalAbort",
    "NumericalError",
    "BohmionEnsemble",
    "Kernel",
    "check_admissible",
    "pair_integrals",
    "smoothed_density",
    "Grid",
    "quadrature",
    "spectral_derivative",
    "DoubleWellPotential",
    "HarmonicPotential",
    "TabulatedPotential",
    "ZeroPotential",
]
