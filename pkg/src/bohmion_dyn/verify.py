"""Verification registry.

Every check belongs to one module (``core_numerics``, ``kernels``,
``electronic``, ``bohmion``, ``grid_reference``, ``geometry``, ``cli``) and
returns named measurements. A measurement passes when it is below its entry in
:data:`TOLERANCES` (or the acceptance table for the ``acceptance_*`` checks).

:func:`run_checks` writes

* ``verify_summary.csv``: ``module,check,measurement,value,tolerance,pass``,
  fully deterministic (no timings);
* ``verify_summary.json``: the same plus runtimes;
* one CSV per trajectory-like artifact a check produced.
"""
from __future__ import annotations

import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from . import acceptance as acc
from . import geometry as geo
from . import grid_reference as gr
from .dynamics import (
    EhrenfestState,
    SingleSurfaceSystem,
    ehrenfest_columns,
    integrate_ehrenfest,
    step_ef_bohmion,
    step_single_surface,
)
from .electronic import TwoLevelHamiltonian, bo_surfaces
from .io import write_csv, write_json
from .kernels import BohmionEnsemble, Kernel, pair_integrals
from .numerics import Grid, expm_two_level, pauli_compose, pauli_decompose, quadrature, spectral_derivative, verlet_step

MODULES = ("core_numerics", "kernels", "electronic", "bohmion", "grid_reference", "geometry", "cli")

TOLERANCES = {
    "core_numerics.quadrature_gaussian.abs_error": 1e-13,
    "core_numerics.spectral_derivative.max_error": 1e-12,
    "core_numerics.expm_two_level.unitarity": 1e-14,
    "core_numerics.expm_two_level.vs_scipy": 1e-13,
    "core_numerics.verlet_reversibility.max_error": 1e-12,
    "kernels.normalisation.abs_error": 1e-12,
    "kernels.pair_symmetry.max_asymmetry": 1e-14,
    "kernels.floor_sensitivity.rel_change": 1e-8,
    "electronic.pauli_roundtrip.max_error": 1e-15,
    "electronic.bo_eigen_residual.max_residual": 1e-13,
    "electronic.gradient_fd.max_rel_error": 1e-8,
    "bohmion.ehrenfest_conservation.norm_drift": 1e-12,
    "bohmion.ehrenfest_conservation.energy_rel_drift": 1e-5,
    "bohmion.ef_reversibility.max_error": 1e-12,
    "bohmion.momentum_conservation.abs_drift": 1e-12,
    "grid_reference.madelung_roundtrip.max_error": 1e-13,
    "grid_reference.split_step_reversibility.max_error": 1e-12,
    "geometry.berry_parametrisation.max_deviation": 1e-10,
    "geometry.hedgehog_takabayasi.max_residual": 1e-10,
    "cli.defaults_roundtrip.mismatches": 0.5,
    "cli.run_determinism.mismatches": 0.5,
}


@dataclass
class Check:
    module: str
    name: str
    func: Callable[[], tuple]  # -> (measurements dict, artifacts dict)
    acceptance: Optional[int] = None
    runtime_limit: Optional[float] = None

    @property
    def key(self) -> str:
        return f"{self.module}.{self.name}"


@dataclass
class Outcome:
    check: Check
    rows: list  # (measurement, value, tolerance, passed)
    runtime: float
    artifacts: dict

    @property
    def passed(self) -> bool:
        ok = all(r[3] for r in self.rows)
        if self.check.runtime_limit is not None:
            ok = ok and self.runtime < self.check.runtime_limit
        return ok


REGISTRY: list = []


def register(module: str, name: str, **kw):
    if module not in MODULES:
        raise ValueError(f"unknown module {module!r}")

    def deco(fn):
        REGISTRY.append(Check(module, name, fn, **kw))
        return fn

    return deco


# -- core_numerics -------------------------------------------------------------


@register("core_numerics", "quadrature_gaussian")
def _quadrature():
    g = Grid.uniform(-8.0, 8.0, 128)
    return {"abs_error": abs(quadrature(np.exp(-g.axis(0) ** 2), g) - np.sqrt(np.pi))}, {}


@register("core_numerics", "spectral_derivative")
def _spectral():
    g = Grid.uniform(0.0, 2 * np.pi, 64)
    x = g.axis(0)
    return {"max_error": float(np.max(np.abs(spectral_derivative(np.sin(3 * x), g, 0) - 3 * np.cos(3 * x))))}, {}


@register("core_numerics", "expm_two_level")
def _expm():
    rng = np.random.default_rng(101)
    a = rng.normal(size=100)
    b = rng.normal(size=(100, 3))
    H = pauli_compose(a, b)
    U = expm_two_level(H, 0.7)
    unit = np.max(np.abs(np.conj(np.swapaxes(U, -1, -2)) @ U - np.eye(2)))
    ref = max(np.max(np.abs(U[k] - scipy.linalg.expm(-0.7j * H[k]))) for k in range(100))
    return {"unitarity": float(unit), "vs_scipy": float(ref)}, {}


@register("core_numerics", "verlet_reversibility")
def _verlet():
    q0 = np.array([[1.0], [-0.5]])
    p0 = np.array([[0.2], [0.4]])
    q, p = q0.copy(), p0.copy()
    force = lambda x: -x**3  # noqa: E731
    for dt in (1e-2, -1e-2):
        for _ in range(1000):
            q, p = verlet_step(q, p, force, np.ones_like(q), dt)[:2]
    return {"max_error": float(max(np.max(np.abs(q - q0)), np.max(np.abs(p - p0))))}, {}


# -- kernels ---------------------------------------------------------------------


def _three_bohmions():
    return np.array([[-1.0], [0.2], [1.1]]), np.array([0.3, 0.3, 0.4])


@register("kernels", "normalisation")
def _normalisation():
    err = 0.0
    from .kernels import kernel_eval

    for dim in (1, 2):
        g = Grid.uniform(-6.0, 6.0, 96 if dim == 2 else 256, dim)
        k = Kernel("gaussian", 0.5, dim)
        err = max(err, abs(quadrature(kernel_eval(k, g.points()).reshape(g.shape), g) - 1.0))
    return {"abs_error": err}, {}


@register("kernels", "pair_symmetry")
def _symmetry():
    q, w = _three_bohmions()
    I, _ = pair_integrals(q, w, Kernel("gaussian", 0.5, 1), Grid.uniform(-8.0, 8.0, 256))
    return {"max_asymmetry": float(np.max(np.abs(I - I.T)))}, {}


@register("kernels", "floor_sensitivity")
def _floor():
    q, w = _three_bohmions()
    g = Grid.uniform(-8.0, 8.0, 256)
    k = Kernel("gaussian", 0.5, 1)
    I1, _ = pair_integrals(q, w, k, g, rel_floor=1e-14)
    I2, _ = pair_integrals(q, w, k, g, rel_floor=1e-12)
    return {"rel_change": float(np.max(np.abs(I1 - I2)) / np.max(np.abs(I1)))}, {}


# -- electronic -------------------------------------------------------------------


@register("electronic", "pauli_roundtrip")
def _pauli():
    rng = np.random.default_rng(102)
    H = pauli_compose(rng.normal(size=50), rng.normal(size=(50, 3)))
    a, b = pauli_decompose(H)
    return {"max_error": float(np.max(np.abs(pauli_compose(a, b) - H)))}, {}


@register("electronic", "bo_eigen_residual")
def _bo():
    h = TwoLevelHamiltonian.jahn_teller_e_epsilon(C=1.0, D=0.7)
    r = np.random.default_rng(103).uniform(-3, 3, size=(200, 2))
    bo = bo_surfaces(h, r)
    H = h.matrix(r)
    res = max(
        np.max(np.abs(np.einsum("kij,kj->ki", H, bo.v_lower) - bo.lower[:, None] * bo.v_lower)),
        np.max(np.abs(np.einsum("kij,kj->ki", H, bo.v_upper) - bo.upper[:, None] * bo.v_upper)),
    )
    return {"max_residual": float(res)}, {}


@register("electronic", "gradient_fd")
def _grad():
    h = TwoLevelHamiltonian(1.3, 0.8, (0.4, -0.2), (1.0, 0.5), 0.3)
    r = np.random.default_rng(104).uniform(-2, 2, size=(20, 2))
    G = h.matrix_grad(r)
    eps = 1e-5
    worst = 0.0
    for j in range(2):
        e = np.zeros(2)
        e[j] = eps
        fd = (h.matrix(r + e) - h.matrix(r - e)) / (2 * eps)
        worst = max(worst, float(np.max(np.abs(G[:, j] - fd)) / np.max(np.abs(G[:, j]))))
    return {"max_rel_error": worst}, {}


# -- bohmion -------------------------------------------------------------------


@register("bohmion", "ehrenfest_conservation")
def _ehrenfest():
    h = TwoLevelHamiltonian(1.0, 1.0, (0.5,), (1.0,), 0.2)
    state = EhrenfestState([1.0], [0.0], acc.spinor_from_bloch([1.0, 0.0, 0.0]))
    cols = ehrenfest_columns(1)
    rows = [r for *_, r in integrate_ehrenfest(state, h, 1.0, 1.0, 1e-3, 10_000, 100)]
    a = np.array(rows)
    E = a[:, cols.index("total_energy")]
    meas = {
        "norm_drift": float(np.max(np.abs(a[:, cols.index("norm")] - 1.0))),
        "energy_rel_drift": float(np.max(np.abs(E - E[0])) / abs(E[0])),
    }
    return meas, {"ehrenfest_trajectory": (cols, rows)}


@register("bohmion", "ef_reversibility")
def _reverse():
    s0 = acc.ef_reference_system()
    s = s0
    for dt in (1e-3, -1e-3):
        for _ in range(200):
            s = step_ef_bohmion(s, dt)
    e, e0 = s.ensemble, s0.ensemble
    err = max(np.max(np.abs(e.positions - e0.positions)), np.max(np.abs(e.momenta - e0.momenta)),
              np.max(np.abs(e.rho - e0.rho)))
    return {"max_error": float(err)}, {}


@register("bohmion", "momentum_conservation")
def _momentum():
    q, w = _three_bohmions()
    s = SingleSurfaceSystem(BohmionEnsemble(w, q, [[0.3], [-0.1], [0.0]]), Kernel("gaussian", 0.5, 1),
                            Grid.uniform(-8.0, 8.0, 256))
    P0 = s.ensemble.momenta.sum()
    for _ in range(2000):
        s = step_single_surface(s, 1e-3)
    return {"abs_drift": float(abs(s.ensemble.momenta.sum() - P0))}, {}


# -- grid_reference ---------------------------------------------------------------


@register("grid_reference", "madelung_roundtrip")
def _madelung_roundtrip():
    g = Grid.uniform(-10.0, 10.0, 256)
    psi = gr.gaussian_packet(g, 0.5, 1.2, 0.8)
    D = np.abs(psi) ** 2
    S = np.angle(psi)
    return {"max_error": float(np.max(np.abs(gr.madelung_synthesis(D, S) - psi)))}, {}


@register("grid_reference", "split_step_reversibility")
def _split_reverse():
    g = Grid.uniform(-16.0, 16.0, 256)
    h = TwoLevelHamiltonian(1.0, 1.0, (0.5,), (1.0,), 0.0)
    Psi0 = acc.vibronic_reference_state(g)
    Psi = gr.split_step_vibronic(Psi0, h, g, 1e-3, 500)
    Psi = gr.split_step_vibronic(Psi, h, g, -1e-3, 500)
    return {"max_error": float(np.max(np.abs(Psi - Psi0)))}, {}


# -- geometry ---------------------------------------------------------------------


@register("geometry", "berry_parametrisation")
def _berry_param():
    h = TwoLevelHamiltonian.jahn_teller_e_epsilon(C=1.0, D=1.0)
    base = geo.berry_phase_loop(h, geo.circle_loop((0.0, 0.0), 1.0, 512), "lower")
    variants = [
        geo.berry_phase_loop(h, geo.circle_loop((0.0, 0.0), 1.0, 1024), "lower"),
        geo.berry_phase_loop(h, geo.circle_loop((0.0, 0.0), 1.0, 512)[::-1], "lower"),
        geo.berry_phase_loop(h, geo.circle_loop((0.0, 0.0), 1.0, 512, start=1.234), "lower"),
        geo.berry_phase_loop(h, geo.circle_loop((0.2, -0.1), 1.7, 512), "lower"),
    ]
    # the phase is defined modulo 2 pi
    dev = max(abs(np.angle(np.exp(1j * (v - base)))) for v in variants)
    return {"max_deviation": float(dev)}, {}


@register("geometry", "hedgehog_takabayasi")
def _hedgehog():
    f = geo.hedgehog_field(geo.parameter_grid(64, 2))
    return {"max_residual": geo.takabayasi_check(f).max_residual}, {}


# -- cli ----------------------------------------------------------------------------


@register("cli", "defaults_roundtrip")
def _defaults():
    import tomli

    from . import config

    bad = sum(config.validate(tomli.loads(config.defaults_toml(k))) != config.defaults(k) for k in config.KINDS)
    return {"mismatches": float(bad)}, {}


@register("cli", "run_determinism")
def _determinism():
    from . import config
    from .runner import run_scenario

    cfg = config.defaults("ef_bohmion")
    cfg["constants"].update(C=[0.0], D=[1.0])
    cfg["ensemble"].update(weights=[0.5, 0.5], positions=[[-1.0], [1.0]], bloch=[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    cfg["integrator"].update(steps=200, sample_stride=20)
    blobs = []
    with tempfile.TemporaryDirectory() as tmp:
        for i in range(2):
            d = Path(tmp) / str(i)
            run_scenario(cfg, d)
            blobs.append((d / "trajectory.csv").read_bytes())
    return {"mismatches": float(blobs[0] != blobs[1])}, {}


# -- acceptance scenarios -----------------------------------------------------------


def _acceptance_check(number):
    def run():
        res = acc.CRITERIA[number]()
        run.last = res
        meas = {m.name: (m.value, m.tolerance, m.passed) for m in res.measurements}
        return meas, res.artifacts

    return run


for _n, _fn in acc.CRITERIA.items():
    REGISTRY.append(Check(acc.MODULE_OF[_n], f"acceptance_{_n}", _acceptance_check(_n), acceptance=_n,
                          runtime_limit=_fn.runtime_limit))


# -- driver --------------------------------------------------------------------------


def select(filter_: Optional[str] = None) -> list:
    """Checks whose module, name or ``module.name`` matches ``filter_`` (substring)."""
    if not filter_:
        return list(REGISTRY)
    out = [c for c in REGISTRY if filter_ in (c.module, c.name) or filter_ in c.key]
    if not out:
        raise KeyError(f"no verification check matches {filter_!r}")
    return out


def run_one(check: Check) -> Outcome:
    t0 = time.perf_counter()
    meas, artifacts = check.func()
    runtime = time.perf_counter() - t0
    rows = []
    for name, val in meas.items():
        if isinstance(val, tuple):  # acceptance: tolerance and verdict come with the value
            v, tol, ok = val
        else:
            v = float(val)
            tol = TOLERANCES[f"{check.key}.{name}"]
            ok = bool(np.isfinite(v) and v < tol)
        rows.append((name, float(v), float(tol), bool(ok)))
    return Outcome(check, rows, runtime, artifacts)


def format_table(outcomes) -> str:
    lines = [f"{'module':<15} {'check':<26} {'measurement':<36} {'value':>11} {'tol':>8}  status"]
    for o in outcomes:
        for name, v, tol, ok in o.rows:
            lines.append(f"{o.check.module:<15} {o.check.name:<26} {name:<36} {v:>11.3e} {tol:>8.0e}  "
                         f"{'PASS' if ok else 'FAIL'}")
        if o.check.runtime_limit is not None:
            ok = o.runtime < o.check.runtime_limit
            lines.append(f"{o.check.module:<15} {o.check.name:<26} {'runtime_s':<36} {o.runtime:>11.3f} "
                         f"{o.check.runtime_limit:>8g}  {'PASS' if ok else 'FAIL'}")
    return "\n".join(lines)


def run_checks(filter_: Optional[str], out_dir, echo: Callable[[str], None] = print) -> dict:
    """Run the selected checks, write the summary files and return a summary dict."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    outcomes = []
    for c in select(filter_):
        o = run_one(c)
        outcomes.append(o)
        echo(f"[{'PASS' if o.passed else 'FAIL'}] {c.key} ({o.runtime:.2f}s)")
    files = []
    rows = [[o.check.module, o.check.name, n, v, t, ok] for o in outcomes for n, v, t, ok in o.rows]
    files.append(write_csv(out_dir / "verify_summary.csv",
                           ["module", "check", "measurement", "value", "tolerance", "pass"], rows))
    for o in outcomes:
        for art, (header, arows) in sorted(o.artifacts.items()):
            files.append(write_csv(out_dir / f"{o.check.name}_{art}.csv", header, arows))
    failed = sum(not o.passed for o in outcomes)
    summary = {
        "count": len(outcomes),
        "failed": failed,
        "checks": [
            {"module": o.check.module, "check": o.check.name, "pass": o.passed, "runtime_s": o.runtime,
             "runtime_limit_s": o.check.runtime_limit,
             "measurements": [{"name": n, "value": v, "tolerance": t, "pass": ok} for n, v, t, ok in o.rows]}
            for o in outcomes
        ],
    }
    files.append(write_json(out_dir / "verify_summary.json", summary))
    echo(format_table(outcomes))
    echo(f"{len(outcomes) - failed}/{len(outcomes)} checks passed")
    summary["files"] = files
    summary["outcomes"] = outcomes
    return summary
