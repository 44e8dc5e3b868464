"""Execute validated scenario configurations and write their artifacts.

:func:`run_scenario` builds the objects a scenario describes, checks the
preconditions of every module involved (so that bad inputs surface as
:class:`~bohmion_dyn.errors.ConfigError` before any time stepping), runs it
and writes CSV/JSON files into the run directory. It returns the summary
that ends up in ``manifest.json``.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from . import _accel
from . import geometry as geo
from . import grid_reference as gr
from .acceptance import spinor_from_bloch
from .dynamics import (
    EFBohmionSystem,
    EhrenfestState,
    SingleSurfaceSystem,
    ehrenfest_columns,
    integrate,
    integrate_ehrenfest,
    trajectory_columns,
)
from .electronic import TwoLevelHamiltonian
from .errors import ConfigError, NumericalAbort
from .io import write_csv, write_json, write_snapshot
from .kernels import BohmionEnsemble, Kernel, check_admissible
from .numerics import Grid
from .potentials import DoubleWellPotential, HarmonicPotential, TabulatedPotential, ZeroPotential

from ._version import __version__  # noqa: F401


# -- building blocks -----------------------------------------------------------


def _guard(where):
    """Turn ``ValueError`` raised while building objects into a ConfigError at ``where``."""

    class _Ctx:
        def __enter__(self):
            return self

        def __exit__(self, typ, exc, tb):
            if typ is not None and issubclass(typ, ValueError) and not isinstance(exc, ConfigError):
                raise ConfigError(str(exc), where) from exc
            return False

    return _Ctx()


def build_grid(cfg) -> Grid:
    g = cfg["grid"]
    with _guard("grid"):
        return Grid(tuple(g["lower"]), tuple(g["upper"]), tuple(g["n"]))


def build_kernel(cfg, dim: int) -> Kernel:
    k = cfg["kernel"]
    with _guard("kernel.family"):
        return Kernel(k["family"], k["width"], dim)


def build_hamiltonian(cfg, dim: int) -> TwoLevelHamiltonian:
    c = cfg["constants"]
    if len(c["C"]) != dim:
        raise ConfigError(f"needs {dim} entries to match the grid dimension", "constants.C")
    with _guard("constants"):
        return TwoLevelHamiltonian(c["M"], c["omega"], tuple(c["C"]), tuple(c["D"]), c["E"])


def build_potential(cfg, dim: int):
    p = cfg["potential"]
    m = cfg["constants"]["m"]
    fam = p["family"]
    if fam == "none":
        return ZeroPotential()
    if fam == "harmonic":
        return HarmonicPotential(m, p["omega"], p["center"])
    if dim != 1:
        raise ConfigError(f"{fam!r} potentials are one-dimensional", "potential.family")
    if fam == "double_well":
        return DoubleWellPotential(p["depth"], p["x0"])
    if len(p["x"]) < 4 or len(p["x"]) != len(p["v"]):
        raise ConfigError("tabulated potential needs >= 4 samples with matching x and v", "potential.v")
    with _guard("potential.x"):
        return TabulatedPotential(p["x"], p["v"])


def build_ensemble(cfg, dim: int, electronic: bool) -> BohmionEnsemble:
    e = cfg["ensemble"]
    w = np.asarray(e["weights"], dtype=float)
    N = w.size
    q = np.asarray(e["positions"], dtype=float)
    if q.shape != (N, dim):
        raise ConfigError(f"expected {N} rows of {dim} coordinates, got shape {list(q.shape)}", "ensemble.positions")
    p = np.asarray(e["momenta"], dtype=float) if e["momenta"] else np.zeros((N, dim))
    if p.shape != (N, dim):
        raise ConfigError(f"expected {N} rows of {dim} coordinates", "ensemble.momenta")
    bloch = None
    if electronic:
        bloch = np.asarray(e["bloch"], dtype=float) if e["bloch"] else np.tile([0.0, 0.0, 1.0], (N, 1))
        if bloch.shape != (N, 3):
            raise ConfigError(f"expected {N} Bloch vectors of length 3", "ensemble.bloch")
        if np.any(np.linalg.norm(bloch, axis=1) > 1.0 + 1e-12):
            raise ConfigError("Bloch vectors must have length <= 1", "ensemble.bloch")
    with _guard("ensemble.weights"):
        if electronic:
            return BohmionEnsemble.from_bloch(w, q, p, bloch, cfg["conventions"]["rho_trace"])
        return BohmionEnsemble(w, q, p)


def _admissible(ens, kernel, grid):
    with _guard("ensemble.positions"):
        check_admissible(ens.positions, kernel, grid)


def conventions(cfg) -> dict:
    c = dict(cfg["conventions"])
    c["grid"] = "cell_centred_periodic"
    c["energy_sign"] = "plus"
    return c


# -- per-kind runners ----------------------------------------------------------


def _drift_stats(rows, cols, names):
    arr = np.asarray(rows, dtype=float)
    out = {}
    for name in names:
        idx = [i for i, c in enumerate(cols) if c == name or (name.endswith("*") and c.startswith(name[:-1]))]
        if not idx or arr.size == 0:
            continue
        sub = arr[:, idx]
        d = float(np.max(np.abs(sub - sub[0])))
        out[name.rstrip("*") + "_max_drift"] = d
        if name == "total_energy" and sub[0, 0] != 0:
            out["total_energy_rel_drift"] = d / abs(sub[0, 0])
    return out


def _trajectory(run_dir, gen, cols, last_good_fn):
    rows = []
    try:
        for *_, row in gen:
            rows.append(row)
    except NumericalAbort as exc:
        write_csv(run_dir / "trajectory.csv", cols, rows)
        path = write_json(run_dir / "last_good.json", {"step": exc.step, "message": str(exc),
                                                        "state": last_good_fn(exc.last_good)})
        exc.path = path
        raise
    return rows


def _ensemble_state(system):
    ens = system.ensemble
    out = {"weights": ens.weights, "positions": ens.positions, "momenta": ens.momenta}
    if ens.rho is not None:
        out["rho_real"] = ens.rho.real
        out["rho_imag"] = ens.rho.imag
    return out


def run_bohmion(cfg, run_dir: Path, electronic: bool) -> dict:
    grid = build_grid(cfg)
    kernel = build_kernel(cfg, grid.dim)
    ens = build_ensemble(cfg, grid.dim, electronic)
    _admissible(ens, kernel, grid)
    c = cfg["constants"]
    conv = cfg["conventions"]
    it = cfg["integrator"]
    if electronic:
        system = EFBohmionSystem(ens, kernel, grid, build_hamiltonian(cfg, grid.dim), c["M"], c["hbar"],
                                 conv["quantum"], conv["electronic_coupling"], conv["gradient_scope"])
    else:
        system = SingleSurfaceSystem(ens, kernel, grid, build_potential(cfg, grid.dim), c["m"], c["hbar"],
                                     conv["quantum"])
    cols = trajectory_columns(ens.count, grid.dim, electronic)
    gen = integrate(system, it["dt"], it["steps"], it["sample_stride"])
    rows = _trajectory(run_dir, gen, cols, _ensemble_state)
    write_csv(run_dir / "trajectory.csv", cols, rows)
    stats = _drift_stats(rows, cols, ["total_energy"] + (["tr*", "purity*"] if electronic else []))
    return {"stats": stats}


def run_ehrenfest(cfg, run_dir: Path) -> dict:
    grid = build_grid(cfg)
    h = build_hamiltonian(cfg, grid.dim)
    e = cfg["ensemble"]
    q = np.asarray(e["positions"][0] if e["positions"] else [0.0] * grid.dim, dtype=float)
    p = np.asarray(e["momenta"][0], dtype=float) if e["momenta"] else np.zeros(grid.dim)
    if q.size != grid.dim or p.size != grid.dim:
        raise ConfigError(f"needs {grid.dim} coordinates", "ensemble.positions")
    n = np.asarray(e["bloch"][0] if e["bloch"] else [0.0, 0.0, 1.0], dtype=float)
    if n.size != 3 or np.linalg.norm(n) == 0:
        raise ConfigError("needs a non-zero Bloch vector of length 3", "ensemble.bloch")
    state = EhrenfestState(q, p, spinor_from_bloch(n))
    c = cfg["constants"]
    it = cfg["integrator"]
    cols = ehrenfest_columns(grid.dim)
    gen = integrate_ehrenfest(state, h, c["M"], c["hbar"], it["dt"], it["steps"], it["sample_stride"])
    rows = _trajectory(run_dir, gen, cols, lambda s: {"q": s.q, "p": s.p, "psi_real": s.psi.real,
                                                      "psi_imag": s.psi.imag})
    write_csv(run_dir / "trajectory.csv", cols, rows)
    return {"stats": _drift_stats(rows, cols, ["total_energy", "norm"])}


def _packet(cfg, grid):
    w = cfg["wavefunction"]
    if w["width"] <= 0:
        raise ConfigError("must be positive", "wavefunction.width")
    return gr.gaussian_packet(grid, w["center"], w["width"], w["momentum"], cfg["constants"]["hbar"])


def _run_grid(cfg, run_dir, state, step_fn, energy_fn, observe, field, meta):
    """Shared loop for the grid solvers: samples, snapshots, drift stats."""
    it = cfg["integrator"]
    snap = cfg["wavefunction"]["snapshot_stride"]
    grid = build_grid(cfg)
    dt = it["dt"]
    cols = ["time", "norm", "total_energy", *observe(state, grid).keys()]
    rows = []
    files = []

    def sample(n, psi):
        rows.append([n * dt, gr.norm(psi, grid), energy_fn(psi), *observe(psi, grid).values()])
        if snap and n % snap == 0:
            files.extend(write_snapshot(run_dir, field, n, grid, psi, dict(meta, time=n * dt)))

    sample(0, state)
    stops = sorted(set(range(0, it["steps"] + 1, it["sample_stride"])) | {it["steps"]}
                   | (set(range(0, it["steps"] + 1, snap)) if snap else set()))
    done = 0
    for stop in stops[1:]:
        new = step_fn(state, stop - done)
        if not np.all(np.isfinite(new)):
            write_csv(run_dir / "trajectory.csv", cols, rows)
            path = write_snapshot(run_dir, "last_good", done, grid, state, dict(meta, time=done * dt))
            exc = NumericalAbort("non-finite wavefunction", last_good=state, step=done)
            exc.path = path[1]
            raise exc
        state, done = new, stop
        if done % it["sample_stride"] == 0 or done == it["steps"] or (snap and done % snap == 0):
            sample(done, state)
    write_csv(run_dir / "trajectory.csv", cols, rows)
    return {"stats": _drift_stats(rows, cols, ["norm", "total_energy"]), "files": files}


def run_grid_1d(cfg, run_dir: Path) -> dict:
    grid = build_grid(cfg)
    if grid.dim != 1:
        raise ConfigError("grid solvers are one-dimensional", "grid.n")
    c = cfg["constants"]
    V = build_potential(cfg, 1).value(grid.axis(0)[:, None])
    psi = _packet(cfg, grid)
    dt = cfg["integrator"]["dt"]

    def observe(p, g):
        return {"x_mean": gr.position_mean(p, g)}

    out = _run_grid(cfg, run_dir, psi,
                    lambda s, k: gr.split_step_1d(s, V, grid, dt, k, c["m"], c["hbar"]),
                    lambda s: gr.energy_1d(s, V, grid, c["m"], c["hbar"]), observe, "psi", {"kind": "grid_1d"})
    return out


def run_grid_vibronic(cfg, run_dir: Path) -> dict:
    grid = build_grid(cfg)
    if grid.dim != 1:
        raise ConfigError("grid solvers are one-dimensional", "grid.n")
    h = build_hamiltonian(cfg, 1)
    c = cfg["constants"]
    n = np.asarray(cfg["wavefunction"]["bloch"], dtype=float)
    if n.size != 3 or np.linalg.norm(n) == 0:
        raise ConfigError("needs a non-zero Bloch vector of length 3", "wavefunction.bloch")
    Psi = _packet(cfg, grid)[:, None] * spinor_from_bloch(n)[None, :]
    dt = cfg["integrator"]["dt"]

    def observe(P, g):
        pops = [gr.norm(P[:, k], g) for k in range(2)]
        return {"x_mean": gr.position_mean(np.sqrt(np.sum(np.abs(P) ** 2, axis=-1)), g),
                "population_0": pops[0], "population_1": pops[1]}

    return _run_grid(cfg, run_dir, Psi,
                     lambda s, k: gr.split_step_vibronic(s, h, grid, dt, k, c["M"], c["hbar"]),
                     lambda s: gr.energy_vibronic(s, h, grid, c["M"], c["hbar"]), observe, "Psi",
                     {"kind": "grid_vibronic"})


def _winding(h, loop) -> int:
    """Winding number of the (b_x, b_z) vector of ``h`` along a closed loop."""
    b = h.vector(loop)
    ang = np.arctan2(b[:, 2], b[:, 0])
    step = np.angle(np.exp(1j * np.diff(np.append(ang, ang[0]))))
    return int(round(step.sum() / (2 * np.pi)))


def berry_phase_report(h, g) -> geo.CheckReport:
    """Berry phase of ``h`` around the configured circle.

    For a real Hamiltonian the phase is pi times the winding number of
    ``(b_x, b_z)`` modulo 2pi; the residual is the distance to that value.
    """
    loop = geo.circle_loop(tuple(g["loop_center"]), g["loop_radius"], g["loop_points"])
    phase = geo.berry_phase_loop(h, loop, g["band"])
    w = _winding(h, loop)
    expected = np.pi if w % 2 else 0.0
    res = abs(np.angle(np.exp(1j * (phase - expected))))
    return geo.CheckReport("berry_phase", float(res), 1e-3, [], {"loop_points": g["loop_points"]},
                           {"phase": phase, "expected": expected, "winding": w,
                            "center": g["loop_center"], "radius": g["loop_radius"], "band": g["band"]})


def run_geometry(cfg, run_dir: Path) -> dict:
    g = cfg["geometry"]
    rng = np.random.default_rng(cfg["seeds"]["seed"])
    hbar = cfg["constants"]["hbar"]
    reports = []
    if "berry_phase" in g["checks"]:
        if len(cfg["constants"]["C"]) != 2:
            raise ConfigError("the Berry-phase loop needs a two-dimensional Hamiltonian", "constants.C")
        h = build_hamiltonian(cfg, 2)
        with _guard("geometry.loop_radius"):
            reports.append(berry_phase_report(h, g))
    field_checks = [c for c in g["checks"] if c != "berry_phase"]
    if field_checks:
        grid = geo.parameter_grid(g["grid_n"], 2)
        worst: dict = {}
        for _ in range(g["fields"]):
            f = geo.random_smooth_field(rng, grid, hbar=hbar)
            run = {
                "qgt_covariance": lambda: geo.qgt_covariance_check(f),
                "qgt_closed_form": lambda: geo.qgt_closed_form_check(f),
                "curvature": lambda: geo.curvature_check(f),
                "uncertainty": lambda: geo.qgt_uncertainty_check(f),
                "takabayasi": lambda: geo.takabayasi_check(f),
                "bloch_closed_form": lambda: geo.bloch_closed_form_check(rng, grid, hbar),
            }
            for name in field_checks:
                r = run[name]()
                if name not in worst or r.max_residual > worst[name].max_residual:
                    worst[name] = r
        for name in field_checks:
            r = worst[name]
            r.extra = dict(r.extra or {}, fields=g["fields"], seed=cfg["seeds"]["seed"])
            reports.append(r)
    files = []
    for r in reports:
        files.append(write_json(run_dir / f"{r.check_name}.json", r.to_dict()))
    write_csv(run_dir / "geometry_summary.csv", ["check", "max_residual", "tolerance", "pass"],
              [[r.check_name, r.max_residual, r.tolerance, r.passed] for r in reports])
    stats = {f"{r.check_name}_residual": r.max_residual for r in reports}
    return {"stats": stats, "files": files, "passed": all(r.passed for r in reports)}


def run_cold_fluid(cfg, run_dir: Path) -> dict:
    grid = build_grid(cfg)
    if grid.dim != 1:
        raise ConfigError("the cold-fluid check is one-dimensional", "grid.n")
    if grid.shape[0] < 64:
        raise ConfigError("needs at least 64 points", "grid.n")
    cf = cfg["cold_fluid"]
    if cf["sigma"] <= 0:
        raise ConfigError("must be positive", "cold_fluid.sigma")
    c = cfg["constants"]
    rows = []
    report = {}
    for g in (grid, grid.refined(2)):
        x = g.axis(0)
        D = np.exp(-((x - 0.5 * (g.lower[0] + g.upper[0])) ** 2) / cf["sigma"] ** 2) / (np.sqrt(np.pi) * cf["sigma"])
        u = cf["slope"] * x + cf["offset"]
        V = 0.5 * c["m"] * c["omega"] ** 2 * x**2 if cf["harmonic"] else None
        r = gr.cold_fluid_check(D, u, g, c["m"], c["hbar"], V)
        rows.append([r["n"], r["diag_residual"], r["current_residual"], r["energy_residual"]])
        report[str(r["n"])] = r
    write_csv(run_dir / "cold_fluid.csv", ["n", "diag_residual", "current_residual", "energy_residual"], rows)
    path = write_json(run_dir / "cold_fluid.json", report)
    base = report[str(grid.shape[0])]
    return {"stats": {k: base[k] for k in ("diag_residual", "current_residual", "energy_residual")},
            "files": [path]}


def run_verify(cfg, run_dir: Path) -> dict:
    from .verify import run_checks

    summary = run_checks(cfg["verify"]["filter"] or None, run_dir)
    return {"stats": {"checks": summary["count"], "failed": summary["failed"]},
            "files": summary["files"], "passed": summary["failed"] == 0}


RUNNERS = {
    "bohmion": lambda cfg, d: run_bohmion(cfg, d, electronic=False),
    "ef_bohmion": lambda cfg, d: run_bohmion(cfg, d, electronic=True),
    "ehrenfest": run_ehrenfest,
    "grid_1d": run_grid_1d,
    "grid_vibronic": run_grid_vibronic,
    "geometry_suite": run_geometry,
    "cold_fluid": run_cold_fluid,
    "verify_all": run_verify,
}


def run_scenario(cfg: dict, run_dir) -> dict:
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    out = RUNNERS[cfg["kind"]](cfg, run_dir)
    out.setdefault("passed", True)
    out["conventions"] = conventions(cfg)
    out["backend"] = _accel.backend()
    return out
