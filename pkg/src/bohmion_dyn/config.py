"""Scenario configuration: TOML schema, defaults and validation.

A scenario file is a flat TOML document: a top-level ``kind`` (and optional
``name``) plus a handful of tables. Every key has an explicit default (see
``bohmion-dyn --print-defaults``); unknown tables or keys are rejected with
the dotted path and, when it can be found, the line number.
"""
from __future__ import annotations

import copy
import hashlib
from pathlib import Path
from typing import Any

import tomli
import tomli_w

from .errors import ConfigError

KINDS = (
    "bohmion",
    "ef_bohmion",
    "ehrenfest",
    "grid_1d",
    "grid_vibronic",
    "geometry_suite",
    "cold_fluid",
    "verify_all",
)

GEOMETRY_CHECKS = (
    "berry_phase",
    "qgt_covariance",
    "qgt_closed_form",
    "curvature",
    "uncertainty",
    "bloch_closed_form",
    "takabayasi",
)

# (type, default) per key; "float" accepts integers, lists are typed by element
SCHEMA: dict = {
    "constants": {
        "hbar": ("float", 1.0),
        "m": ("float", 1.0),
        "M": ("float", 1.0),
        "omega": ("float", 1.0),
        "C": ("floats", [0.0]),
        "D": ("floats", [0.0]),
        "E": ("float", 0.0),
    },
    "kernel": {
        "family": ("str", "gaussian"),
        "width": ("float", 0.5),
    },
    "grid": {
        "lower": ("floats", [-8.0]),
        "upper": ("floats", [8.0]),
        "n": ("ints", [256]),
    },
    "ensemble": {
        "weights": ("floats", [1.0]),
        "positions": ("matrix", [[0.0]]),
        "momenta": ("matrix", []),
        "bloch": ("matrix", []),
    },
    "integrator": {
        "dt": ("float", 1e-3),
        "steps": ("int", 1000),
        "sample_stride": ("int", 10),
    },
    "potential": {
        "family": ("str", "none"),
        "omega": ("float", 1.0),
        "center": ("float", 0.0),
        "depth": ("float", 1.0),
        "x0": ("float", 1.0),
        "x": ("floats", []),
        "v": ("floats", []),
    },
    "wavefunction": {
        "center": ("float", 1.0),
        "width": ("float", 1.0),
        "momentum": ("float", 0.0),
        "bloch": ("floats", [0.0, 0.0, 1.0]),
        "snapshot_stride": ("int", 0),
    },
    "geometry": {
        "checks": ("strs", list(GEOMETRY_CHECKS)),
        "fields": ("int", 20),
        "grid_n": ("int", 64),
        "loop_points": ("int", 512),
        "loop_center": ("floats", [0.0, 0.0]),
        "loop_radius": ("float", 1.0),
        "band": ("str", "lower"),
    },
    "cold_fluid": {
        "sigma": ("float", 1.0),
        "slope": ("float", 0.5),
        "offset": ("float", 0.0),
        "harmonic": ("bool", True),
    },
    "conventions": {
        "rho_trace": ("str", "weight"),
        "gradient_scope": ("str", "drop_xi"),
        "electronic_coupling": ("str", "variational"),
        "quantum": ("bool", True),
    },
    "seeds": {
        "seed": ("int", 0),
    },
    "verify": {
        "filter": ("str", ""),
    },
}

TOP_LEVEL = {"kind": ("str", None), "name": ("str", "")}

CHOICES = {
    ("kernel", "family"): ("gaussian", "helmholtz1d"),
    ("potential", "family"): ("none", "harmonic", "double_well", "tabulated"),
    ("conventions", "rho_trace"): ("weight", "unit"),
    ("conventions", "gradient_scope"): ("drop_xi",),
    ("conventions", "electronic_coupling"): ("variational", "printed"),
    ("geometry", "band"): ("lower", "upper"),
}


def defaults(kind: str = "bohmion") -> dict:
    out = {"kind": kind, "name": ""}
    for table, keys in SCHEMA.items():
        out[table] = {k: copy.deepcopy(v[1]) for k, v in keys.items()}
    return out


def defaults_toml(kind: str = "bohmion") -> str:
    return tomli_w.dumps(defaults(kind))


def _line_of(text: str, table: str, key: str | None = None):
    """Best-effort 1-based line number of ``[table]`` / ``key`` in ``text``."""
    if not text:
        return None
    current = None
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line.startswith("[") and line.endswith("]"):
            current = line.strip("[]").strip()
            if key is None and current == table:
                return i
            continue
        if key is not None and current == (table or None) and line.split("=")[0].strip() == key:
            return i
        if key is None and table and current is None and line.split("=")[0].strip() == table:
            return i
    return None


def _err(msg, path, text, table, key=None):
    line = _line_of(text, table, key)
    where = path if line is None else f"{path} (line {line})"
    return ConfigError(msg, where)


def _coerce(kind, value, path, text, table, key):
    def bad(expected):
        return _err(f"expected {expected}, got {type(value).__name__} {value!r}", path, text, table, key)

    def num(v):
        return isinstance(v, (int, float)) and not isinstance(v, bool)

    if kind == "float":
        if not num(value):
            raise bad("a number")
        return float(value)
    if kind == "int":
        if not isinstance(value, int) or isinstance(value, bool):
            raise bad("an integer")
        return value
    if kind == "bool":
        if not isinstance(value, bool):
            raise bad("true or false")
        return value
    if kind == "str":
        if not isinstance(value, str):
            raise bad("a string")
        return value
    if kind == "floats":
        if num(value):
            return [float(value)]
        if not isinstance(value, list) or not all(num(v) for v in value):
            raise bad("a list of numbers")
        return [float(v) for v in value]
    if kind == "ints":
        if isinstance(value, int) and not isinstance(value, bool):
            return [value]
        if not isinstance(value, list) or not all(isinstance(v, int) and not isinstance(v, bool) for v in value):
            raise bad("a list of integers")
        return list(value)
    if kind == "strs":
        if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
            raise bad("a list of strings")
        return list(value)
    if kind == "matrix":
        if not isinstance(value, list):
            raise bad("a list of lists of numbers")
        rows = []
        for r in value:
            if num(r):
                r = [r]
            if not isinstance(r, list) or not all(num(v) for v in r):
                raise bad("a list of lists of numbers")
            rows.append([float(v) for v in r])
        return rows
    raise AssertionError(kind)  # pragma: no cover


def validate(raw: dict, text: str = "") -> dict:
    """Merge ``raw`` over the defaults, checking names, types and choices."""
    if "kind" not in raw:
        raise ConfigError("missing required key", "kind")
    for key in raw:
        if key not in TOP_LEVEL and key not in SCHEMA:
            raise _err("unknown key", key, text, key)
        if key in SCHEMA and not isinstance(raw[key], dict):
            raise _err("expected a table", key, text, key)
    kind = _coerce("str", raw["kind"], "kind", text, "kind", None)
    if kind not in KINDS:
        raise _err(f"unknown scenario kind {kind!r}; choose from {', '.join(KINDS)}", "kind", text, "kind")
    cfg = defaults(kind)
    cfg["name"] = _coerce("str", raw.get("name", ""), "name", text, "name", None)
    for table, values in raw.items():
        if table not in SCHEMA:
            continue
        for key, value in values.items():
            path = f"{table}.{key}"
            if key not in SCHEMA[table]:
                raise _err("unknown key", path, text, table, key)
            typ = SCHEMA[table][key][0]
            cfg[table][key] = _coerce(typ, value, path, text, table, key)
    for (table, key), allowed in CHOICES.items():
        if cfg[table][key] not in allowed:
            raise _err(f"must be one of {', '.join(allowed)}", f"{table}.{key}", text, table, key)
    for c in cfg["geometry"]["checks"]:
        if c not in GEOMETRY_CHECKS:
            raise _err(f"unknown check {c!r}; choose from {', '.join(GEOMETRY_CHECKS)}",
                       "geometry.checks", text, "geometry", "checks")
    _check_ranges(cfg, text)
    return cfg


def _check_ranges(cfg, text):
    def need(cond, msg, table, key):
        if not cond:
            raise _err(msg, f"{table}.{key}", text, table, key)

    c = cfg["constants"]
    for key in ("hbar", "m", "M"):
        need(c[key] > 0, "must be positive", "constants", key)
    need(len(c["C"]) == len(c["D"]), "C and D must have the same length", "constants", "D")
    need(cfg["kernel"]["width"] > 0, "must be positive", "kernel", "width")
    g = cfg["grid"]
    need(len(g["lower"]) == len(g["upper"]) == len(g["n"]), "lower, upper and n must have equal length", "grid", "n")
    need(1 <= len(g["n"]) <= 3, "grid dimension must be 1, 2 or 3", "grid", "n")
    need(all(n >= 8 for n in g["n"]), "need at least 8 points per axis", "grid", "n")
    need(all(hi > lo for lo, hi in zip(g["lower"], g["upper"])), "upper must exceed lower", "grid", "upper")
    it = cfg["integrator"]
    need(it["dt"] != 0, "must be non-zero", "integrator", "dt")
    need(it["steps"] >= 0, "must be >= 0", "integrator", "steps")
    need(it["sample_stride"] >= 1, "must be >= 1", "integrator", "sample_stride")
    need(cfg["geometry"]["fields"] >= 1, "must be >= 1", "geometry", "fields")
    need(cfg["geometry"]["grid_n"] >= 8, "must be >= 8", "geometry", "grid_n")
    need(cfg["geometry"]["loop_points"] >= 64, "must be >= 64", "geometry", "loop_points")


def load(path) -> tuple:
    """Read and validate a scenario file; returns ``(config, sha256 of the bytes)``."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read file: {exc.strerror}", str(path)) from exc
    text = data.decode("utf-8", errors="replace")
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"TOML syntax error: {exc}", str(path)) from exc
    cfg = validate(raw, text)
    if not cfg["name"]:
        cfg["name"] = path.stem
    return cfg, hashlib.sha256(data).hexdigest()


def dumps(cfg: dict) -> str:
    return tomli_w.dumps(cfg)


def get(cfg: dict, dotted: str) -> Any:
    node = cfg
    for part in dotted.split("."):
        node = node[part]
    return node
