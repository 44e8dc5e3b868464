import csv
import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parents[1]


def _run(tmp, scenario, no_numba):
    env = dict(os.environ)
    env.pop("BOHMION_DYN_NO_NUMBA", None)
    if no_numba:
        env["BOHMION_DYN_NO_NUMBA"] = "1"
    out = tmp / ("numpy" if no_numba else "numba")
    subprocess.run([sys.executable, "-m", "bohmion_dyn.cli", "run", str(ROOT / "scenarios" / scenario),
                    "--out", str(out)], check=True, env=env, capture_output=True)
    return out / Path(scenario).stem


def _table(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


@pytest.mark.parametrize("scenario", ["harmonic_bohmions.toml", "spin_boson_ef.toml"])
def test_numpy_fallback_matches_numba(tmp_path, scenario):
    a = _run(tmp_path, scenario, no_numba=False)
    b = _run(tmp_path, scenario, no_numba=True)
    assert json.loads((a / "manifest.json").read_text())["backend"] == "numba"
    assert json.loads((b / "manifest.json").read_text())["backend"] == "numpy"
    ha, ta = _table(a / "trajectory.csv")
    hb, tb = _table(b / "trajectory.csv")
    assert ha == hb
    # the two paths sum in different orders; agreement is to roundoff growth
    scale = np.maximum(np.abs(ta), 1.0)
    assert np.max(np.abs(ta - tb) / scale) < 1e-9


def test_flag_selects_backend():
    code = "import bohmion_dyn; print(bohmion_dyn.backend())"
    env = dict(os.environ, BOHMION_DYN_NO_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
