"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -s -v`` to see the lines (they are
printed with capture disabled, so plain ``pytest`` shows them too).
"""
import os
import subprocess
import sys
from pathlib import Path

import pytest

from bohmion_dyn import acceptance


def _report(capsys, line):
    with capsys.disabled():
        print("\n" + line)


@pytest.mark.parametrize("number", sorted(acceptance.CRITERIA))
def test_criterion(number, capsys):
    res = acceptance.CRITERIA[number]()
    _report(capsys, res.line())
    for m in res.measurements:
        assert m.passed, f"{m.name} = {m.value:.3e}, tolerance {m.tolerance:.0e}"
    assert res.runtime_ok, f"runtime {res.runtime:.2f}s exceeds {res.runtime_limit}s"


def _verify(out: Path):
    env = dict(os.environ)
    env.pop("BOHMION_DYN_NO_NUMBA", None)
    proc = subprocess.run([sys.executable, "-m", "bohmion_dyn.cli", "--threads", "1", "verify", "--out", str(out)],
                          env=env, capture_output=True, text=True)
    return proc.returncode, out / "verify"


def test_criterion_11_determinism(tmp_path, capsys):
    (code_a, a), (code_b, b) = _verify(tmp_path / "a"), _verify(tmp_path / "b")
    csv_a = sorted(p.name for p in a.glob("*.csv"))
    csv_b = sorted(p.name for p in b.glob("*.csv"))
    differing = [n for n in csv_a if n in csv_b and (a / n).read_bytes() != (b / n).read_bytes()]
    same_manifest = (a / "manifest.json").read_bytes() == (b / "manifest.json").read_bytes()
    ok = bool(csv_a) and csv_a == csv_b and not differing and same_manifest and code_a == code_b == 0
    _report(capsys, f"[{'PASS' if ok else 'FAIL'}] criterion 11: byte-identical verify CSV artifacts | "
                    f"files={len(csv_a)}; differing={len(differing)}; exit codes {code_a},{code_b}")
    assert csv_a == csv_b
    assert csv_a, "verify wrote no CSV artifacts"
    assert not differing, differing
    assert same_manifest
    assert code_a == code_b == 0
