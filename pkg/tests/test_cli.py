import json
import shutil
from pathlib import Path

import pytest

from bohmion_dyn import acceptance, cli, config, verify

ROOT = Path(__file__).resolve().parents[1]
SCENARIOS = sorted((ROOT / "scenarios").glob("*.toml"))


def _run(*argv):
    return cli.main([str(a) for a in argv])


def test_print_defaults_is_valid_toml(capsys):
    assert _run("--print-defaults", "grid_1d") == 0
    text = capsys.readouterr().out
    assert config.validate(__import__("tomli").loads(text), text)["kind"] == "grid_1d"


def test_print_defaults_unknown_kind(capsys):
    assert _run("--print-defaults", "lattice") == cli.EXIT_CONFIG


def test_no_command_is_usage_error(capsys):
    assert _run() == cli.EXIT_CONFIG


def test_free_bohmion_manifest(tmp_path):
    assert _run("run", ROOT / "scenarios/free_single_bohmion.toml", "--out", tmp_path) == 0
    run_dir = tmp_path / "free_single_bohmion"
    m = json.loads((run_dir / "manifest.json").read_text())
    assert m["schema"] == 1
    assert m["threads"] == 1 and m["status"] == "ok"
    assert m["conventions"]["grid"] == "cell_centred_periodic"
    assert "trajectory.csv" in m["files"]
    for f in m["files"]:
        assert (run_dir / f).is_file()
    _, sha = config.load(ROOT / "scenarios/free_single_bohmion.toml")
    assert m["config_sha256"] == sha
    assert any("drift" in k for k in m["stats"])


def test_jt_berry_phase_is_pi(tmp_path):
    assert _run("run", ROOT / "scenarios/jt_berry_phase.toml", "--out", tmp_path) == 0
    rep = json.loads((tmp_path / "jt_berry_phase/berry_phase.json").read_text())
    assert rep["pass"]
    assert abs(rep["extra"]["phase"] - 3.141592653589793) < 1e-3


@pytest.mark.parametrize("path", SCENARIOS, ids=[p.stem for p in SCENARIOS])
def test_every_scenario_runs(path, tmp_path):
    assert _run("run", path, "--out", tmp_path) == 0
    assert (tmp_path / config.load(path)[0]["name"] / "manifest.json").is_file()


def test_run_is_byte_deterministic(tmp_path):
    src = ROOT / "scenarios/spin_boson_ef.toml"
    for sub in ("a", "b"):
        assert _run("--threads", "1", "run", src, "--out", tmp_path / sub) == 0
    a, b = tmp_path / "a/spin_boson_ef", tmp_path / "b/spin_boson_ef"
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    for n in names:
        assert (a / n).read_bytes() == (b / n).read_bytes(), n


def test_config_error_exit_code(tmp_path, capsys):
    p = tmp_path / "bad.toml"
    p.write_text('kind = "bohmion"\n[grid]\nfoo = 1\n')
    assert _run("run", p, "--out", tmp_path) == cli.EXIT_CONFIG
    assert "grid.foo (line 3)" in capsys.readouterr().err


def test_inadmissible_positions_exit_code(tmp_path, capsys):
    p = tmp_path / "clash.toml"
    p.write_text('kind = "bohmion"\n[ensemble]\npositions = [[7.5]]\n')
    assert _run("run", p, "--out", tmp_path) == cli.EXIT_CONFIG
    assert "ensemble.positions" in capsys.readouterr().err


def test_bad_thread_count(tmp_path):
    assert _run("--threads", "0", "run", ROOT / "scenarios/free_single_bohmion.toml", "--out", tmp_path) == 2


def test_numerical_abort_writes_last_good_state(tmp_path, capsys):
    p = tmp_path / "blowup.toml"
    p.write_text(
        'kind = "bohmion"\nname = "blowup"\n'
        "[ensemble]\npositions = [[0.0]]\nmomenta = [[500.0]]\n"
        "[integrator]\ndt = 0.01\nsteps = 1000\n"
    )
    assert _run("run", p, "--out", tmp_path) == cli.EXIT_ABORT
    err = capsys.readouterr().err
    assert "last good state" in err
    last = tmp_path / "blowup/last_good.json"
    assert last.is_file() and str(last) in err
    m = json.loads((tmp_path / "blowup/manifest.json").read_text())
    assert m["status"] == "aborted"
    assert "last_good.json" in m["files"]


def test_unknown_verify_filter(tmp_path, capsys):
    assert _run("verify", "no_such_check", "--out", tmp_path) == cli.EXIT_CONFIG
    assert "verify.filter" in capsys.readouterr().err


def test_verify_writes_summary(tmp_path):
    assert _run("verify", "core_numerics", "--out", tmp_path) == 0
    d = tmp_path / "verify"
    header = (d / "verify_summary.csv").read_text().splitlines()[0]
    assert header == "module,check,measurement,value,tolerance,pass"
    summary = json.loads((d / "verify_summary.json").read_text())
    assert summary["failed"] == 0 and summary["count"] == 4


def test_verify_cli_module_manifest(tmp_path):
    # the determinism check writes scratch runs outside the run directory
    assert _run("verify", "cli", "--out", tmp_path) == 0
    m = json.loads((tmp_path / "verify/manifest.json").read_text())
    assert m["files"] == ["verify_summary.csv", "verify_summary.json"]


def test_zero_tolerance_makes_verify_fail(tmp_path, monkeypatch):
    # a gamed check would still pass with its tolerance removed
    monkeypatch.setitem(verify.TOLERANCES, "core_numerics.quadrature_gaussian.abs_error", 0.0)
    assert _run("verify", "quadrature_gaussian", "--out", tmp_path) == cli.EXIT_FAILED
    rows = (tmp_path / "verify/verify_summary.csv").read_text().splitlines()[1:]
    assert rows and all(r.endswith(",0") for r in rows)


def test_zero_tolerance_makes_acceptance_fail(tmp_path, monkeypatch):
    monkeypatch.setitem(acceptance.TOLERANCES, "c1.abs_phase_minus_pi", 0.0)
    assert _run("verify", "geometry.acceptance_1", "--out", tmp_path) == cli.EXIT_FAILED


def test_scenario_outputs_do_not_leak_between_runs(tmp_path):
    src = ROOT / "scenarios/jt_berry_phase.toml"
    assert _run("run", src, "--out", tmp_path) == 0
    shutil.rmtree(tmp_path / "jt_berry_phase")
    assert _run("run", src, "--out", tmp_path) == 0
    m = json.loads((tmp_path / "jt_berry_phase/manifest.json").read_text())
    assert sorted(m["files"]) == sorted(p.name for p in (tmp_path / "jt_berry_phase").iterdir() if p.name != "manifest.json")
