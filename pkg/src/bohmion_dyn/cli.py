"""Command line entry point ``bohmion-dyn``.

Exit codes: 0 success, 1 checks failed, 2 invalid configuration or usage,
3 numerical abort (the last finite state is written and its path printed).
"""
from __future__ import annotations

import argparse
import hashlib
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import _accel, config
from ._version import __version__
from .errors import ConfigError, NumericalAbort
from .io import track, write_json

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_ABORT = 0, 1, 2, 3


def _add_common(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--threads", type=int, default=d(1), metavar="N",
                   help="worker threads for data-parallel kernels (default 1, bit-reproducible)")
    p.add_argument("--out", default=d("out"), metavar="DIR", help="output root directory (default ./out)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bohmion-dyn", description="Bohmion dynamics and grid references.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--print-defaults", nargs="?", const="bohmion", metavar="KIND",
                        help="print the default scenario TOML for KIND and exit")
    _add_common(parser, suppress=False)
    sub = parser.add_subparsers(dest="command")
    run = sub.add_parser("run", help="run a scenario file")
    run.add_argument("path", help="scenario TOML file")
    _add_common(run, suppress=True)
    ver = sub.add_parser("verify", help="run the verification suite")
    ver.add_argument("filter", nargs="?", default="", help="module, check name or module.check substring")
    _add_common(ver, suppress=True)
    return parser


def _manifest(run_dir: Path, cfg: dict, sha: str, result: dict, status: str, files: list) -> Path:
    root = run_dir.resolve()
    # scratch files written elsewhere (e.g. by the determinism check) are not run artifacts
    rel = sorted({str(p.relative_to(root)) for p in map(lambda f: Path(f).resolve(), files) if p.is_relative_to(root)})
    manifest = {
        "schema": 1,
        "scenario": cfg["name"],
        "kind": cfg["kind"],
        "config_sha256": sha,
        "code_version": __version__,
        "backend": _accel.backend(),
        "threads": _accel.get_threads(),
        "conventions": result.get("conventions", {}),
        "stats": result.get("stats", {}),
        "status": status,
        "files": rel,
    }
    return write_json(run_dir / "manifest.json", manifest)


def _execute(cfg: dict, sha: str, out_root: Path) -> int:
    from .runner import conventions, run_scenario

    run_dir = out_root / cfg["name"]
    with track() as files:
        try:
            result = run_scenario(cfg, run_dir)
        except NumericalAbort as exc:
            path = getattr(exc, "path", None)
            result = {"conventions": conventions(cfg), "stats": {"aborted_at_step": exc.step}}
            _manifest(run_dir, cfg, sha, result, "aborted", files)
            print(f"numerical abort at step {exc.step}: {exc}", file=sys.stderr)
            print(f"last good state: {path}", file=sys.stderr)
            return EXIT_ABORT
    status = "ok" if result["passed"] else "failed"
    m = _manifest(run_dir, cfg, sha, result, status, files)
    print(f"{cfg['kind']} '{cfg['name']}': {status}; manifest {m}")
    return EXIT_OK if result["passed"] else EXIT_FAILED


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.print_defaults is not None:
        if args.print_defaults not in config.KINDS:
            print(f"error: unknown kind {args.print_defaults!r}; choose from {', '.join(config.KINDS)}",
                  file=sys.stderr)
            return EXIT_CONFIG
        sys.stdout.write(config.defaults_toml(args.print_defaults))
        return EXIT_OK
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    _accel.set_threads(args.threads)
    out_root = Path(args.out)
    try:
        if args.command == "run":
            cfg, sha = config.load(args.path)
        else:
            from .verify import select

            cfg = config.defaults("verify_all")
            cfg["name"] = "verify"
            cfg["verify"]["filter"] = args.filter
            try:
                select(args.filter or None)
            except KeyError as exc:
                raise ConfigError(exc.args[0], "verify.filter") from None
            sha = hashlib.sha256(config.dumps(cfg).encode()).hexdigest()
        return _execute(cfg, sha, out_root)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
