"""Command-line runner: ``fraclab <experiment> --config PATH [options]``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import hashlib
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import EXPERIMENTS, ExperimentConfig, config_hash, load_config
from .errors import BufferTooShortError, ConfigurationError, RegimeError, SolverError
from .experiments import run_experiment, to_json

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fraclab", description="Non-local elliptic and parabolic experiments.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS + ("run",):
        help_text = "run the experiment named in the config" if name == "run" else f"run a {name} experiment"
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", required=True, type=Path, help="TOML experiment file")
        sp.add_argument("--outdir", type=Path, default=Path("results"), help="output root (default: results)")
        sp.add_argument("--threads", type=int, default=None, help="cap BLAS/FFT worker threads")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        sp.add_argument("--quiet", action="store_true", help="suppress progress messages")
    return ap


def _say(quiet: bool, msg: str):
    if not quiet:
        print(msg, file=sys.stderr)


def _write(outdir: Path, files: dict):
    outdir.mkdir(parents=True, exist_ok=True)
    for name, data in files.items():
        (outdir / name).write_bytes(data)


def _manifest(cfg: ExperimentConfig, files: dict, wall: float, status: str) -> dict:
    return {
        "experiment": cfg.experiment,
        "label": cfg.label,
        "status": status,
        "seed": cfg.seed,
        "config": cfg.raw,
        "config_hash": config_hash(cfg.raw),
        "versions": {"fraclab": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "wall_time_seconds": wall,
        "files": {name: hashlib.sha256(data).hexdigest() for name, data in sorted(files.items())},
    }


def _limit_threads(k: int | None):
    if k is None:
        return None
    if k < 1:
        raise ConfigurationError("--threads must be positive")
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=k)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.seed)
        if args.command != "run" and cfg.experiment != args.command:
            raise ConfigurationError(f"experiment: config declares {cfg.experiment!r}, "
                                     f"subcommand is {args.command!r}")
        limiter = _limit_threads(args.threads)
    except (ConfigurationError, RegimeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    outdir = args.outdir / cfg.experiment / cfg.label
    _say(args.quiet, f"{cfg.experiment} -> {outdir}")
    start = time.perf_counter()
    try:
        files = run_experiment(cfg)
    except (SolverError, BufferTooShortError) as exc:
        diag = {"error": type(exc).__name__, "message": str(exc),
                "residual_history": list(getattr(exc, "residual_history", ()))}
        _write(outdir, {"diagnostic.json": to_json(diag)})
        _write(outdir, {"manifest.json": to_json(_manifest(cfg, {}, time.perf_counter() - start, "failed"))})
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigurationError, RegimeError) as exc:
        report = getattr(exc, "report", None)
        if report is not None:
            _write(outdir, {"diagnostic.json": to_json(report)})
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    finally:
        if limiter is not None:
            limiter.restore_original_limits()
    wall = time.perf_counter() - start
    _write(outdir, files)
    _write(outdir, {"manifest.json": to_json(_manifest(cfg, files, wall, "ok"))})
    _say(args.quiet, f"done in {wall:.2f} s: {', '.join(sorted(files))}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
