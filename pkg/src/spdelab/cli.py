"""Command line entry point.

    spdelab SUBCOMMAND --config PATH [--out DIR] [--seed N] [--threads N]

Subcommands: check, simulate, solve, converge, regularity, grr run the named
experiment; validate lists every config problem without running anything.
Exit codes: 0 success, 2 the experiment ran but its verdict failed,
1 configuration or execution error.  The output directory may also be set
through SPDELAB_OUT (the --out flag wins).
"""

import argparse
import datetime
import os
import platform
import sys
import time

import numpy as np
import scipy

from . import __version__
from .config import check_config, config_hash, load_config, validate_config
from .errors import ConfigError, SpdeLabError
from .experiments import RUNNERS
from .fieldio import write_json

EXIT_OK, EXIT_ERROR, EXIT_VERDICT = 0, 1, 2
SUBCOMMANDS = tuple(RUNNERS) + ("validate",)


def _parser():
    p = argparse.ArgumentParser(prog="spdelab", description=__doc__.split("\n\n")[0])
    p.add_argument("command", choices=SUBCOMMANDS)
    p.add_argument("--config", required=True, help="YAML experiment config")
    p.add_argument("--out", help="output directory (overrides config and SPDELAB_OUT)")
    p.add_argument("--seed", type=int, help="master seed (overrides ensemble.seed)")
    p.add_argument("--threads", type=int, help="worker cap for FFTs; results do not depend on it")
    return p


def _out_dir(args, cfg):
    if args.out:
        return args.out
    if os.environ.get("SPDELAB_OUT"):
        return os.environ["SPDELAB_OUT"]
    return cfg.get("output", {}).get("dir", "out")


def _print_problems(problems, stream):
    for msg in problems:
        print(f"error: {msg}", file=stream)


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        _print_problems(exc.problems, sys.stderr)
        return EXIT_ERROR
    if args.seed is not None:
        cfg.setdefault("ensemble", {})["seed"] = args.seed
    if args.command == "validate":
        problems = validate_config(cfg)
        _print_problems(problems, sys.stdout)
        if not problems:
            print("ok")
        return EXIT_ERROR if problems else EXIT_OK
    if cfg.get("experiment") != args.command:
        print(f"error: experiment: config describes {cfg.get('experiment')!r}, "
              f"not {args.command!r}", file=sys.stderr)
        return EXIT_ERROR
    try:
        check_config(cfg)
    except ConfigError as exc:
        _print_problems(exc.problems, sys.stderr)
        return EXIT_ERROR
    out = _out_dir(args, cfg)
    os.makedirs(out, exist_ok=True)
    start = time.time()
    manifest = {
        "experiment": args.command,
        "config": os.path.abspath(args.config),
        "config_hash": config_hash(args.config),
        "seed": int(cfg.get("ensemble", {}).get("seed", 0)),
        "versions": {"spdelab": __version__, "numpy": np.__version__,
                     "scipy": scipy.__version__, "python": platform.python_version()},
        "started": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    try:
        report, verdict = RUNNERS[args.command](cfg, out, args.threads)
    except (SpdeLabError, ValueError, OSError) as exc:
        manifest.update(status="error", error=f"{type(exc).__name__}: {exc}",
                        wall_time=time.time() - start, exit_code=EXIT_ERROR)
        write_json(os.path.join(out, "manifest.json"), manifest)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    code = EXIT_OK if verdict else EXIT_VERDICT
    report = {"experiment": args.command, "verdict": bool(verdict), **report}
    write_json(os.path.join(out, "report.json"), report)
    manifest.update(status="ok" if verdict else "verdict_failed", wall_time=time.time() - start,
                    exit_code=code,
                    outputs=sorted(f for f in os.listdir(out) if f != "manifest.json"))
    write_json(os.path.join(out, "manifest.json"), manifest)
    print(f"{args.command}: {'pass' if verdict else 'verdict failed'} -> {out}")
    return code


if __name__ == "__main__":
    sys.exit(main())
