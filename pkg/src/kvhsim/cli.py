"""Command line entry point.

    kvhsim run CONFIG [--output DIR] [--no-plots]
    kvhsim oracle CONFIG [--output DIR] [--no-plots]
    kvhsim compare DIR_A DIR_B [--output DIR] [--no-plots]
    kvhsim validate CONFIG
    kvhsim presets

CONFIG is an INI file or the name of a shipped preset. Exit codes: 0
success, 2 configuration error, 3 numerical-invariant abort (an
``error.json`` record is written to the run directory and echoed on
stderr).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .compare import ComparisonError, compare_runs
from .config import PRESETS, emit_config, load_config, preset_config
from .errors import ConfigError, InvariantViolation
from .experiments import oracle_config, run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_INVARIANT = 0, 2, 3


def _load(spec):
    if os.path.exists(spec):
        return load_config(spec)
    if spec in PRESETS:
        return preset_config(spec)
    raise ConfigError([f"no config file or preset named {spec!r}"])


def _run(cfg, args):
    res = run_experiment(cfg, args.output, render=not args.no_plots)
    print(f"{cfg.model}: {len(res.rows)} checkpoints -> {res.directory}")
    for name, chk in res.manifest.get("checks", {}).items():
        print(f"  {name:14s} {chk['value']:.3e}  tol {chk['tol']:.1e}  "
              f"{'ok' if chk['pass'] else 'FAIL'}")
    return EXIT_OK


def main(argv=None):
    ap = argparse.ArgumentParser(prog="kvhsim", description=__doc__.split("\n\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)
    for name in ("run", "oracle"):
        p = sub.add_parser(name)
        p.add_argument("config")
        p.add_argument("--output", default=None)
        p.add_argument("--no-plots", action="store_true")
    p = sub.add_parser("compare")
    p.add_argument("dir_a")
    p.add_argument("dir_b")
    p.add_argument("--output", default=None)
    p.add_argument("--no-plots", action="store_true")
    p = sub.add_parser("validate")
    p.add_argument("config")
    sub.add_parser("presets")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")

    try:
        if args.cmd == "presets":
            for name in sorted(PRESETS):
                print(name)
            return EXIT_OK
        if args.cmd == "validate":
            cfg = _load(args.config)
            sys.stdout.write(emit_config(cfg))
            return EXIT_OK
        if args.cmd == "run":
            return _run(_load(args.config), args)
        if args.cmd == "oracle":
            return _run(oracle_config(_load(args.config)), args)
        rep = compare_runs(args.dir_a, args.dir_b, args.output, render=not args.no_plots)
        print(json.dumps(rep.summary, indent=2))
        return EXIT_OK
    except ConfigError as exc:
        for v in exc.violations:
            print(f"config error: {v}", file=sys.stderr)
        return EXIT_CONFIG
    except ComparisonError as exc:
        print(f"compare error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantViolation as exc:
        print(json.dumps(exc.record(), default=str), file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
