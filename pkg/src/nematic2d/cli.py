"""Command line entry point: ``nematic2d <subcommand> ...``.

Exit codes: 0 success, 1 a validation check failed, 2 configuration error,
3 numerical instability, 4 close-approach halt under ``--strict-halt``.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import load_config
from .errors import BesselOverflowError, ConfigError, DomainError, NumericalInstabilityError
from .experiments import run, write_maxslope_demo, write_specfun_table
from .specfun import make_params

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_CONFIG = 2
EXIT_INSTABILITY = 3
EXIT_CLOSE_APPROACH = 4


def _parser():
    p = argparse.ArgumentParser(prog="nematic2d", description="Multiscale 2D nematic dynamics.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run the experiment described by a config file")
    s.add_argument("--config", required=True)
    s.add_argument("--out", help="output root (overrides output.dir and NEMATIC_OUT_DIR)")
    s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    s.add_argument("--strict-halt", action="store_true", help="exit 4 when a vortex run halts on close approach")

    v = sub.add_parser("validate", help="run the cross-tier acceptance suite")
    v.add_argument("--config", required=True)
    v.add_argument("--out")
    v.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")

    t = sub.add_parser("specfun-table", help="write r,lambda,w_gamma,w_gamma_prime as CSV")
    t.add_argument("--gamma", type=float, required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--r-min", type=float, default=0.0)
    t.add_argument("--r-max", type=float, default=0.99)
    t.add_argument("--n", type=int, default=100)

    m = sub.add_parser("maxslope-demo", help="write the slow-manifold reduction report as CSV")
    m.add_argument("--out", required=True)
    return p


def _overrides(pairs):
    out = {}
    bad = []
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep or not key.strip():
            bad.append(f"--set {pair!r}: expected KEY=VALUE")
        else:
            out[key.strip()] = value.strip()
    if bad:
        raise ConfigError(bad)
    return out


def _simulate(args, force_tier=None):
    overrides = _overrides(args.set)
    if force_tier:
        overrides["tier"] = force_tier
    cfg = load_config(args.config, overrides)
    result = run(cfg, args.out)
    if cfg.tier == "validate":
        for r in result.extra["results"]:
            print(r.line())
        return EXIT_OK if result.status == "passed" else EXIT_VALIDATION
    print(f"{cfg.tier}: {result.status} -> {result.out_dir}")
    if result.status == "close-approach" and getattr(args, "strict_halt", False):
        print("halted on close approach", file=sys.stderr)
        return EXIT_CLOSE_APPROACH
    return EXIT_OK


def _specfun(args):
    problems = []
    if not args.gamma > 0:
        problems.append("--gamma: must be positive")
    if not 0 <= args.r_min < args.r_max < 1:
        problems.append("--r-max: need 0 <= r_min < r_max < 1")
    if args.n < 2:
        problems.append("--n: need at least 2 rows")
    if problems:
        raise ConfigError(problems)
    write_specfun_table(args.out, make_params(args.gamma, 0.1), args.r_min, args.r_max, args.n)
    return EXIT_OK


def _maxslope(args):
    rep = write_maxslope_demo(args.out)
    return EXIT_OK if rep.monotone else EXIT_VALIDATION


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "simulate":
            return _simulate(args)
        if args.command == "validate":
            return _simulate(args, force_tier="validate")
        if args.command == "specfun-table":
            return _specfun(args)
        return _maxslope(args)
    except ConfigError as exc:
        print("configuration error:", file=sys.stderr)
        for problem in exc.problems:
            print(f"  {problem}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalInstabilityError, BesselOverflowError) as exc:
        print(f"numerical instability: {exc}", file=sys.stderr)
        return EXIT_INSTABILITY
    except (DomainError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
