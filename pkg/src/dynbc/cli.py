"""Command-line entry point ``dynbc``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 blow-up or a requested certificate (convergence or Lojasiewicz fit)
declined.  Logging verbosity comes from ``DYNBC_LOG`` (error, info, debug).
"""

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .discretization import assemble_operators, build_mesh
from .exceptions import ConfigurationError
from .model import compute_lambda
from .scenario import (
    EXIT_CONFIG,
    EXIT_OK,
    _json_safe,
    _model_check,
    default_workers,
    parse_scenario,
    run_scenario_file,
)

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}

SCENARIO_HELP = """\
scenario file (YAML); keys and defaults:
  name: <file stem>
  mesh: {dim: 1, n: N} or {dim: 2, nx: NX, ny: NY}; lengths: [1.0, ...]
  model: {mu: 0|1 (default 0), f_coeffs: [c0, c1, ...] (required, f(s) = sum c_k s^k)}
  flow: {dt0: 1e-3, dt_min: 1e-10, dt_max: 1.0, t_end: 100.0, tol_stat: 1e-9,
         scheme: implicit|semi_implicit, newton_tol: 1e-12, newton_max_iter: 30,
         record_every: 1, energy_backtrack: true}
  init: {kind: fourier_random|constant|file, seed: 0, amplitude: 1.0, value: 0.0, path: null}
  outputs: out/<name>   (relative to the scenario file)
  actions: [run]        subset of run, equilibria, lojasiewicz, lambda, check-model, dissipation
"""


def _configure_logging():
    level = os.environ.get("DYNBC_LOG", "error").lower()
    if level not in LOG_LEVELS:
        print(f"DYNBC_LOG: expected one of {', '.join(LOG_LEVELS)}, got {level!r}", file=sys.stderr)
        return False
    logging.basicConfig(level=LOG_LEVELS[level], format="%(levelname)s %(name)s: %(message)s")
    return True


def _cmd_run(args):
    files = args.scenario
    if len(files) > 1 and args.out is not None:
        outs = [Path(args.out) / parse_or_stem(f) for f in files]
    else:
        outs = [args.out] * len(files)
    jobs = [(f, o, args.seed, args.force) for f, o in zip(files, outs)]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=default_workers(args.jobs)) as pool:
            codes = list(pool.map(_run_one, jobs))
    else:
        codes = [_run_one(j) for j in jobs]
    return max(codes)


def parse_or_stem(path):
    try:
        return parse_scenario(path).name
    except ConfigurationError:
        return Path(path).stem


def _run_one(job):
    path, out, seed, force = job
    return run_scenario_file(path, out=out, seed=seed, force=force)


def _cmd_lambda(args):
    try:
        shape = (args.n,) * args.dim
        mesh = build_mesh(args.dim, shape, (args.length,) * args.dim)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    lam = compute_lambda(assemble_operators(mesh))
    print(json.dumps({"lambda": lam, "dim": args.dim, "shape": list(shape), "lengths": [args.length] * args.dim}))
    return EXIT_OK


def _cmd_check_model(args):
    try:
        s = parse_scenario(args.scenario)
        _, ops = s.build()
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps(_json_safe(_model_check(s.model(), ops)), indent=2))
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="dynbc",
        description="Gradient-flow simulator for the semilinear heat equation with dynamical boundary condition.",
        epilog="Set DYNBC_LOG=error|info|debug to control logging. "
        "Exit codes: 0 ok, 2 configuration error, 3 numerical failure, 4 blow-up or certificate declined.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser(
        "run",
        help="run one or more scenarios",
        description=SCENARIO_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("scenario", nargs="+", help="scenario file(s)")
    p.add_argument("--out", help="output directory (a parent directory when several scenarios are given)")
    p.add_argument("--seed", type=int, help="override init.seed")
    p.add_argument("--force", action="store_true", help="overwrite an existing output directory")
    p.add_argument("--jobs", type=int, default=1, help="run up to K scenarios concurrently (default 1)")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("lambda", help="best Sobolev constant on a uniform mesh; prints JSON")
    p.add_argument("--dim", type=int, default=1, choices=(1, 2))
    p.add_argument("--n", type=int, default=201, help="nodes per axis (default 201)")
    p.add_argument("--length", type=float, default=1.0, help="side length (default 1.0)")
    p.set_defaults(func=_cmd_lambda)

    p = sub.add_parser("check-model", help="growth and coercivity checks for a scenario's model; prints JSON")
    p.add_argument("scenario")
    p.set_defaults(func=_cmd_check_model)
    return parser


def main(argv=None):
    if not _configure_logging():
        return EXIT_CONFIG
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors, 0 on --help
        return int(exc.code or 0)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
