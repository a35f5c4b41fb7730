"""Command-line interface.

Subcommands: ``measure``, ``stein verify``, ``gamma2d``, ``uniform``,
``lognormal``, ``selftest``.  Shared flags: ``--seed``, ``--samples``,
``--out DIR``, ``--config FILE``, ``--quick``, ``--no-plots``.  The worker
count comes from the STEINMAL_WORKERS environment variable (default 1).

Exit codes: 0 success, 1 invariant failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .experiments import (
    ExperimentConfig,
    config_from_file,
    run_gamma2d,
    run_lognormal,
    run_measure_report,
    run_selftest,
    run_stein_verify,
    run_uniform,
)

EXIT_OK = 0
EXIT_INVARIANT = 1
EXIT_CONFIG = 2


def _add_shared(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None,
                        help="base RNG seed (default 20240)")
    parser.add_argument("--samples", type=int, default=None,
                        help="Monte Carlo sample size per estimator")
    parser.add_argument("--out", default=None, metavar="DIR",
                        help="output directory (default .)")
    parser.add_argument("--config", default=None, metavar="FILE",
                        help="experiment config file; flags override it")
    parser.add_argument("--quick", action="store_true",
                        help="reduced schedules and sample sizes")
    parser.add_argument("--no-plots", action="store_true",
                        help="skip SVG figure rendering")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="steinmal",
        description="Stein-method bounds for asymptotic independence with "
                    "diffusion-invariant targets: measure diagnostics, "
                    "equation verification, and the three reference "
                    "experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("measure", help="tabulate a target measure's fields")
    p.add_argument("--measure", default="uniform01",
                   help="built-in name (gaussian, centered_gamma, uniform01, "
                        "beta:a,b, lognormal01)")
    p.add_argument("--measure-config", default=None, metavar="FILE",
                   help="user density config file (overrides --measure)")
    p.add_argument("--grid", type=int, default=None, help="grid size")
    _add_shared(p)

    p_stein = sub.add_parser("stein", help="Stein equation tools")
    stein_sub = p_stein.add_subparsers(dest="stein_command", required=True)
    p = stein_sub.add_parser(
        "verify", help="check the solution bounds on a grid "
                       "(--out may name the report JSON directly)")
    p.add_argument("--measure", default="uniform01")
    p.add_argument("--measure-config", default=None, metavar="FILE")
    p.add_argument("--grid", type=int, default=None, help="grid size K")
    p.add_argument("--out-file", default=None, metavar="FILE",
                   help="write the bound reports as JSON")
    _add_shared(p)

    for name, help_text in (
            ("gamma2d", "overlapping second-chaos pair, Gamma-law target"),
            ("uniform", "correlated uniform pair"),
            ("lognormal", "lognormal limit with a Gaussian block")):
        p = sub.add_parser(name, help=help_text)
        _add_shared(p)

    p = sub.add_parser("selftest", help="run the cross-module invariant suite")
    _add_shared(p)
    return parser


def _config_from_args(args) -> ExperimentConfig:
    if args.config:
        cfg = config_from_file(args.config)
    else:
        cfg = ExperimentConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.samples is not None:
        overrides["samples"] = args.samples
    if getattr(args, "out_file", None) is None and args.out is not None \
            and args.out.endswith(".json") and args.command == "stein":
        # `stein verify --out report.json` names the report file directly
        args.out_file = args.out
        args.out = None
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.quick:
        overrides["quick"] = True
    if args.no_plots:
        overrides["plots"] = False
    if getattr(args, "measure", None):
        overrides["measure"] = args.measure
    if getattr(args, "measure_config", None):
        overrides["measure_config"] = args.measure_config
    if getattr(args, "grid", None):
        overrides["grid_points"] = args.grid
    overrides["experiment"] = args.command
    return replace(cfg, **overrides)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _config_from_args(args)
    except (ValueError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "measure":
            run_measure_report(cfg)
            return EXIT_OK
        if args.command == "stein":
            payload = run_stein_verify(cfg, out_file=args.out_file)
            return EXIT_OK if payload["all_passed"] else EXIT_INVARIANT
        if args.command == "gamma2d":
            run_gamma2d(cfg)
            return EXIT_OK
        if args.command == "uniform":
            payload = run_uniform(cfg)
            ok = all(r["one_sided_pass"] for r in payload["rows"])
            return EXIT_OK if ok else EXIT_INVARIANT
        if args.command == "lognormal":
            run_lognormal(cfg)
            return EXIT_OK
        if args.command == "selftest":
            return EXIT_OK if run_selftest(cfg) else EXIT_INVARIANT
    except (ValueError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, AssertionError) as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    raise AssertionError(f"unhandled command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
