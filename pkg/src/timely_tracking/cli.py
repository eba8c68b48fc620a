"""Command line entry point.

    timely-tracking solve --config pop.json --seed 7 --format json --out -
    timely-tracking fig5 --restarts 30 --out results/fig5.csv
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from . import experiments as ex
from .experiments import ConfigError, ScenarioConfig

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NOT_CONVERGED = 2

COMMANDS = ("eval", "solve", "simulate", "fig4", "fig5", "fig6", "fig7")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage; 2 is reserved for non-convergence here
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON scenario/population file")
    common.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    common.add_argument("--restarts", type=int, help="random restarts per solve")
    common.add_argument("--tol", type=float, help="KKT residual tolerance")
    common.add_argument("--horizon", type=float, help="simulated time per person")
    common.add_argument("--out", help="output path, '-' for stdout")
    common.add_argument("--format", choices=("csv", "json"), dest="fmt")
    common.add_argument("--strict", action="store_true",
                        help="exit 2 if any solve did not converge")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="timely-tracking",
                     description="Closed-form error, test-rate optimization and simulation "
                                 "for tracking binary Markov sources.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "eval": "evaluate the closed-form error of the config's policy",
        "solve": "optimize test rates for the config's population",
        "simulate": "Monte Carlo check of a policy (config policy, else the optimized one)",
        "fig4": "per-person optimal / uniform / untested error",
        "fig5": "error against total test rate C",
        "fig6": "error against population size n",
        "fig7": "error components and rate totals against theta",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def _config(args) -> ScenarioConfig:
    cfg = ScenarioConfig.load(args.config) if args.config else ScenarioConfig.paper_default()
    solver = cfg.solver
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {args.seed}")
        solver = dataclasses.replace(solver, seed=args.seed)
    if args.restarts is not None:
        if args.restarts < 1:
            raise ConfigError(f"--restarts must be >= 1, got {args.restarts}")
        solver = dataclasses.replace(solver, restarts=args.restarts)
    if args.tol is not None:
        if not args.tol > 0:
            raise ConfigError(f"--tol must be positive, got {args.tol}")
        solver = dataclasses.replace(solver, tol=args.tol)
    sim = cfg.sim
    if args.horizon is not None:
        if not args.horizon > 0:
            raise ConfigError(f"--horizon must be positive, got {args.horizon}")
        sim = dataclasses.replace(sim, horizon=args.horizon)
    return dataclasses.replace(cfg, solver=solver, sim=sim,
                               out=args.out if args.out is not None else cfg.out,
                               fmt=args.fmt or cfg.fmt)


def run(args) -> tuple[ex.ExperimentResult, ScenarioConfig]:
    cfg = _config(args)
    if args.command == "eval":
        if cfg.policy is None:
            raise ConfigError("eval needs a 'policy' entry in the config")
        return ex.evaluate(cfg.build(), cfg.policy), cfg
    if args.command == "solve":
        spec = cfg.build()
        return ex.solve_table(spec, cfg.solve(spec, init=cfg.policy)), cfg
    if args.command == "simulate":
        spec = cfg.build()
        policy = cfg.policy if cfg.policy is not None else cfg.solve(spec).policy
        return ex.simulate_table(spec, policy, cfg.sim.horizon, cfg.solver.seed), cfg
    return ex.EXPERIMENTS[args.command](cfg), cfg


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        result, cfg = run(args)
        text = result.render(cfg.fmt)
        ex.write_output(text, cfg.out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if args.strict and not all(r.converged for r in result.reports):
        print("error: solver did not converge", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
