"""Command-line entry point.

Subcommands: le-curve, avg-le, layer-study, convergence-study,
compile-gate, validate.  Exit codes: 0 success, 2 config error,
3 numerical failure (positivity lost, vanishing block), 4 budget
exhausted.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .errors import (
    BudgetExhaustedError,
    ConfigError,
    NotHermitianError,
    PositivityLostError,
    SingularEtaError,
    VanishingBlockError,
)
from .experiments import ExperimentConfig, run_avg_le_sweep, run_convergence_study, \
    run_le_curve, run_layer_study, compile_gate

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_BUDGET = 4

_NUMERICAL_FAILURES = (PositivityLostError, VanishingBlockError, SingularEtaError,
                       NotHermitianError, OverflowError)


def _common(parser):
    parser.add_argument("--config", required=True, help="JSON experiment config")
    parser.add_argument("--out", default=None, help="output directory (default: config's)")
    parser.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    parser.add_argument("--seed", type=int, default=None, help="override optimizer seed")
    parser.add_argument("--midpoint", action="store_true",
                        help="sample the propagator at segment midpoints")
    parser.add_argument("--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nhsim",
                                description="Non-Hermitian dynamics via dilation + "
                                            "variational gate compilation")
    sub = p.add_subparsers(dest="command", required=True)
    for name, desc in [
        ("le-curve", "Loschmidt-echo curves over the time grid"),
        ("avg-le", "time-averaged echo over the configured window"),
        ("layer-study", "minimal layer count vs register size and fitness target"),
        ("convergence-study", "fitness vs iteration per register size"),
        ("compile-gate", "compile one dilated evolution (or raw matrix) and persist it"),
        ("validate", "lint a config file"),
    ]:
        sp = sub.add_parser(name, help=desc)
        _common(sp)
        if name == "compile-gate":
            sp.add_argument("--time", type=float, default=None,
                            help="evolution time of the dilated target")
            sp.add_argument("--matrix", default=None,
                            help=".npy file with a raw target unitary")
    return p


def _load(args) -> tuple:
    cfg = ExperimentConfig.from_file(args.config)
    if args.seed is not None:
        cfg.optimizer = type(cfg.optimizer)(**{
            **cfg.optimizer.__dict__, "seed": args.seed})
    if args.midpoint:
        cfg.midpoint = True
    out = args.out if args.out is not None else cfg.output
    return cfg, out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg, out = _load(args)
        if args.command == "validate":
            print(f"config OK: {args.config}")
            if args.verbose:
                print(json.dumps(cfg.resolved(), indent=2, sort_keys=True))
            return 0
        if args.command == "le-curve":
            results = run_le_curve(cfg, out, workers=args.workers)
            print(f"wrote {len(results)} curve(s) to {out}")
            return 0
        if args.command == "avg-le":
            rows = run_avg_le_sweep(cfg, out, workers=args.workers)
            for ns, g, lth, lsim in rows:
                print(f"n_sites={ns} g={g:g} avg_le_theory={lth:.6f} avg_le_sim={lsim:.6f}")
            return 0
        if args.command == "layer-study":
            rows, exhausted = run_layer_study(cfg, out)
            for nq, ft, mean_l, std_l in rows:
                print(f"N={nq} F_target={ft:g} layers={mean_l:.1f} +- {std_l:.1f}")
            if exhausted:
                for line in exhausted:
                    print(f"budget exhausted: {line}", file=sys.stderr)
                if all(np.isnan(r[2]) for r in rows):
                    return EXIT_BUDGET
            return 0
        if args.command == "convergence-study":
            _, crossings = run_convergence_study(cfg, out)
            for nq, cross in crossings:
                where = f"iteration {cross}" if cross is not None else "not reached"
                print(f"N={nq}: F >= 0.995 at {where}")
            return 0
        if args.command == "compile-gate":
            params, fit, iters, duration, path, cached = compile_gate(
                cfg, out, t=args.time, matrix_path=args.matrix)
            src = "cache hit" if cached else f"{iters} iterations"
            print(f"compiled L={params.layers} N={params.n_qubits} ({src}): "
                  f"F={fit:.6f}, duration {duration:g} (L*t_s), artifact {path}")
            if fit < cfg.optimizer.target_fitness:
                print(f"target fitness {cfg.optimizer.target_fitness} not reached",
                      file=sys.stderr)
                return EXIT_BUDGET
            return 0
        raise AssertionError(f"unhandled command {args.command}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _NUMERICAL_FAILURES as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except BudgetExhaustedError as exc:
        print(f"budget exhausted: {exc}", file=sys.stderr)
        return EXIT_BUDGET


if __name__ == "__main__":
    sys.exit(main())
