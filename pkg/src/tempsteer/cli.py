"""Command-line entry point.

Exit codes: 0 success, 1 validation error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys

import numpy as np

from . import __version__, dynamics, experiments, steering, tsr
from .experiments import ConfigError, ExperimentConfig

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2

# flag -> help text; every config field is exposed under its own name
_HELP = {
    "settings": "basis index lists, e.g. 1,2 1,2,3 (one curve family each)",
    "start": "grid start in the configured unit",
    "stop": "grid stop in the configured unit",
    "points": "number of grid points",
    "unit": "time unit: 1/gamma (coupled qubits), us or s",
    "reduction": "trace-out or project (radical pair)",
    "frame": "electron measurement frame: singlet-triplet or product",
    "method": "propagator: DOP853, RK45 or expm",
    "g": "qubit exchange coupling",
    "gamma": "qubit decay rates (sweep)",
    "theta": "field polar angles in radians (sweep)",
    "phi": "field azimuth in radians",
    "b0": "field strength in tesla",
    "tensor": "hyperfine tensors: a = diag(0,0,a_z), b = diag(a_z/2,a_z/2,a_z) (sweep)",
    "a_z": "hyperfine strength, angular frequency in 1/s",
    "kappa": "recombination rate in 1/s",
    "gamma_dephasing": "electron dephasing rate in 1/s",
    "weight": "nuclear spin-up weights a (sweep)",
    "max_iters": "solver iteration cap",
    "gap_tol": "solver duality-gap tolerance",
    "feas_tol": "solver feasibility tolerance",
    "workers": "worker processes (default: number of cores)",
    "output": "output directory",
}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its keys")
    for f in dataclasses.fields(ExperimentConfig):
        if f.name == "model":
            continue
        multi = str(f.type).startswith("tuple")
        p.add_argument(
            "--" + f.name.replace("_", "-"),
            dest=f.name,
            nargs="+" if multi else None,
            default=None,
            help=_HELP.get(f.name),
        )


def _config_from_args(model: str, args) -> ExperimentConfig:
    overrides = {
        f.name: getattr(args, f.name)
        for f in dataclasses.fields(ExperimentConfig)
        if f.name != "model" and getattr(args, f.name, None) is not None
    }
    if args.config:
        cfg = experiments.load_config(args.config, overrides)
        if cfg.model != model:
            raise ConfigError(f"field 'model': config is for {cfg.model!r}, command is {model!r}")
        return cfg.resolved()
    return experiments.config_from_mapping(dict(overrides, model=model)).resolved()


def _cmd_experiment(model: str, args) -> int:
    cfg = _config_from_args(model, args)
    result = experiments.run_experiment(cfg)
    for c in result.curves:
        vt = c.vanish_time()
        when = "never" if vt["time"] is None else f"{vt['time']:.6g} {cfg.unit} (after {vt['bracket'][0]:.6g})"
        print(f"{c.name}: TSR(0) = {c.tsr[0]:.6f}, vanishes {when}")
    print(f"wrote {result.directory}")
    if result.failures:
        print(f"{result.failures} solver failure(s); see manifest.json", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def _cmd_mub_check(args) -> int:
    rep = steering.verify_mub(steering.build_mubs_d4(verbatim=args.verbatim))
    print("\n".join(rep.lines()))
    return EXIT_OK if rep.passed else EXIT_INVALID


def _cmd_tsr_from_file(args) -> int:
    try:
        asm = steering.load_assemblage(args.file)
        asm.validate()
    except (OSError, ValueError, KeyError, TypeError) as exc:
        print(f"invalid assemblage: {exc}", file=sys.stderr)
        return EXIT_INVALID
    problem = tsr.assemble_problem(asm)
    sol = tsr.solve(problem, tsr.SolverOptions(max_iters=args.max_iters))
    cert = tsr.dual_certificate_check(sol, problem)
    out = dict(sol.summary(), certificate_passed=cert.passed)
    if sol.optimal:
        out["tsr"] = 0.0 if sol.primal_value < tsr.UNSTEERABLE_FLOOR else sol.primal_value
    print(json.dumps(out, indent=1))
    ok = sol.optimal and sol.primal_value >= tsr.NEGATIVE_FLOOR and math.isfinite(sol.primal_value)
    return EXIT_OK if ok else EXIT_NUMERICAL


def _cmd_self_test(args) -> int:
    checks = experiments.check_suite(corrupt_mub=args.corrupt_mub, max_iters=args.max_iters)
    for c in checks:
        print(c.line())
    failed = [c for c in checks if not c.passed]
    if not failed:
        print("self-test: PASS")
        return EXIT_OK
    print(f"self-test: FAIL at {failed[0].name}")
    return EXIT_NUMERICAL if failed[0].numerical else EXIT_INVALID


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tempsteer", description="Temporal steering robustness experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mub-check", help="verify the d = 4 mutually unbiased bases")
    p.add_argument("--verbatim", action="store_true", help="check the misprinted table instead")

    for model in experiments.MODELS:
        p = sub.add_parser(model, help=f"run a {model} sweep")
        _add_config_flags(p)

    p = sub.add_parser("tsr-from-file", help="robustness of a stored assemblage")
    p.add_argument("file")
    p.add_argument("--max-iters", type=int, default=200)

    p = sub.add_parser("self-test", help="MUB, solver and invariant checks")
    p.add_argument("--corrupt-mub", action="store_true", help="inject the misprinted MUB table")
    p.add_argument("--max-iters", type=int, default=200, help="solver iteration cap")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "mub-check":
            return _cmd_mub_check(args)
        if args.command == "tsr-from-file":
            return _cmd_tsr_from_file(args)
        if args.command == "self-test":
            return _cmd_self_test(args)
        return _cmd_experiment(args.command, args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (tsr.SdpError, dynamics.IntegrationError, dynamics.FullyDecayedError,
            np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
