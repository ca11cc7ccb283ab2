"""Command-line front end: simulate, sweep, rosenbrock.

Each command runs one of the diagnostic experiments and writes
machine-readable CSV reports (plus rendered figures unless --no-plot) and a
manifest into the output directory.  Exit codes: 0 success, 1 parse error,
2 validation error, 3 solver failure (reports are still written).
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .circuit import FaultSpec, Netlist, load_netlist
from .diagnostics import AnomalyConfig, SolverMap, eigs, linearize_map_probe
from .fixtures import FIXTURE_NAMES, fixture_defaults, get_fixture
from .homotopy import StepperConfig, run
from .nlsolve import SolverConfig, rosenbrock_system
from .reports import (
    file_digest,
    write_manifest,
    write_parameter_sweep,
    write_rosenbrock_spectra,
    write_run_report,
    write_stepsize_sweep,
)
from .sweeps import stepsize_sweep, sweep_parameter

EXIT_OK = 0
EXIT_PARSE = 1
EXIT_VALIDATION = 2
EXIT_SOLVER_FAILURE = 3


class _ParseError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports bad flags as exit code 1 instead of exiting."""

    def error(self, message):
        raise _ParseError(message)


def parse_values(expr: str, default_count: int) -> List[float]:
    """Parse START:STOP:log|lin[:COUNT] into a list of sweep values."""
    parts = expr.split(":")
    if len(parts) not in (3, 4):
        raise _ParseError(f"bad --values {expr!r}: want START:STOP:log|lin[:COUNT]")
    try:
        start, stop = float(parts[0]), float(parts[1])
        count = int(parts[3]) if len(parts) == 4 else default_count
    except ValueError as exc:
        raise _ParseError(f"bad --values {expr!r}: {exc}") from exc
    scale = parts[2]
    if scale not in ("log", "lin"):
        raise _ParseError(f"bad --values scale {scale!r}: want log or lin")
    if count < 1:
        raise _ParseError("--values COUNT must be >= 1")
    if scale == "log":
        if start <= 0.0 or stop <= 0.0:
            raise _ParseError("log-spaced --values need positive endpoints")
        return list(np.logspace(np.log10(start), np.log10(stop), count))
    return list(np.linspace(start, stop, count))


def _resolve_netlist(args) -> Tuple[Netlist, Tuple[FaultSpec, ...], dict, dict]:
    """Resolve --netlist into (netlist, faults, defaults, input digests)."""
    name = args.netlist
    if name in FIXTURE_NAMES:
        netlist, faults = get_fixture(name, gmin_ohms=args.gmin)
        return netlist, faults, fixture_defaults(name), {"netlist": f"fixture:{name}"}
    path = Path(name)
    if not path.exists():
        raise _ParseError(f"netlist {name!r} is neither a fixture nor a file")
    try:
        netlist, faults = load_netlist(path)
    except (ValueError, OSError) as exc:
        raise _ParseError(f"cannot read netlist {name!r}: {exc}") from exc
    if args.gmin is not None:
        netlist = dataclasses.replace(netlist, gmin_ohms=args.gmin)
    return netlist, faults, {}, {"netlist": file_digest(path)}


def _stepper_from_args(args, defaults) -> StepperConfig:
    dt = args.dt if args.dt is not None else defaults.get("dt")
    t_end = args.t_end if args.t_end is not None else defaults.get("t_end")
    if dt is None or t_end is None:
        raise _ParseError("--dt and --t-end are required for file netlists")
    max_iter = args.max_iter if args.max_iter is not None \
        else int(defaults.get("max_iter", 20))
    solver = SolverConfig(tol=args.tol, max_iter=max_iter, alpha=args.alpha)
    diag = frozenset(m for m in args.diag.split(",") if m)
    return StepperConfig(
        dt=dt, t_end=t_end, order=args.order, solver=solver, diag_mode=diag,
        anomaly=AnomalyConfig(), localize_on_flags=args.localize,
        localize_threshold=args.localize_threshold,
    )


def _config_snapshot(args, stepper: Optional[StepperConfig]) -> dict:
    snap = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    if stepper is not None:
        snap["effective_stepper"] = {
            "dt": stepper.dt,
            "t_end": stepper.t_end,
            "order": stepper.order,
            "diag_mode": sorted(stepper.diag_mode),
            "tol": stepper.solver.tol,
            "max_iter": stepper.solver.max_iter,
            "alpha": stepper.solver.alpha,
            "localize_on_flags": stepper.localize_on_flags,
            "localize_threshold": stepper.localize_threshold,
        }
    return snap


def cmd_simulate(args) -> int:
    netlist, faults, defaults, digests = _resolve_netlist(args)
    stepper = _stepper_from_args(args, defaults)
    report = run(netlist, faults, stepper)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_run_report(out, report)
    write_manifest(out, "simulate", _config_snapshot(args, stepper), digests)
    if args.plot:
        from . import plots
        plots.plot_run(out, report)
    if report.terminated_early:
        print(report.termination_reason, file=sys.stderr)
        return EXIT_SOLVER_FAILURE
    return EXIT_OK


def cmd_sweep(args) -> int:
    netlist, faults, defaults, digests = _resolve_netlist(args)
    stepper = _stepper_from_args(args, defaults)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.mode == "gmin":
        values = parse_values(args.values, default_count=9)

        def family(value):
            if args.netlist in FIXTURE_NAMES:
                return get_fixture(args.netlist, gmin_ohms=value)
            return dataclasses.replace(netlist, gmin_ohms=value), faults

        sweep_stepper = dataclasses.replace(stepper, localize_on_flags=True)
        result = sweep_parameter(family, values, sweep_stepper)
        write_parameter_sweep(out, result, order=stepper.order)
        if args.plot:
            from . import plots
            plots.plot_parameter_sweep(out, result)
    else:
        values = parse_values(args.values, default_count=20)
        base_dt = args.base_dt if args.base_dt is not None else stepper.dt
        result = stepsize_sweep(netlist, faults, base_dt, stepper.t_end, values,
                                orders=(1, 2), stepper=stepper,
                                sample_stride=args.stride)
        write_stepsize_sweep(out, result)
        if args.plot:
            from . import plots
            plots.plot_stepsize_sweep(out, result)
    write_manifest(out, f"sweep:{args.mode}", _config_snapshot(args, stepper), digests)
    return EXIT_OK


def cmd_rosenbrock(args) -> int:
    system = rosenbrock_system(args.dimension)
    if args.jacobian == "analytic":
        solver = SolverConfig(alpha=args.alpha)
    else:
        solver = SolverConfig(alpha=args.alpha, jacobian="forward_fd",
                              fd_step=args.fd_h)
    x_star = np.ones(args.dimension)
    smap = SolverMap.from_system(system, solver)
    M = linearize_map_probe(smap, x_star)
    report = eigs(M, k=args.dimension)
    hessian_eigs = np.sort_complex(np.linalg.eigvals(system.jacobian(x_star)))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_rosenbrock_spectra(out, report.eigenvalues, hessian_eigs)
    write_manifest(out, "rosenbrock", _config_snapshot(args, None), {})
    if args.plot:
        from . import plots
        plots.plot_spectrum(out, report.eigenvalues, hessian_eigs)
    return EXIT_OK


def _add_common(p: argparse.ArgumentParser, netlist: bool = True) -> None:
    if netlist:
        p.add_argument("--netlist", required=True,
                       help="netlist JSON file or fixture name "
                            f"({', '.join(FIXTURE_NAMES)})")
        p.add_argument("--dt", type=float, help="time step [s]")
        p.add_argument("--t-end", type=float, dest="t_end",
                       help="end of the integration window [s]")
        p.add_argument("--order", type=int, default=1, choices=(1, 2))
        p.add_argument("--gmin", type=float, default=None,
                       help="parallel resistance across every diode [ohm]")
        p.add_argument("--diag", default="probe,dmd",
                       help="comma list of diagnostics (probe,dmd)")
        p.add_argument("--localize", action=argparse.BooleanOptionalAction,
                       default=True, help="localize along outlier eigenvectors")
        p.add_argument("--localize-threshold", type=float, default=0.5)
        p.add_argument("--tol", type=float, default=1e-8)
        p.add_argument("--max-iter", type=int, default=None)
        p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--plot", action=argparse.BooleanOptionalAction, default=True,
                   help="render figures alongside the CSV output")


def build_parser() -> _Parser:
    parser = _Parser(prog="nldiag",
                     description="Convergence diagnostics for nonlinear solvers "
                                 "in homotopy/time-stepping loops.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="integrate a circuit and diagnose each step")
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="gmin or step-size sweep")
    _add_common(p)
    p.add_argument("--mode", required=True, choices=("dt", "gmin"))
    p.add_argument("--values", required=True,
                   help="START:STOP:log|lin[:COUNT]")
    p.add_argument("--base-dt", type=float, default=None,
                   help="base trajectory step for --mode dt [s]")
    p.add_argument("--stride", type=int, default=150,
                   help="sample every Nth base step for --mode dt")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("rosenbrock",
                       help="spectrum of the Newton map for the chained "
                            "Rosenbrock gradient at its root")
    p.add_argument("--jacobian", choices=("analytic", "fd"), default="analytic")
    p.add_argument("--fd-h", type=float, default=0.01, dest="fd_h")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--dimension", type=int, default=100)
    _add_common(p, netlist=False)
    p.set_defaults(func=cmd_rosenbrock)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    try:
        return args.func(args)
    except _ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ValueError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
