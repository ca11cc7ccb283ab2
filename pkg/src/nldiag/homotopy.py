"""Fixed-step BDF time integration with per-step solver diagnostics.

Each time step of the DAE is one member of a homotopy family of nonlinear
systems, initialized from the previous solution.  After every successful
solve the configured diagnostics run at the accepted fixed point (probe
and/or DMD), anomalies are classified, and - when requested - localization
runs along each outlier eigenvector.  Diagnostics never feed back into the
trajectory: the integration is observed passively, and solver failure
terminates the run early with everything recorded up to that point.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .circuit import ComposedCircuit, FaultSpec, Netlist, assemble
from .diagnostics import (
    AnomalyConfig,
    AnomalyReport,
    CrossingEvent,
    EigenReport,
    SolverMap,
    detect_anomalies,
    dmd_eigs,
    eigs,
    linearize_map_probe,
    track_crossings,
)
from .localize import LocalizationResult, component_direction_check, flag_rows
from .nlsolve import CONVERGED, NonFiniteError, SingularJacobianError, SolverConfig, solve

__all__ = [
    "StepperConfig",
    "StepRecord",
    "RunReport",
    "LocalizationEntry",
    "bdf_coefficients",
    "step",
    "run",
]

STEP_OK = "ok"
STEP_SOLVER_FAILED = "solver_failed"

DIAG_MODES = ("probe", "dmd")


@dataclass(frozen=True)
class StepperConfig:
    """Integration order, step size, and the diagnostics to run per step."""

    dt: float
    t_end: float
    order: int = 1
    solver: SolverConfig = field(default_factory=SolverConfig)
    diag_mode: frozenset = frozenset(DIAG_MODES)
    anomaly: AnomalyConfig = field(default_factory=AnomalyConfig)
    localize_on_flags: bool = False
    localize_threshold: float = 0.5
    localize_eps: Optional[float] = None
    probe_step: Optional[float] = None

    def __post_init__(self):
        if not self.dt > 0.0:
            raise ValueError("dt must be > 0")
        if self.t_end < self.dt:
            raise ValueError("t_end must be >= dt")
        if self.order not in (1, 2):
            raise ValueError("order must be 1 or 2")
        unknown = set(self.diag_mode) - set(DIAG_MODES)
        if unknown:
            raise ValueError(f"unknown diagnostic modes {sorted(unknown)}")

    @property
    def baseline_center(self) -> complex:
        # Ideal Newton clusters at 0; constant damping shifts it to 1-alpha.
        return complex(1.0 - self.solver.alpha)


@dataclass(frozen=True)
class LocalizationEntry:
    """Localization along one outlier eigenvector at one step."""

    method: str
    eigenvalue: complex
    result: LocalizationResult


@dataclass(frozen=True)
class StepRecord:
    index: int
    t: float
    x: np.ndarray
    status: str
    trace: object
    alpha: float
    beta: np.ndarray
    eigen: Dict[str, EigenReport]
    anomalies: Dict[str, AnomalyReport]
    localization: Tuple[LocalizationEntry, ...]


@dataclass
class RunReport:
    steps: List[StepRecord]
    crossings: Dict[str, List[CrossingEvent]]
    terminated_early: bool
    termination_reason: str
    order_fallback_steps: Tuple[int, ...]
    config: StepperConfig
    circuit: ComposedCircuit
    faults: Tuple[FaultSpec, ...]

    @property
    def completed(self) -> bool:
        return not self.terminated_early


def bdf_coefficients(order: int, dt_current: float,
                     history: Sequence[np.ndarray],
                     dt_previous: Optional[float] = None) -> Tuple[float, np.ndarray]:
    """Coefficients (alpha, beta) approximating dx/dt ~ alpha*x - beta.

    ``history`` holds prior accepted states, most recent last.  Order 1 is
    backward Euler.  Order 2 differentiates the quadratic interpolant
    through the two history points and the unknown new point, which keeps it
    exact on quadratics for any step ratio; ``dt_previous`` defaults to
    ``dt_current`` (constant-step BDF2).
    """
    if dt_current <= 0.0:
        raise ValueError("dt_current must be > 0")
    if order == 1:
        if len(history) < 1:
            raise ValueError("order 1 needs one prior state")
        return 1.0 / dt_current, np.asarray(history[-1]) / dt_current
    if order == 2:
        if len(history) < 2:
            raise ValueError("order 2 needs two prior states")
        h1 = dt_current
        h0 = dt_current if dt_previous is None else dt_previous
        if h0 <= 0.0:
            raise ValueError("dt_previous must be > 0")
        alpha = (2.0 * h1 + h0) / (h1 * (h1 + h0))
        beta = (np.asarray(history[-1]) * (h1 + h0) / (h1 * h0)
                - np.asarray(history[-2]) * h1 / (h0 * (h1 + h0)))
        return alpha, beta
    raise ValueError("order must be 1 or 2")


def _diagnose(system, x, trace, index, config: StepperConfig, dim: int):
    eigen: Dict[str, EigenReport] = {}
    if "probe" in config.diag_mode:
        smap = SolverMap.from_system(system, config.solver)
        try:
            M = linearize_map_probe(smap, x, h=config.probe_step)
            eigen["probe"] = eigs(M, k=dim, method="probe", step_index=index)
        except (SingularJacobianError, NonFiniteError) as exc:
            eigen["probe"] = EigenReport.unusable("probe", str(exc), index)
    if "dmd" in config.diag_mode:
        eigen["dmd"] = dmd_eigs(trace, k=dim, step_index=index)
    anomalies: Dict[str, AnomalyReport] = {}
    for method, report in eigen.items():
        if report.usable:
            anomalies[method] = detect_anomalies(report, config.anomaly,
                                                 config.baseline_center)
    return eigen, anomalies


def _localize(step_fn, x, eigen, anomalies, config: StepperConfig):
    # Probe eigenvectors are preferred: they exist whenever the solve
    # converged, while DMD needs enough iterates.
    for method in ("probe", "dmd"):
        if method in anomalies:
            report = eigen[method]
            entries = []
            for i in anomalies[method].outlier_indices:
                d = component_direction_check(step_fn, x, report.eigenvectors[:, i],
                                              eps=config.localize_eps)
                result = flag_rows(d, config.localize_threshold, step_fn.circuit)
                entries.append(LocalizationEntry(method, complex(report.eigenvalues[i]),
                                                 result))
            if entries:
                return tuple(entries)
    return ()


def step(circuit: ComposedCircuit, faults: Sequence[FaultSpec], index: int,
         t_next: float, alpha: float, beta: np.ndarray, x_guess: np.ndarray,
         config: StepperConfig) -> StepRecord:
    """Solve one homotopy step and run the requested diagnostics on it."""
    step_fn = circuit.at_step(t_next, alpha, beta, faults)
    system = step_fn.as_residual_system()
    x, trace = solve(system, x_guess, config.solver)
    if trace.status != CONVERGED:
        return StepRecord(index, t_next, x, STEP_SOLVER_FAILED, trace,
                          alpha, beta, {}, {}, ())
    eigen, anomalies = _diagnose(system, x, trace, index, config, circuit.dim)
    localization: Tuple[LocalizationEntry, ...] = ()
    if config.localize_on_flags and any(a.outlier_indices for a in anomalies.values()):
        localization = _localize(step_fn, x, eigen, anomalies, config)
    return StepRecord(index, t_next, x, STEP_OK, trace, alpha, beta,
                      eigen, anomalies, localization)


def run(netlist: Netlist, faults: Sequence[FaultSpec],
        stepper: StepperConfig) -> RunReport:
    """Integrate from an all-zero initial state at t=0 up to t_end.

    Solver failure terminates the run early; remaining steps are absent,
    not padded.  Crossing events are detected per diagnostic method over
    the usable anomaly reports.
    """
    circuit = assemble(netlist)
    faults = tuple(faults)
    circuit.validate_faults(faults)
    n_steps = int(round(stepper.t_end / stepper.dt))
    x = np.zeros(circuit.dim)
    history: List[np.ndarray] = [x]
    records: List[StepRecord] = []
    fallbacks: List[int] = []
    terminated = False
    reason = ""

    for k in range(1, n_steps + 1):
        t_next = k * stepper.dt
        order = stepper.order
        if order == 2 and len(history) < 2:
            order = 1
            fallbacks.append(k)
        alpha, beta = bdf_coefficients(order, stepper.dt, history)
        record = step(circuit, faults, k, t_next, alpha, beta, history[-1], stepper)
        records.append(record)
        if record.status != STEP_OK:
            terminated = True
            reason = (f"solver failed at step {k} (t={t_next:.6g} s): "
                      f"{record.trace.status}")
            break
        history.append(record.x)
        if len(history) > 2:
            history.pop(0)

    crossings: Dict[str, List[CrossingEvent]] = {}
    for method in sorted(stepper.diag_mode):
        crossings[method] = track_crossings(
            [rec.anomalies.get(method) for rec in records])

    return RunReport(
        steps=records,
        crossings=crossings,
        terminated_early=terminated,
        termination_reason=reason,
        order_fallback_steps=tuple(fallbacks),
        config=stepper,
        circuit=circuit,
        faults=faults,
    )
