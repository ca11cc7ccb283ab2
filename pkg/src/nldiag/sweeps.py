"""Parameter and step-size sweep drivers built on the homotopy stepper.

Both sweeps produce grid data (leading eigenvalue magnitude per cell, with
failures recorded as data) suitable for pseudo-color rendering: one sweeps
a netlist parameter (e.g. the gmin parallel resistance) across full runs,
the other re-solves each sampled step of a base trajectory under candidate
time steps and BDF orders.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .circuit import FaultSpec, Netlist
from .diagnostics import SolverMap, eigs, linearize_map_probe
from .homotopy import StepperConfig, bdf_coefficients, run
from .nlsolve import CONVERGED, NonFiniteError, SingularJacobianError, solve

__all__ = [
    "ValueSweepEntry",
    "ParameterSweepResult",
    "StepSizeCell",
    "StepSizeSweepResult",
    "sweep_parameter",
    "stepsize_sweep",
]


@dataclass
class ValueSweepEntry:
    """Condensed record of one full run at a fixed parameter value."""

    value: float
    completed: bool
    ts: np.ndarray
    leading_abs: np.ndarray          # nan where no usable probe report
    flagged: np.ndarray              # leading_abs >= unit_circle_threshold
    eigvec_first: Optional[np.ndarray]
    eigvec_last: Optional[np.ndarray]
    first_flagged_step: Optional[int]
    last_flagged_step: Optional[int]
    no_peak_at_flagged: Optional[np.ndarray]

    @property
    def flagged_time(self) -> float:
        if len(self.ts) < 1:
            return 0.0
        dt = self.ts[1] - self.ts[0] if len(self.ts) > 1 else self.ts[0]
        return float(self.flagged.sum()) * dt


@dataclass
class ParameterSweepResult:
    entries: List[ValueSweepEntry]
    stepper: StepperConfig


def sweep_parameter(netlist_family: Callable[[float], Union[Netlist, tuple]],
                    values: Sequence[float],
                    stepper: StepperConfig) -> ParameterSweepResult:
    """One full run per parameter value, condensed to grid data.

    ``netlist_family`` maps a parameter value to a netlist (or a
    (netlist, faults) pair).  Per-value failures are recorded, not raised;
    the sweep continues.  For each value the leading probe eigenvectors at
    the first and last flagged steps are retained, along with whether
    component localization found a dominant peak there.
    """
    values = [float(v) for v in values]
    if any(not np.isfinite(v) for v in values):
        raise ValueError("sweep values must be finite")
    entries: List[ValueSweepEntry] = []
    for value in values:
        built = netlist_family(value)
        netlist, faults = built if isinstance(built, tuple) else (built, ())
        report = run(netlist, faults, stepper)
        ts = np.array([rec.t for rec in report.steps])
        lead = np.array([
            rec.eigen["probe"].leading_magnitude
            if rec.eigen.get("probe") is not None and rec.eigen["probe"].usable
            else np.nan
            for rec in report.steps
        ])
        with np.errstate(invalid="ignore"):
            flagged = lead >= stepper.anomaly.unit_circle_threshold
        flag_idx = np.flatnonzero(flagged)
        vec_first = vec_last = None
        first = last = None
        no_peak = None
        if flag_idx.size:
            first, last = int(flag_idx[0]), int(flag_idx[-1])
            vec_first = report.steps[first].eigen["probe"].eigenvectors[:, 0].copy()
            vec_last = report.steps[last].eigen["probe"].eigenvectors[:, 0].copy()
            if stepper.localize_on_flags:
                no_peak = np.array([
                    all(e.result.no_dominant_peak
                        for e in report.steps[i].localization)
                    if report.steps[i].localization else True
                    for i in flag_idx
                ])
        entries.append(ValueSweepEntry(
            value=value,
            completed=not report.terminated_early,
            ts=ts,
            leading_abs=lead,
            flagged=flagged,
            eigvec_first=vec_first,
            eigvec_last=vec_last,
            first_flagged_step=first,
            last_flagged_step=last,
            no_peak_at_flagged=no_peak,
        ))
    return ParameterSweepResult(entries=entries, stepper=stepper)


@dataclass(frozen=True)
class StepSizeCell:
    t: float
    dt: float
    order: int
    leading_abs: Optional[float]     # None marks solver failure


@dataclass
class StepSizeSweepResult:
    cells: List[StepSizeCell]
    base_ts: np.ndarray
    base_leading: np.ndarray
    candidate_dts: Tuple[float, ...]
    orders: Tuple[int, ...]

    def column(self, t: float, order: int) -> List[StepSizeCell]:
        return [c for c in self.cells if c.t == t and c.order == order]


def stepsize_sweep(netlist: Netlist, faults: Sequence[FaultSpec], base_dt: float,
                   t_end: float, candidate_dts: Sequence[float],
                   orders: Sequence[int] = (1, 2),
                   stepper: Optional[StepperConfig] = None,
                   sample_stride: int = 1,
                   cell_max_iter: int = 20) -> StepSizeSweepResult:
    """Re-solve each sampled base step under candidate step sizes and orders.

    A base trajectory is integrated first (order 1 at ``base_dt``).  At every
    ``sample_stride``-th accepted state, each candidate (dt, order) forms its
    one-step algebraic system from the true history - for order 2 the
    candidate dt enters the variable-step coefficients since the spacing is
    no longer constant - and attempts the solve from the base state.  Cells
    record the leading probe eigenvalue magnitude, or a failure marker when
    the solve does not converge within the iteration budget.
    """
    if sample_stride < 1:
        raise ValueError("sample_stride must be >= 1")
    candidate_dts = tuple(float(d) for d in candidate_dts)
    if any(d <= 0.0 for d in candidate_dts):
        raise ValueError("candidate step sizes must be positive")
    orders = tuple(orders)
    if stepper is None:
        stepper = StepperConfig(dt=base_dt, t_end=t_end,
                                diag_mode=frozenset({"probe"}))
    # The cell budget is fixed independently of the base run's: a cell that
    # needs more than cell_max_iter iterations counts as a failure.
    cell_solver = replace(stepper.solver, max_iter=cell_max_iter)
    base = run(netlist, faults, stepper)
    circuit = base.circuit
    faults = tuple(faults)
    base_ts = np.array([rec.t for rec in base.steps])
    base_leading = np.array([
        rec.eigen["probe"].leading_magnitude
        if rec.eigen.get("probe") is not None and rec.eigen["probe"].usable
        else np.nan
        for rec in base.steps
    ])

    states = [np.zeros(circuit.dim)] + [rec.x for rec in base.steps
                                        if rec.status == "ok"]
    cells: List[StepSizeCell] = []
    # Sample accepted steps n >= 1 so order 2 always has two history states.
    for n in range(1, len(states) - 1, sample_stride):
        t_n = n * base_dt
        x_prev, x_n = states[n - 1], states[n]
        for order in orders:
            for dt_c in candidate_dts:
                if order == 1:
                    alpha, beta = bdf_coefficients(1, dt_c, [x_n])
                else:
                    alpha, beta = bdf_coefficients(2, dt_c, [x_prev, x_n],
                                                   dt_previous=base_dt)
                step_fn = circuit.at_step(t_n + dt_c, alpha, beta, faults)
                system = step_fn.as_residual_system()
                x_sol, trace = solve(system, x_n, cell_solver)
                if trace.status != CONVERGED:
                    cells.append(StepSizeCell(t_n, dt_c, order, None))
                    continue
                smap = SolverMap.from_system(system, cell_solver)
                try:
                    M = linearize_map_probe(smap, x_sol, h=stepper.probe_step)
                    report = eigs(M, k=circuit.dim, method="probe")
                except (SingularJacobianError, NonFiniteError):
                    cells.append(StepSizeCell(t_n, dt_c, order, None))
                    continue
                lead = report.leading_magnitude if report.usable else None
                cells.append(StepSizeCell(t_n, dt_c, order, lead))
    return StepSizeSweepResult(
        cells=cells,
        base_ts=base_ts,
        base_leading=base_leading,
        candidate_dts=candidate_dts,
        orders=orders,
    )
