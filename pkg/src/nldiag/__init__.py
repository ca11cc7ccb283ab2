"""Convergence diagnostics for nonlinear solvers in homotopy loops.

The package treats a Newton-type solver as a discrete-time dynamical
system: it estimates the spectrum of the solver's linearization at every
solved step (by probe experiments and by data-driven fits to the iterates),
classifies convergence anomalies and bifurcation signatures, and localizes
Jacobian implementation errors down to individual residual equations and
circuit components.
"""

from .nlsolve import (
    CONVERGED,
    DIVERGED_NONFINITE,
    MAX_ITER_EXCEEDED,
    NonFiniteError,
    ResidualSystem,
    SingularJacobianError,
    SolverConfig,
    SolverTrace,
    fd_jacobian,
    newton_step,
    rosenbrock_system,
    solve,
)
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
from .localize import (
    DiscrepancyVector,
    LocalizationResult,
    component_direction_check,
    flag_rows,
    system_direction_check,
)
from .circuit import (
    Component,
    ComposedCircuit,
    FaultSpec,
    Netlist,
    assemble,
    capacitor,
    diode,
    load_netlist,
    nonlinear_inductor,
    resistor,
    save_netlist,
    sin_voltage_source,
)
from .fixtures import (
    build_diode_bridge,
    build_power_channel,
    get_fixture,
)
from .homotopy import (
    RunReport,
    StepperConfig,
    StepRecord,
    bdf_coefficients,
    run,
)
from .sweeps import (
    ParameterSweepResult,
    StepSizeSweepResult,
    stepsize_sweep,
    sweep_parameter,
)

__version__ = "0.1.0"
