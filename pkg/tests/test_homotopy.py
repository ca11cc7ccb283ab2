"""Tests for BDF coefficients and the stepping/diagnostics loop."""

import numpy as np
import numpy.testing as npt
import pytest

from nldiag.circuit import Netlist, capacitor, resistor, sin_voltage_source
from nldiag.fixtures import build_diode_bridge
from nldiag.homotopy import RunReport, StepperConfig, bdf_coefficients, run
from nldiag.nlsolve import SolverConfig


def quadratic_samples(ts):
    return [np.array([t ** 2]) for t in ts]


def test_bdf1_coefficients():
    alpha, beta = bdf_coefficients(1, 1e-6, [np.array([2.0])])
    assert alpha == 1e6
    npt.assert_array_equal(beta, [2e6])


def test_bdf2_exact_on_quadratics_equal_steps():
    # Oracle: differentiate the quadratic interpolant through three samples
    # of x(t) = t^2; BDF2 must reproduce xdot(t_new) = 2 t_new exactly.
    dt = 0.125
    t_prev2, t_prev, t_new = 1.0, 1.0 + dt, 1.0 + 2 * dt
    hist = quadratic_samples([t_prev2, t_prev])
    alpha, beta = bdf_coefficients(2, dt, hist)
    x_new = np.array([t_new ** 2])
    npt.assert_allclose(alpha * x_new - beta, [2.0 * t_new], rtol=1e-13)


@pytest.mark.parametrize("ratio", [0.5, 1.0, 2.0, 3.7])
def test_bdf2_exact_on_quadratics_variable_steps(ratio):
    dt_prev = 0.2
    dt_cur = ratio * dt_prev
    t0 = 0.7
    t1 = t0 + dt_prev
    t2 = t1 + dt_cur
    hist = quadratic_samples([t0, t1])
    alpha, beta = bdf_coefficients(2, dt_cur, hist, dt_previous=dt_prev)
    x_new = np.array([t2 ** 2])
    npt.assert_allclose(alpha * x_new - beta, [2.0 * t2], rtol=1e-12)


def test_bdf_requires_history():
    with pytest.raises(ValueError):
        bdf_coefficients(2, 0.1, [np.array([1.0])])
    with pytest.raises(ValueError):
        bdf_coefficients(1, 0.1, [])


def rc_netlist(r=1.0, c=1.0):
    """Series RC driven by a source: one-pole decay analog."""
    return Netlist(
        nodes=("g", "n"),
        ground="g",
        components=(resistor("r", "n", "g", r),
                    capacitor("c", "n", "g", c)),
    )


def rc_with_drive():
    return Netlist(
        nodes=("g", "a", "n"),
        ground="g",
        components=(
            sin_voltage_source("v", "a", "g", amplitude=1.0, frequency=50.0),
            resistor("r", "a", "n", 1.0),
            capacitor("c", "n", "g", 1e-3),
        ),
    )


def test_bdf1_first_order_convergence():
    # Discharging RC from a nonzero initial state is xdot = -x; halving dt
    # should halve the global error at t_end (slope 1 +/- 0.1).
    net = rc_netlist()

    errs = []
    dts = [0.02, 0.01, 0.005]
    t_end = 0.4
    for dt in dts:
        cfg = StepperConfig(dt=dt, t_end=t_end, order=1,
                            solver=SolverConfig(tol=1e-13),
                            diag_mode=frozenset())
        report = run_with_initial(net, cfg, x0=np.array([1.0]))
        x_final = report.steps[-1].x[0]
        errs.append(abs(x_final - np.exp(-t_end)))
    slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    assert abs(slope - 1.0) <= 0.1


def run_with_initial(net, cfg, x0):
    """run() but with a nonzero start, for decay tests."""
    from nldiag.circuit import assemble
    from nldiag.homotopy import bdf_coefficients, step

    circuit = assemble(net)
    n_steps = int(round(cfg.t_end / cfg.dt))
    history = [np.asarray(x0, dtype=float)]
    records = []
    for k in range(1, n_steps + 1):
        order = 1 if (cfg.order == 2 and len(history) < 2) else cfg.order
        alpha, beta = bdf_coefficients(order, cfg.dt, history)
        rec = step(circuit, (), k, k * cfg.dt, alpha, beta, history[-1], cfg)
        records.append(rec)
        assert rec.status == "ok"
        history.append(rec.x)
        if len(history) > 2:
            history.pop(0)
    return RunReport(records, {}, False, "", (), cfg, circuit, ())


def test_bdf2_beats_bdf1_on_rc():
    net = rc_netlist()
    t_end = 0.4
    errs = {}
    for order in (1, 2):
        cfg = StepperConfig(dt=0.01, t_end=t_end, order=order,
                            solver=SolverConfig(tol=1e-13),
                            diag_mode=frozenset())
        report = run_with_initial(net, cfg, x0=np.array([1.0]))
        errs[order] = abs(report.steps[-1].x[0] - np.exp(-t_end))
    assert errs[2] < 0.2 * errs[1]


def test_run_determinism():
    net = build_diode_bridge()
    cfg = StepperConfig(dt=2e-6, t_end=2e-4, solver=SolverConfig(),
                        diag_mode=frozenset({"probe", "dmd"}))
    rep1 = run(net, (), cfg)
    rep2 = run(net, (), cfg)
    assert len(rep1.steps) == len(rep2.steps)
    for a, b in zip(rep1.steps, rep2.steps):
        npt.assert_array_equal(a.x, b.x)
        npt.assert_array_equal(a.trace.iterates, b.trace.iterates)
        if a.eigen.get("probe") is not None:
            npt.assert_array_equal(a.eigen["probe"].eigenvalues,
                                   b.eigen["probe"].eigenvalues)
            npt.assert_array_equal(a.eigen["probe"].eigenvectors,
                                   b.eigen["probe"].eigenvectors)


def test_diagnostics_do_not_touch_trajectory():
    net = build_diode_bridge()
    base = StepperConfig(dt=2e-6, t_end=2e-4, solver=SolverConfig(),
                         diag_mode=frozenset())
    full = StepperConfig(dt=2e-6, t_end=2e-4, solver=SolverConfig(),
                         diag_mode=frozenset({"probe", "dmd"}),
                         localize_on_flags=True)
    rep_base = run(net, (), base)
    rep_full = run(net, (), full)
    for a, b in zip(rep_base.steps, rep_full.steps):
        npt.assert_array_equal(a.x, b.x)


def test_run_time_grid_and_records():
    net = rc_with_drive()
    cfg = StepperConfig(dt=1e-4, t_end=5e-3, solver=SolverConfig(),
                        diag_mode=frozenset({"dmd"}))
    rep = run(net, (), cfg)
    assert not rep.terminated_early
    ts = np.array([r.t for r in rep.steps])
    npt.assert_allclose(np.diff(ts), cfg.dt, rtol=1e-12)
    assert len(rep.steps) == 50
    for rec in rep.steps:
        assert rec.status == "ok"
        assert rec.trace.status == "converged"


def test_order2_first_step_fallback_recorded():
    net = rc_with_drive()
    cfg = StepperConfig(dt=1e-4, t_end=1e-3, order=2, solver=SolverConfig(),
                        diag_mode=frozenset())
    rep = run(net, (), cfg)
    assert rep.order_fallback_steps == (1,)


def test_dmd_gap_on_short_solves():
    # Steps solved in fewer than 3 iterates must carry an unusable DMD
    # report while the step itself stays ok.
    net = build_diode_bridge()
    cfg = StepperConfig(dt=2e-7, t_end=4e-5, solver=SolverConfig(),
                        diag_mode=frozenset({"dmd"}))
    rep = run(net, (), cfg)
    assert not rep.terminated_early
    short = [r for r in rep.steps if len(r.trace.iterates) < 3]
    assert short, "expected some quick solves"
    for rec in short:
        assert not rec.eigen["dmd"].usable
        assert rec.status == "ok"


def test_stepper_config_validation():
    with pytest.raises(ValueError):
        StepperConfig(dt=0.0, t_end=1.0)
    with pytest.raises(ValueError):
        StepperConfig(dt=1.0, t_end=0.5)
    with pytest.raises(ValueError):
        StepperConfig(dt=1e-3, t_end=1.0, order=3)
    with pytest.raises(ValueError):
        StepperConfig(dt=1e-3, t_end=1.0, diag_mode=frozenset({"koopman"}))


def test_baseline_center_follows_damping():
    cfg = StepperConfig(dt=1e-3, t_end=1.0, solver=SolverConfig(alpha=0.25))
    assert cfg.baseline_center == pytest.approx(0.75)
