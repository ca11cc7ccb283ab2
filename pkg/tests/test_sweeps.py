"""Tests for the parameter and step-size sweep drivers."""

import numpy as np
import numpy.testing as npt
import pytest

from nldiag.fixtures import build_diode_bridge, get_fixture
from nldiag.homotopy import StepperConfig, run
from nldiag.nlsolve import SolverConfig
from nldiag.sweeps import stepsize_sweep, sweep_parameter

BRIDGE_STEPPER = StepperConfig(dt=2e-5, t_end=2e-3, solver=SolverConfig(),
                               diag_mode=frozenset({"probe"}))


def test_sweep_parameter_shapes_and_determinism():
    def family(value):
        return build_diode_bridge(gmin_ohms=value), ()

    values = [1e12, 1e20]
    res1 = sweep_parameter(family, values, BRIDGE_STEPPER)
    res2 = sweep_parameter(family, values, BRIDGE_STEPPER)
    assert [e.value for e in res1.entries] == values
    for e1, e2 in zip(res1.entries, res2.entries):
        assert e1.completed and e2.completed
        assert len(e1.ts) == 100
        npt.assert_array_equal(e1.leading_abs, e2.leading_abs)


def test_sweep_parameter_rejects_nonfinite_values():
    with pytest.raises(ValueError):
        sweep_parameter(lambda v: (build_diode_bridge(), ()), [1e12, np.inf],
                        BRIDGE_STEPPER)


def test_degenerate_single_value_sweep_matches_simulate():
    # A one-value sweep is the plain run restricted to leading magnitudes.
    def family(value):
        return build_diode_bridge(gmin_ohms=value), ()

    res = sweep_parameter(family, [1e12], BRIDGE_STEPPER)
    report = run(build_diode_bridge(gmin_ohms=1e12), (), BRIDGE_STEPPER)
    lead = np.array([r.eigen["probe"].leading_magnitude for r in report.steps])
    npt.assert_array_equal(res.entries[0].leading_abs, lead)


@pytest.fixture(scope="module")
def small_dt_sweep():
    net, faults = get_fixture("bridge_one_error")
    stepper = StepperConfig(dt=2e-5, t_end=2e-3, solver=SolverConfig(),
                            diag_mode=frozenset({"probe"}))
    # include the base dt itself so base-match cells exist
    cands = [2e-5, 1e-5, 1e-6]
    return stepsize_sweep(net, faults, 2e-5, 2e-3, cands, orders=(1, 2),
                          stepper=stepper, sample_stride=10), stepper


def test_stepsize_sweep_grid_structure(small_dt_sweep):
    result, stepper = small_dt_sweep
    ts = sorted({c.t for c in result.cells})
    # sampled steps n = 1, 11, ..., 91 -> 10 columns per order per dt
    assert len(ts) == 10
    assert len(result.cells) == 10 * 2 * 3
    assert set(c.order for c in result.cells) == {1, 2}


def test_stepsize_sweep_base_dt_cells_match_base_run(small_dt_sweep):
    result, stepper = small_dt_sweep
    base_lead = result.base_leading
    for cell in result.cells:
        if cell.dt != 2e-5 or cell.order != 1:
            continue
        n = int(round(cell.t / 2e-5))
        # cell (t_n, base_dt) re-solves the base run's step n+1 system
        assert cell.leading_abs is not None
        assert abs(cell.leading_abs - base_lead[n]) < 1e-9


def test_stepsize_sweep_input_validation():
    net, faults = get_fixture("bridge_ref")
    with pytest.raises(ValueError):
        stepsize_sweep(net, faults, 1e-5, 1e-4, [0.0])
    with pytest.raises(ValueError):
        stepsize_sweep(net, faults, 1e-5, 1e-4, [1e-5], sample_stride=0)
