"""Tests for the Newton-family solver layer."""

import numpy as np
import numpy.testing as npt
import pytest

from nldiag.nlsolve import (
    CONVERGED,
    DIVERGED_NONFINITE,
    MAX_ITER_EXCEEDED,
    NonFiniteError,
    ResidualSystem,
    SolverConfig,
    fd_jacobian,
    newton_step,
    rosenbrock_system,
    solve,
)


def linear_system(A, b):
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    return ResidualSystem(
        dim=len(b),
        eval_residual=lambda x: A @ x - b,
        eval_jacobian=lambda x: A.copy(),
    )


def scalar_identity():
    return ResidualSystem(
        dim=1,
        eval_residual=lambda x: x.copy(),
        eval_jacobian=lambda x: np.array([[1.0]]),
    )


def test_newton_exact_on_linear_system():
    rng = np.random.default_rng(7)
    A = rng.normal(size=(5, 5)) + 5.0 * np.eye(5)
    b = rng.normal(size=5)
    system = linear_system(A, b)
    x1 = newton_step(system, rng.normal(size=5), SolverConfig())
    npt.assert_allclose(x1, np.linalg.solve(A, b), rtol=0, atol=1e-10)


def test_damped_step_on_identity_residual():
    system = scalar_identity()
    x1 = newton_step(system, np.array([1.0]), SolverConfig(alpha=0.5))
    npt.assert_allclose(x1, [0.5], rtol=0, atol=0)


def test_damping_recurrence_exact():
    # On F(x) = x the damped iteration is exactly x_{n+1} = (1 - alpha) x_n.
    system = scalar_identity()
    alpha = 0.625  # exactly representable
    _, trace = solve(system, np.array([1.0]),
                     SolverConfig(alpha=alpha, tol=1e-300, max_iter=10))
    expected = (1.0 - alpha) ** np.arange(11)
    npt.assert_array_equal(trace.iterates[:, 0], expected)


def test_rosenbrock_step_contracts_quadratically():
    # Reference-run constant: the first Newton step from 1 + 1e-3 e_1 lands
    # at distance ~1.97e-6; quadratic contraction with c <= 2.5.
    system = rosenbrock_system(100)
    x0 = np.ones(100)
    x0[0] += 1e-3
    x1 = newton_step(system, x0, SolverConfig())
    e0 = np.linalg.norm(x0 - 1.0)
    e1 = np.linalg.norm(x1 - 1.0)
    assert e1 <= 2.5 * e0 ** 2


def test_fd_jacobian_scalar_square():
    system = ResidualSystem(
        dim=1,
        eval_residual=lambda x: x ** 2,
        eval_jacobian=lambda x: np.array([[2.0 * x[0]]]),
    )
    J = fd_jacobian(system, np.array([1.0]), "forward", 0.01)
    # Algebraic identity: (1.01^2 - 1) / 0.01
    npt.assert_allclose(J[0, 0], (1.01 ** 2 - 1.0) / 0.01, rtol=1e-14)
    npt.assert_allclose(J[0, 0], 2.01, rtol=1e-12)


def test_fd_jacobian_exact_on_affine():
    rng = np.random.default_rng(3)
    A = rng.normal(size=(4, 4))
    system = linear_system(A, rng.normal(size=4))
    x = rng.normal(size=4)
    for scheme, h in (("forward", 0.1), ("central", 1e-4)):
        J = fd_jacobian(system, x, scheme, h)
        npt.assert_allclose(J, A, rtol=0, atol=1e-9)


def diode_pair_system(i_s=1e-12, n=1.0, v_t=0.026):
    """The two diode residual rows as a standalone 2-unknown system."""
    def residual(x):
        cur = i_s * (np.exp((x[0] - x[1]) / (n * v_t)) - 1.0)
        return np.array([cur, -cur])

    def jac(x):
        g = i_s / (n * v_t) * np.exp((x[0] - x[1]) / (n * v_t))
        return np.array([[g, -g], [-g, g]])

    return ResidualSystem(dim=2, eval_residual=residual, eval_jacobian=jac)


def test_fd_jacobian_diode_entry():
    system = diode_pair_system()
    J = fd_jacobian(system, np.zeros(2), "central", 1e-6)
    npt.assert_allclose(J[0, 0], 1e-12 / 0.026, rtol=1e-6)


def test_fd_central_second_order_on_diode():
    # |FD - analytic| should shrink like h^2: slope >= 1.8 on a log-log fit.
    system = diode_pair_system()
    x = np.zeros(2)
    exact = system.jacobian(x)[0, 0]
    hs = np.array([1e-3, 1e-4, 1e-5])
    errs = np.array([abs(fd_jacobian(system, x, "central", h)[0, 0] - exact)
                     for h in hs])
    slope = np.polyfit(np.log10(hs), np.log10(errs), 1)[0]
    assert slope >= 1.8


def test_solve_scalar_quadratic():
    # Hand-run Newton on x^2 - 4 from 3: 3, 13/6, 2.00641..., converges to 2.
    system = ResidualSystem(
        dim=1,
        eval_residual=lambda x: x ** 2 - 4.0,
        eval_jacobian=lambda x: np.array([[2.0 * x[0]]]),
    )
    x, trace = solve(system, np.array([3.0]), SolverConfig(tol=1e-10))
    assert trace.status == CONVERGED
    assert trace.steps_taken <= 8
    npt.assert_allclose(x, [2.0], rtol=0, atol=1e-10)
    npt.assert_allclose(trace.iterates[1, 0], 13.0 / 6.0, rtol=1e-15)


def test_solve_immediate_acceptance():
    system = scalar_identity()
    x, trace = solve(system, np.array([1e-12]), SolverConfig(tol=1e-8))
    assert trace.status == CONVERGED
    assert len(trace.iterates) == 1
    assert trace.steps_taken == 0


def test_solve_max_iter_exceeded():
    # alpha < 1 on a linear system converges geometrically; a tight budget
    # with an extreme tolerance must run out of iterations.
    system = scalar_identity()
    _, trace = solve(system, np.array([1.0]),
                     SolverConfig(alpha=0.5, tol=1e-300, max_iter=5))
    assert trace.status == MAX_ITER_EXCEEDED
    assert len(trace.iterates) == 6
    assert len(trace.residual_norms) == 6


def test_solve_diverged_nonfinite():
    system = ResidualSystem(
        dim=1,
        eval_residual=lambda x: np.array([np.exp(x[0]) - 1e300]),
        eval_jacobian=lambda x: np.array([[max(np.exp(x[0]), 1e-30)]]),
    )
    _, trace = solve(system, np.array([1.0]), SolverConfig(max_iter=50))
    assert trace.status == DIVERGED_NONFINITE
    last_bad = ~np.isfinite(trace.iterates[-1]).all() or not np.isfinite(
        trace.residual_norms[-1])
    assert last_bad


def test_trace_norms_recomputable():
    system = ResidualSystem(
        dim=2,
        eval_residual=lambda x: np.array([x[0] ** 2 - 1.0, x[1] - 0.5]),
        eval_jacobian=lambda x: np.array([[2.0 * x[0], 0.0], [0.0, 1.0]]),
    )
    _, trace = solve(system, np.array([2.0, 2.0]), SolverConfig())
    assert len(trace.iterates) == len(trace.residual_norms)
    recomputed = [np.linalg.norm(system.residual(it)) for it in trace.iterates]
    npt.assert_allclose(trace.residual_norms, recomputed, rtol=0, atol=0)


def test_affine_one_step_convergence_property():
    rng = np.random.default_rng(11)
    for _ in range(20):
        n = rng.integers(2, 8)
        A = rng.normal(size=(n, n)) + n * np.eye(n)
        b = rng.normal(size=n)
        system = linear_system(A, b)
        x0 = rng.normal(size=n) * 10.0
        _, trace = solve(system, x0, SolverConfig(tol=1e-10))
        assert trace.status == CONVERGED
        assert trace.steps_taken == 1


def test_rosenbrock_root_and_structure():
    system = rosenbrock_system(100)
    ones = np.ones(100)
    npt.assert_array_equal(system.residual(ones), np.zeros(100))
    J = system.jacobian(ones)
    # analytic vs central FD
    Jfd = fd_jacobian(system, ones, "central", 1e-6)
    assert np.abs(J - Jfd).max() < 1e-5
    # tridiagonal structure at a generic point
    rng = np.random.default_rng(0)
    J = system.jacobian(rng.normal(size=100))
    off = np.triu(np.abs(J), 2) + np.tril(np.abs(J), -2)
    assert off.max() == 0.0


def test_rosenbrock_rejects_small_dimension():
    with pytest.raises(ValueError):
        rosenbrock_system(1)


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(tol=-1.0)
    with pytest.raises(ValueError):
        SolverConfig(alpha=0.0)
    with pytest.raises(ValueError):
        SolverConfig(alpha=1.5)
    with pytest.raises(ValueError):
        SolverConfig(jacobian="secant")
    with pytest.raises(ValueError):
        SolverConfig(jacobian="forward_fd", fd_step=0.0)


def test_fd_jacobian_nonfinite_error():
    system = ResidualSystem(
        dim=1,
        eval_residual=lambda x: np.array([np.nan if x[0] > 0.5 else x[0]]),
        eval_jacobian=lambda x: np.array([[1.0]]),
    )
    with pytest.raises(NonFiniteError):
        fd_jacobian(system, np.array([0.4]), "forward", 0.2)
    with pytest.raises(NonFiniteError):
        fd_jacobian(system, np.array([0.6]), "forward", 0.2)
