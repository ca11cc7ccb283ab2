"""Newton-family solvers written as explicit, autonomous iterative maps.

A solver here is the one-iteration update ``x -> x - alpha * J^-1 F(x)``
applied repeatedly, with every iterate recorded.  Keeping the map explicit
(and deterministic) is what lets the diagnostics layer treat the solver as a
discrete-time dynamical system and probe its linearization.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

__all__ = [
    "CONVERGED",
    "MAX_ITER_EXCEEDED",
    "DIVERGED_NONFINITE",
    "NonFiniteError",
    "SingularJacobianError",
    "ResidualSystem",
    "SolverConfig",
    "SolverTrace",
    "fd_jacobian",
    "newton_step",
    "solve",
    "rosenbrock_system",
]

CONVERGED = "converged"
MAX_ITER_EXCEEDED = "max_iter_exceeded"
DIVERGED_NONFINITE = "diverged_nonfinite"

JACOBIAN_MODES = ("implemented", "forward_fd", "central_fd")


class SingularJacobianError(RuntimeError):
    """Raised when the linear solve against the Jacobian fails outright."""


class NonFiniteError(RuntimeError):
    """Raised when an evaluation or update produces NaN/Inf.

    Carries the offending iterate (when there is one) so callers can record
    it instead of losing the information.
    """

    def __init__(self, message: str, iterate: Optional[np.ndarray] = None):
        super().__init__(message)
        self.iterate = iterate


@dataclass(frozen=True)
class ResidualSystem:
    """An evaluable nonlinear system F(x) = 0 with its implemented Jacobian.

    ``eval_jacobian`` returns the Jacobian *as implemented*, which may
    deliberately contain injected faults; it is the solver's view of the
    system, not necessarily the true derivative of ``eval_residual``.

    Both callables must be deterministic and safe for concurrent read-only
    use.  ``eval_both``, when provided, fuses the two evaluations (one
    assembly pass) and must agree with them exactly.
    """

    dim: int
    eval_residual: Callable[[np.ndarray], np.ndarray]
    eval_jacobian: Callable[[np.ndarray], np.ndarray]
    eval_both: Optional[Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray]]] = None
    eval_both_many: Optional[Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray]]] = None

    def residual(self, x: np.ndarray) -> np.ndarray:
        return self.eval_residual(x)

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        return self.eval_jacobian(x)

    def both(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        if self.eval_both is not None:
            return self.eval_both(x)
        return self.eval_residual(x), self.eval_jacobian(x)


@dataclass(frozen=True)
class SolverConfig:
    """Stopping rule, damping and Jacobian strategy for one nonlinear solve.

    ``jacobian`` selects between the implemented Jacobian and a finite
    difference surrogate built from residual evaluations only; ``fd_step``
    is the FD step for the latter two modes.
    """

    tol: float = 1e-8
    max_iter: int = 20
    alpha: float = 1.0
    jacobian: str = "implemented"
    fd_step: float = 1e-6

    def __post_init__(self):
        if self.tol < 0.0:
            raise ValueError("tol must be >= 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be a positive integer")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        if self.jacobian not in JACOBIAN_MODES:
            raise ValueError(f"jacobian must be one of {JACOBIAN_MODES}")
        if self.jacobian != "implemented" and self.fd_step <= 0.0:
            raise ValueError("fd_step must be > 0 for finite-difference modes")


@dataclass(frozen=True)
class SolverTrace:
    """Complete record of one nonlinear solve.

    ``iterates`` has shape (m+1, dim) when m steps were taken and always
    includes the starting point; ``residual_norms`` are the Euclidean norms
    of F at each iterate (recomputable from the iterates).
    """

    iterates: np.ndarray
    residual_norms: np.ndarray
    status: str

    @property
    def steps_taken(self) -> int:
        return len(self.iterates) - 1

    @property
    def solution(self) -> np.ndarray:
        return self.iterates[-1]


def fd_jacobian(system: ResidualSystem, x: np.ndarray, scheme: str = "forward",
                h: float = 1e-6) -> np.ndarray:
    """Finite-difference Jacobian of the residual, column by column.

    ``forward`` uses (F(x + h e_j) - F(x)) / h, ``central`` uses the
    symmetric quotient with 2h spacing.  Raises :class:`NonFiniteError` if
    any sampled residual is non-finite.
    """
    if h <= 0.0:
        raise ValueError("h must be > 0")
    if scheme not in ("forward", "central"):
        raise ValueError("scheme must be 'forward' or 'central'")
    n = system.dim
    J = np.empty((n, n))
    if scheme == "forward":
        f0 = system.residual(x)
        if not np.all(np.isfinite(f0)):
            raise NonFiniteError("residual non-finite at base point")
        for j in range(n):
            xp = x.copy()
            xp[j] += h
            fp = system.residual(xp)
            J[:, j] = (fp - f0) / h
    else:
        for j in range(n):
            xp = x.copy()
            xm = x.copy()
            xp[j] += h
            xm[j] -= h
            J[:, j] = (system.residual(xp) - system.residual(xm)) / (2.0 * h)
    if not np.all(np.isfinite(J)):
        raise NonFiniteError("finite-difference Jacobian contains non-finite entries")
    return J


def _solver_residual_and_jacobian(system: ResidualSystem, x: np.ndarray,
                                  config: SolverConfig) -> Tuple[np.ndarray, np.ndarray]:
    if config.jacobian == "implemented":
        return system.both(x)
    f = system.residual(x)
    scheme = "forward" if config.jacobian == "forward_fd" else "central"
    return f, fd_jacobian(system, x, scheme, config.fd_step)


def newton_step(system: ResidualSystem, x: np.ndarray, config: SolverConfig) -> np.ndarray:
    """One damped Newton update x - alpha * J^-1 F(x).

    The Jacobian is selected by ``config.jacobian``.  Raises
    :class:`SingularJacobianError` when the factorization fails and
    :class:`NonFiniteError` (carrying the iterate) when the update is not
    finite.
    """
    f, J = _solver_residual_and_jacobian(system, x, config)
    try:
        delta = np.linalg.solve(J, f)
    except np.linalg.LinAlgError as exc:
        raise SingularJacobianError(f"Jacobian factorization failed: {exc}") from exc
    x_next = x - config.alpha * delta
    if not np.all(np.isfinite(x_next)):
        raise NonFiniteError("Newton update produced non-finite values", iterate=x_next)
    return x_next


def solve(system: ResidualSystem, x0: np.ndarray,
          config: SolverConfig = SolverConfig()) -> Tuple[np.ndarray, SolverTrace]:
    """Run damped Newton from x0, recording every iterate.

    Stops when ||F||_2 < tol, when ``max_iter`` steps have been taken, or on
    non-finite values.  Failures are reported through the trace status
    rather than raised; callers decide how severe they are.  The residual
    and Jacobian are evaluated once per iterate (the convergence check and
    the next update share the evaluation).
    """
    x = np.asarray(x0, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("x0 must be finite")
    iterates = [x]
    norms: list = []
    status = MAX_ITER_EXCEEDED

    with np.errstate(over="ignore", invalid="ignore"):
        for iteration in range(config.max_iter + 1):
            try:
                f, J = _solver_residual_and_jacobian(system, x, config)
            except NonFiniteError:
                norms.append(np.nan)
                status = DIVERGED_NONFINITE
                break
            norms.append(float(np.linalg.norm(f)))
            if not np.isfinite(norms[-1]):
                status = DIVERGED_NONFINITE
                break
            if norms[-1] < config.tol:
                status = CONVERGED
                break
            if iteration == config.max_iter:
                break
            try:
                delta = np.linalg.solve(J, f)
            except np.linalg.LinAlgError:
                iterates.append(np.full(system.dim, np.nan))
                norms.append(np.nan)
                status = DIVERGED_NONFINITE
                break
            x = x - config.alpha * delta
            iterates.append(x)
            if not np.all(np.isfinite(x)):
                norms.append(np.nan)
                status = DIVERGED_NONFINITE
                break

    trace = SolverTrace(
        iterates=np.asarray(iterates),
        residual_norms=np.asarray(norms),
        status=status,
    )
    return trace.solution, trace


def rosenbrock_system(dimension: int = 100) -> ResidualSystem:
    """Gradient residual of the chained Rosenbrock objective.

    The residual is the three-case gradient formula (first row, interior
    rows, last row); the implemented Jacobian is its analytic tridiagonal
    derivative.  The root is the all-ones vector.
    """
    if dimension < 2:
        raise ValueError("dimension must be >= 2")
    d = dimension

    def residual(x: np.ndarray) -> np.ndarray:
        F = np.empty(d)
        F[0] = -400.0 * (x[1] - x[0] ** 2) * x[0] + 2.0 * (x[0] - 1.0)
        xm = x[1:-1]
        F[1:-1] = (
            -400.0 * (x[2:] - xm ** 2) * xm
            + 200.0 * (xm - x[:-2] ** 2) * xm
            + 2.0 * (xm - 1.0)
        )
        F[-1] = 200.0 * (x[-1] - x[-2] ** 2) * x[-2]
        return F

    def jacobian(x: np.ndarray) -> np.ndarray:
        J = np.zeros((d, d))
        m = np.arange(1, d - 1)
        J[0, 0] = -400.0 * x[1] + 1200.0 * x[0] ** 2 + 2.0
        J[0, 1] = -400.0 * x[0]
        J[m, m - 1] = -400.0 * x[m - 1] * x[m]
        J[m, m] = (
            -400.0 * (x[m + 1] - x[m] ** 2)
            + 800.0 * x[m] ** 2
            + 200.0 * (x[m] - x[m - 1] ** 2)
            + 200.0 * x[m]
            + 2.0
        )
        J[m, m + 1] = -400.0 * x[m]
        J[d - 1, d - 2] = 200.0 * (x[-1] - x[-2] ** 2) - 400.0 * x[-2] ** 2
        J[d - 1, d - 1] = 200.0 * x[-2]
        return J

    return ResidualSystem(dim=d, eval_residual=residual, eval_jacobian=jacobian)
