"""Spectrum estimation and anomaly classification for solver iteration maps.

Two routes to the same quantity: probe the one-iteration map with
finite-difference perturbations around a converged fixed point, or fit a
linear model to the differenced iterates of a single solve (DMD).  Either
way the result is an :class:`EigenReport` whose leading eigenvalues expose
convergence anomalies: isolated eigenvalues that limit the observed
convergence rate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .nlsolve import (
    CONVERGED,
    NonFiniteError,
    ResidualSystem,
    SingularJacobianError,
    SolverConfig,
    SolverTrace,
    newton_step,
)

__all__ = [
    "FLAG_NEAR_UNIT_CIRCLE",
    "FLAG_PERIOD_DOUBLING",
    "FLAG_UNSTABLE",
    "SolverMap",
    "EigenReport",
    "AnomalyConfig",
    "AnomalyReport",
    "CrossingEvent",
    "linearize_map_probe",
    "eigs",
    "dmd_eigs",
    "detect_anomalies",
    "track_crossings",
    "default_probe_step",
]

FLAG_NEAR_UNIT_CIRCLE = "near_unit_circle"
FLAG_PERIOD_DOUBLING = "period_doubling_signature"
FLAG_UNSTABLE = "unstable"

TRACKED_FLAGS = (FLAG_NEAR_UNIT_CIRCLE, FLAG_PERIOD_DOUBLING, FLAG_UNSTABLE)

# Relative singular-value cutoff for the DMD least-squares fit.  Directions
# below this are treated as noise, which realizes the minimum-Frobenius-norm
# solution through the pseudoinverse.
DMD_RANK_RTOL = 1e-12


@dataclass(frozen=True)
class SolverMap:
    """One iteration of a configured solver on a fixed system, as a map G.

    G must be deterministic, and at a converged fixed point G(x*) = x* up to
    the residual tolerance.  ``evaluate_many`` applies G to a stack of
    points at once when the underlying system supports batched evaluation;
    it exists purely so probing stays cheap.
    """

    dim: int
    evaluate: Callable[[np.ndarray], np.ndarray]
    evaluate_many: Optional[Callable[[np.ndarray], np.ndarray]] = None

    @classmethod
    def from_system(cls, system: ResidualSystem, config: SolverConfig) -> "SolverMap":
        def step(x: np.ndarray) -> np.ndarray:
            return newton_step(system, x, config)

        step_many = None
        if system.eval_both_many is not None and config.jacobian == "implemented":
            def step_many(X: np.ndarray) -> np.ndarray:
                F, J = system.eval_both_many(X)
                delta = np.linalg.solve(J, F[..., None])[..., 0]
                return X - config.alpha * delta

        return cls(dim=system.dim, evaluate=step, evaluate_many=step_many)

    def apply_many(self, X: np.ndarray) -> np.ndarray:
        if self.evaluate_many is not None:
            return self.evaluate_many(X)
        return np.stack([self.evaluate(x) for x in X])


@dataclass(frozen=True)
class EigenReport:
    """Eigenvalues/eigenvectors of an estimated solver linearization.

    Eigenvalues are sorted by descending magnitude (ties: descending real
    part, then descending imaginary part).  Eigenvectors are the matching
    columns, unit 2-norm, with the largest-magnitude component rotated to be
    real and positive so identical inputs give identical reports.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    method: str
    step_index: int = -1
    usable: bool = True
    reason: str = ""

    @classmethod
    def unusable(cls, method: str, reason: str, step_index: int = -1) -> "EigenReport":
        return cls(
            eigenvalues=np.empty(0, dtype=complex),
            eigenvectors=np.empty((0, 0), dtype=complex),
            method=method,
            step_index=step_index,
            usable=False,
            reason=reason,
        )

    @property
    def leading_magnitude(self) -> float:
        if len(self.eigenvalues) == 0:
            return 0.0
        return float(abs(self.eigenvalues[0]))


def default_probe_step(x_star: np.ndarray) -> float:
    """Scale-aware probe step: 1e-6 times the state magnitude (at least 1)."""
    return 1e-6 * max(1.0, float(np.max(np.abs(x_star))))


def linearize_map_probe(solver_map: SolverMap, x_star: np.ndarray,
                        h: Optional[float] = None, scheme: str = "central") -> np.ndarray:
    """Estimate the Jacobian of the map at a fixed point by perturbation.

    Columns are symmetric difference quotients (G(x* + h e_j) - G(x* - h e_j))
    / 2h by default; ``scheme="forward"`` uses one-sided quotients against
    G(x*).  The central scheme cancels the quadratic term of the map, which
    is what keeps the ideal-Newton spectrum at the measurement floor instead
    of O(h).  Solver-step failures are re-raised annotated with the probe
    column.
    """
    if h is None:
        h = default_probe_step(x_star)
    if h <= 0.0:
        raise ValueError("h must be > 0")
    if scheme not in ("forward", "central"):
        raise ValueError("scheme must be 'forward' or 'central'")
    n = solver_map.dim
    x_star = np.asarray(x_star, dtype=float)
    eye = np.eye(n)
    try:
        if scheme == "forward":
            points = np.concatenate([x_star[None, :], x_star + h * eye])
            g = solver_map.apply_many(points)
            M = (g[1:] - g[0]).T / h
        else:
            points = np.concatenate([x_star + h * eye, x_star - h * eye])
            g = solver_map.apply_many(points)
            M = (g[:n] - g[n:]).T / (2.0 * h)
        if not np.all(np.isfinite(M)):
            raise NonFiniteError("probe produced non-finite map responses")
        return M
    except (np.linalg.LinAlgError, SingularJacobianError, NonFiniteError):
        pass
    # Rerun column by column so the failure names the probe direction.
    M = np.empty((n, n))
    g0 = solver_map.evaluate(x_star) if scheme == "forward" else None
    for j in range(n):
        try:
            if scheme == "forward":
                M[:, j] = (solver_map.evaluate(x_star + h * eye[j]) - g0) / h
            else:
                M[:, j] = (solver_map.evaluate(x_star + h * eye[j])
                           - solver_map.evaluate(x_star - h * eye[j])) / (2.0 * h)
        except (SingularJacobianError, NonFiniteError) as exc:
            raise type(exc)(f"probe column {j}: {exc}") from exc
    if not np.all(np.isfinite(M)):
        raise NonFiniteError("probe produced non-finite map responses")
    return M


def _sort_and_normalize(values: np.ndarray, vectors: np.ndarray,
                        k: int) -> Tuple[np.ndarray, np.ndarray]:
    """Apply the deterministic ordering and eigenvector phase convention."""
    # lexsort: last key is primary.
    order = np.lexsort((-values.imag, -values.real, -np.abs(values)))
    order = order[: min(k, len(order))]
    values = values[order]
    vectors = vectors[:, order].astype(complex)
    mags = np.abs(vectors)
    norms = np.sqrt((mags * mags).sum(axis=0))
    norms[norms == 0.0] = 1.0
    vectors /= norms
    mags /= norms
    pivots = vectors[np.argmax(mags, axis=0), np.arange(vectors.shape[1])]
    pivot_mags = np.abs(pivots)
    safe = pivot_mags > 0.0
    phase = np.where(safe, np.conj(pivots) / np.where(safe, pivot_mags, 1.0), 1.0)
    vectors *= phase
    # Remove any residual tiny imaginary part on the pivot components.
    idx = np.argmax(mags, axis=0)
    cols = np.arange(vectors.shape[1])
    vectors[idx, cols] = np.abs(vectors[idx, cols])
    return values, vectors


def eigs(M: np.ndarray, k: Optional[int] = None, method: str = "probe",
         step_index: int = -1) -> EigenReport:
    """Dense eigendecomposition of a square matrix, reported largest-first."""
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("M must be square")
    if k is None:
        k = M.shape[0]
    if k < 1:
        raise ValueError("k must be a positive integer")
    try:
        values, vectors = np.linalg.eig(M)
    except np.linalg.LinAlgError as exc:
        return EigenReport.unusable(method, f"eigensolver failure: {exc}", step_index)
    if not np.all(np.isfinite(values)):
        return EigenReport.unusable(method, "non-finite eigenvalues", step_index)
    values, vectors = _sort_and_normalize(values, vectors, k)
    return EigenReport(values, vectors, method=method, step_index=step_index)


def dmd_eigs(trace: SolverTrace, k: Optional[int] = None,
             step_index: int = -1) -> EigenReport:
    """Data-driven spectrum estimate from the iterates of one solve.

    Differences consecutive iterates (removing the affine offset), then fits
    the minimum-Frobenius-norm least-squares linear model mapping each
    difference to the next via a reduced SVD, and reports the model's
    leading eigenpairs lifted back to state space.  Needs at least three
    iterates; an all-but-stationary trace is reported as unusable rather
    than fitted.
    """
    if trace.status != CONVERGED:
        return EigenReport.unusable("dmd", "trace not converged", step_index)
    snapshots = np.asarray(trace.iterates, dtype=float)
    if len(snapshots) < 3:
        return EigenReport.unusable("dmd", "insufficient iterations", step_index)
    deltas = np.diff(snapshots, axis=0)
    if np.max(np.linalg.norm(deltas, axis=1)) < 1e-14:
        return EigenReport.unusable("dmd", "degenerate differences", step_index)
    X = deltas[:-1].T
    Y = deltas[1:].T
    U, s, Vh = np.linalg.svd(X, full_matrices=False)
    keep = s >= DMD_RANK_RTOL * s[0] if s[0] > 0.0 else np.zeros_like(s, dtype=bool)
    if not np.any(keep):
        return EigenReport.unusable("dmd", "degenerate differences", step_index)
    Ur = U[:, keep]
    sr = s[keep]
    Vr = Vh[keep].conj().T
    # Reduced operator: Ur^T A Ur for the min-norm least-squares A = Y X^+.
    A_tilde = Ur.T @ Y @ (Vr / sr)
    try:
        values, W = np.linalg.eig(A_tilde)
    except np.linalg.LinAlgError as exc:
        return EigenReport.unusable("dmd", f"eigensolver failure: {exc}", step_index)
    vectors = Ur @ W
    if k is None:
        k = trace.iterates.shape[1]
    values, vectors = _sort_and_normalize(values, vectors, k)
    return EigenReport(values, vectors, method="dmd", step_index=step_index)


@dataclass(frozen=True)
class AnomalyConfig:
    """Thresholds separating the expected eigenvalue cloud from anomalies."""

    cluster_radius: float = 0.05
    anomaly_threshold: float = 0.5
    unit_circle_threshold: float = 0.95
    period_doubling_real_cut: float = -0.9

    def __post_init__(self):
        if not 0.0 <= self.cluster_radius < self.anomaly_threshold < self.unit_circle_threshold:
            raise ValueError(
                "require 0 <= cluster_radius < anomaly_threshold < unit_circle_threshold"
            )


@dataclass(frozen=True)
class AnomalyReport:
    """Cluster/outlier split of one eigen report, plus bifurcation flags."""

    baseline_center: complex
    cluster_indices: Tuple[int, ...]
    outlier_indices: Tuple[int, ...]
    flags: frozenset
    leading_magnitude: float
    step_index: int = -1


@dataclass(frozen=True)
class CrossingEvent:
    """A tracked flag switching on or off at a homotopy step."""

    step_index: int
    kind: str
    on: bool


def detect_anomalies(report: EigenReport, config: AnomalyConfig = AnomalyConfig(),
                     baseline_center: complex = 0.0) -> AnomalyReport:
    """Classify eigenvalues as baseline-cluster members or outliers.

    Eigenvalues within ``cluster_radius`` of the baseline center belong to
    the cluster; the rest are outliers only if their magnitude reaches
    ``anomaly_threshold`` (intermediate eigenvalues still count as cluster).
    Flags fire on unit-circle proximity, on a negative-real unit-circle
    eigenvalue (period-doubling signature), and on magnitudes >= 1.
    """
    if not report.usable:
        raise ValueError("cannot classify an unusable eigen report")
    lam = report.eigenvalues
    mags = np.abs(lam)
    is_outlier = (np.abs(lam - baseline_center) > config.cluster_radius) \
        & (mags >= config.anomaly_threshold)
    outliers = [int(i) for i in np.flatnonzero(is_outlier)]
    cluster = [int(i) for i in np.flatnonzero(~is_outlier)]
    flags = set()
    if np.any(mags >= config.unit_circle_threshold):
        flags.add(FLAG_NEAR_UNIT_CIRCLE)
    if np.any((mags >= config.unit_circle_threshold)
              & (lam.real <= config.period_doubling_real_cut)):
        flags.add(FLAG_PERIOD_DOUBLING)
    if np.any(mags >= 1.0):
        flags.add(FLAG_UNSTABLE)
    return AnomalyReport(
        baseline_center=complex(baseline_center),
        cluster_indices=tuple(cluster),
        outlier_indices=tuple(outliers),
        flags=frozenset(flags),
        leading_magnitude=float(mags.max()) if len(mags) else 0.0,
        step_index=report.step_index,
    )


def track_crossings(reports: Sequence[Optional[AnomalyReport]]) -> List[CrossingEvent]:
    """Edge-detect tracked flags across an ordered sequence of step reports.

    ``None`` entries stand for steps without a usable report; they are
    skipped without closing open events, so a flag that stays on across a
    gap produces no spurious off/on pair.
    """
    events: List[CrossingEvent] = []
    prev = {kind: False for kind in TRACKED_FLAGS}
    for report in reports:
        if report is None:
            continue
        for kind in TRACKED_FLAGS:
            now = kind in report.flags
            if now != prev[kind]:
                events.append(CrossingEvent(report.step_index, kind, now))
                prev[kind] = now
    return events
