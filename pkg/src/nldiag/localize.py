"""Eigenvector-directed localization of Jacobian implementation errors.

Given an anomaly eigenvector v, compare a high-order finite difference of
the residual along v against the implemented Jacobian-vector product.  Rows
where the two disagree lie in the image of the error term, i.e. they are
the residual equations responsible for the anomaly.  Run at system level
the check points at equations; run at component level (where the stacked
component residuals and derivatives are available) it points at individual
components.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from .circuit import CircuitStepFunction, ComposedCircuit
from .nlsolve import NonFiniteError, ResidualSystem

__all__ = [
    "DiscrepancyVector",
    "LocalizationResult",
    "system_direction_check",
    "component_direction_check",
    "flag_rows",
    "default_check_step",
]

# Default relative FD step for the direction checks.  Large enough that the
# difference quotient on rows with O(1) derivative entries sits well above
# rounding noise, small enough that the O(eps^2) truncation stays harmless
# on the exponential components the fixtures contain.
CHECK_EPS_SCALE = 1e-5

# Denominator floor for residual scaling, in component units.
SCALE_FLOOR = 1e-9


@dataclass(frozen=True)
class DiscrepancyVector:
    """Per-row discrepancy magnitudes between FD and implemented derivative.

    ``values`` are nonnegative; with ``residual_scaled`` normalization each
    row is divided by that row's own scale (the larger of its residual
    magnitude and its derivative-row norm times the state scale, floored),
    so rows of wildly different physical units become comparable.
    """

    values: np.ndarray
    normalization: str
    direction: np.ndarray
    level: str


@dataclass(frozen=True)
class LocalizationResult:
    flagged_rows: Tuple[int, ...]
    flagged_components: Tuple[str, ...]
    threshold_used: float
    discrepancy: DiscrepancyVector
    no_dominant_peak: bool


def default_check_step(x_star: np.ndarray) -> float:
    return CHECK_EPS_SCALE * max(1.0, float(np.max(np.abs(x_star))))


def _canonical_direction(v: np.ndarray) -> np.ndarray:
    """Rotate the probe direction's global phase to a canonical choice.

    Matches the eigenvector convention (largest-magnitude component real
    and positive), which makes the check invariant under v -> e^{i theta} v.
    """
    v = np.asarray(v)
    norm = np.linalg.norm(v)
    if not np.isclose(norm, 1.0, rtol=0.0, atol=1e-10):
        raise ValueError(f"direction must have unit 2-norm, got {norm}")
    pivot = v[int(np.argmax(np.abs(v)))]
    if np.iscomplexobj(v):
        if abs(pivot) > 0.0:
            v = v * (np.conj(pivot) / abs(pivot))
        return v
    return v if pivot >= 0.0 else -v


def _direction_parts(v: np.ndarray) -> list:
    """Real unit directions spanning a (possibly complex) eigenvector."""
    v = _canonical_direction(v)
    if not np.iscomplexobj(v):
        return [v.astype(float)]
    parts = []
    for part in (v.real, v.imag):
        nrm = np.linalg.norm(part)
        if nrm > 1e-8:
            parts.append(part / nrm)
    return parts


def _row_scales(r0: np.ndarray, deriv: np.ndarray, x_scale: float,
                floor: float) -> np.ndarray:
    # A constraint row's residual is ~0 at any converged point, so scaling
    # by |r| alone would amplify it without bound; the derivative-row norm
    # (times the state scale, for units) supplies the missing magnitude.
    deriv_scale = np.linalg.norm(deriv, axis=1) * x_scale
    return np.maximum(np.maximum(np.abs(r0), deriv_scale), floor)


def _direction_check(residual_fn, r0, deriv, x_star, v, eps, normalization, floor, level):
    if normalization not in ("raw", "residual_scaled"):
        raise ValueError("normalization must be 'raw' or 'residual_scaled'")
    x_star = np.asarray(x_star, dtype=float)
    if eps is None:
        eps = default_check_step(x_star)
    if eps <= 0.0:
        raise ValueError("eps must be > 0")
    parts = _direction_parts(np.asarray(v))
    if not parts:
        raise ValueError("direction has no usable real or imaginary part")
    values = None
    for part in parts:
        fd = (residual_fn(x_star + eps * part) - residual_fn(x_star - eps * part)) / (2.0 * eps)
        if not np.all(np.isfinite(fd)):
            raise NonFiniteError("residual non-finite at direction-check sample")
        raw = np.abs(fd - deriv @ part)
        if normalization == "residual_scaled":
            x_scale = max(1.0, float(np.max(np.abs(x_star))))
            raw = raw / _row_scales(r0, deriv, x_scale, floor)
        values = raw if values is None else np.maximum(values, raw)
    direction = _canonical_direction(np.asarray(v))
    return DiscrepancyVector(values, normalization, direction, level)


def system_direction_check(system: ResidualSystem, x_star: np.ndarray, v: np.ndarray,
                           eps: Optional[float] = None,
                           normalization: str = "residual_scaled",
                           floor: float = SCALE_FLOOR) -> DiscrepancyVector:
    """Central-difference Jv minus implemented-Jacobian Jv, per system row."""
    x_star = np.asarray(x_star, dtype=float)
    return _direction_check(
        system.residual,
        system.residual(x_star),
        system.jacobian(x_star),
        x_star, v, eps, normalization, floor, "system",
    )


def component_direction_check(circuit_step: CircuitStepFunction, x_star: np.ndarray,
                              v: np.ndarray, eps: Optional[float] = None,
                              normalization: str = "residual_scaled",
                              floor: float = SCALE_FLOOR) -> DiscrepancyVector:
    """Directional-derivative mismatch per component residual row.

    ``circuit_step`` must be frozen at the homotopy step being examined so
    the stacks include the BDF terms and any injected faults.
    """
    x_star = np.asarray(x_star, dtype=float)
    return _direction_check(
        circuit_step.residual_stack,
        circuit_step.residual_stack(x_star),
        circuit_step.derivative_stack(x_star),
        x_star, v, eps, normalization, floor, "component",
    )


def flag_rows(d: DiscrepancyVector, relative_threshold: float = 0.5,
              circuit: Union[ComposedCircuit, CircuitStepFunction, None] = None,
              noise_floor: float = 1e-6) -> LocalizationResult:
    """Flag rows whose discrepancy reaches a fraction of the peak.

    When the peak itself sits below ``noise_floor`` there is nothing to
    localize (the gmin-removal case); the result then carries
    ``no_dominant_peak`` and empty flags.
    """
    if not 0.0 < relative_threshold < 1.0:
        raise ValueError("relative_threshold must lie in (0, 1)")
    values = np.asarray(d.values)
    if values.size == 0:
        raise ValueError("empty discrepancy vector")
    peak = float(values.max())
    if peak < noise_floor:
        return LocalizationResult((), (), relative_threshold, d, True)
    rows = tuple(int(i) for i in np.flatnonzero(values >= relative_threshold * peak))
    components: Tuple[str, ...] = ()
    if circuit is not None and d.level == "component":
        owner = circuit.circuit if isinstance(circuit, CircuitStepFunction) else circuit
        components = owner.components_for_rows(rows)
    return LocalizationResult(rows, components, relative_threshold, d, False)
