"""Component-composition circuit modeling via modified nodal analysis.

Each component contributes a small stack of residual rows (currents out of
its terminals, plus constraint rows for internal states).  A 0/1 stamp
matrix ``A`` aggregates the stacked component residuals ``r`` into the
system residual ``F = A r``, and the implemented system Jacobian is
``J = A R`` where ``R`` stacks the component derivatives.  Faults are
injected into ``R`` only; residuals are always evaluated faithfully, which
is exactly the mismatch the diagnostics layer is built to find.

Time derivatives are already reduced to algebra here: a BDF supplies
``alpha`` and ``beta`` such that ``dx/dt ~ alpha * x - beta``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .nlsolve import ResidualSystem

__all__ = [
    "Component",
    "Netlist",
    "FaultSpec",
    "ComposedCircuit",
    "CircuitStepFunction",
    "resistor",
    "capacitor",
    "diode",
    "sin_voltage_source",
    "nonlinear_inductor",
    "assemble",
    "load_netlist",
    "save_netlist",
    "netlist_to_dict",
    "netlist_from_dict",
    "DIODE_EXP_CLAMP",
]

KIND_ROWS = {
    "resistor": 2,
    "capacitor": 2,
    "diode": 2,
    "sin_voltage_source": 3,
    "nonlinear_inductor": 3,
}

KIND_INTERNAL = {
    "sin_voltage_source": ("current",),
    "nonlinear_inductor": ("current",),
}

KIND_PARAMS = {
    "resistor": ("ohms",),
    "capacitor": ("farads",),
    "diode": ("i_s", "n", "v_t"),
    "sin_voltage_source": ("amplitude", "frequency", "phase", "offset"),
    "nonlinear_inductor": ("l0", "i_sat"),
}

# Diode exponent clamp: beyond this argument the exponential is continued
# linearly (identically in residual and derivative) so divergent transients
# overflow gracefully instead of producing inf mid-iteration.
DIODE_EXP_CLAMP = 200.0


@dataclass(frozen=True)
class Component:
    """One two-terminal circuit element with SI-unit parameters."""

    id: str
    kind: str
    terminals: Tuple[str, str]
    params: Dict[str, float]

    def __post_init__(self):
        if self.kind not in KIND_ROWS:
            raise ValueError(f"unknown component kind {self.kind!r}")
        if len(self.terminals) != 2:
            raise ValueError(f"{self.id}: components are two-terminal")
        if self.terminals[0] == self.terminals[1]:
            raise ValueError(f"{self.id}: terminals must be distinct nodes")
        missing = [p for p in KIND_PARAMS[self.kind] if p not in self.params]
        if missing:
            raise ValueError(f"{self.id}: missing parameters {missing}")

    @property
    def n_rows(self) -> int:
        return KIND_ROWS[self.kind]

    @property
    def internal_states(self) -> Tuple[str, ...]:
        return KIND_INTERNAL.get(self.kind, ())


def _positive(cid: str, name: str, value: float) -> float:
    value = float(value)
    if not value > 0.0:
        raise ValueError(f"{cid}: {name} must be positive")
    return value


def resistor(cid: str, a: str, b: str, ohms: float) -> Component:
    return Component(cid, "resistor", (a, b), {"ohms": _positive(cid, "ohms", ohms)})


def capacitor(cid: str, a: str, b: str, farads: float) -> Component:
    return Component(cid, "capacitor", (a, b), {"farads": _positive(cid, "farads", farads)})


def diode(cid: str, a: str, b: str, i_s: float = 1e-12, n: float = 1.0,
          v_t: float = 0.026) -> Component:
    """Ideal exponential diode conducting from terminal a to terminal b."""
    return Component(cid, "diode", (a, b), {
        "i_s": _positive(cid, "i_s", i_s),
        "n": _positive(cid, "n", n),
        "v_t": _positive(cid, "v_t", v_t),
    })


def sin_voltage_source(cid: str, a: str, b: str, amplitude: float, frequency: float,
                       phase: float = 0.0, offset: float = 0.0) -> Component:
    """Ideal source enforcing V_a - V_b = offset + amplitude*sin(2 pi f t + phase).

    Carries one internal state, the source current, with its own residual
    row for the voltage constraint.
    """
    frequency = float(frequency)
    if frequency < 0.0:
        raise ValueError(f"{cid}: frequency must be >= 0")
    return Component(cid, "sin_voltage_source", (a, b), {
        "amplitude": float(amplitude),
        "frequency": frequency,
        "phase": float(phase),
        "offset": float(offset),
    })


def nonlinear_inductor(cid: str, a: str, b: str, l0: float, i_sat: float) -> Component:
    """Saturating inductor with flux l0*i_sat*i/sqrt(i_sat^2 + i^2).

    The current through it is an internal state; the constraint row balances
    the terminal voltage drop against d(flux)/dt.
    """
    return Component(cid, "nonlinear_inductor", (a, b), {
        "l0": _positive(cid, "l0", l0),
        "i_sat": _positive(cid, "i_sat", i_sat),
    })


@dataclass(frozen=True)
class Netlist:
    """Node and component declarations, in the order that fixes row labels."""

    nodes: Tuple[str, ...]
    ground: str
    components: Tuple[Component, ...]
    gmin_ohms: Optional[float] = None

    def validate(self) -> None:
        if self.ground not in self.nodes:
            raise ValueError(f"ground node {self.ground!r} is not declared")
        if len(set(self.nodes)) != len(self.nodes):
            raise ValueError("duplicate node names")
        seen = set()
        for comp in self.components:
            if comp.id in seen:
                raise ValueError(f"duplicate component id {comp.id!r}")
            seen.add(comp.id)
            for term in comp.terminals:
                if term not in self.nodes:
                    raise ValueError(f"{comp.id}: dangling node {term!r}")
        if self.gmin_ohms is not None and not self.gmin_ohms > 0.0:
            raise ValueError("gmin_ohms must be positive when given")


@dataclass(frozen=True)
class FaultSpec:
    """A deliberate error in one component's implemented derivative.

    ``jacobian_sign_flip`` negates the component's derivative block;
    ``jacobian_scale`` multiplies the parameter-dependent entries by
    ``factor`` (for the nonlinear inductor that is the flux-derivative entry
    of its constraint row, i.e. the Jacobian is computed with a different
    inductance than the residual).  Residuals are never altered.
    """

    component_id: str
    kind: str
    factor: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("jacobian_sign_flip", "jacobian_scale"):
            raise ValueError(f"unknown fault kind {self.kind!r}")
        if self.kind == "jacobian_scale" and self.factor is None:
            raise ValueError("jacobian_scale requires a factor")


class _Group:
    """Index/parameter arrays for all components of one kind (vectorized eval)."""

    __slots__ = ("ia", "ib", "row0", "extra")

    def __init__(self, ia, ib, row0, **extra):
        self.ia = np.asarray(ia, dtype=np.intp)
        self.ib = np.asarray(ib, dtype=np.intp)
        self.row0 = np.asarray(row0, dtype=np.intp)
        self.extra = {k: np.asarray(v) for k, v in extra.items()}

    def __len__(self):
        return len(self.row0)


class ComposedCircuit:
    """An assembled circuit: unknown ordering, stamp matrix, evaluators.

    Immutable after assembly; all evaluations are pure functions of their
    arguments and safe to call concurrently.
    """

    def __init__(self, netlist: Netlist, components: Tuple[Component, ...]):
        self.netlist = netlist
        self.components = components

        non_ground = [n for n in netlist.nodes if n != netlist.ground]
        self.node_names = tuple(non_ground)
        unknowns: List[str] = list(non_ground)
        internal_index: Dict[str, int] = {}
        for comp in components:
            for state in comp.internal_states:
                internal_index[comp.id] = len(unknowns)
                unknowns.append(f"{comp.id}:{state}")
        self.unknown_ordering = tuple(unknowns)
        self.dim = len(unknowns)
        self._node_col = {name: i for i, name in enumerate(non_ground)}
        self._node_col[netlist.ground] = self.dim  # padded ground slot

        self.n_rows = sum(c.n_rows for c in components)
        self.component_row_map: Dict[str, range] = {}
        self._row_owner: List[str] = []
        row = 0
        for comp in components:
            self.component_row_map[comp.id] = range(row, row + comp.n_rows)
            self._row_owner.extend([comp.id] * comp.n_rows)
            row += comp.n_rows

        self.A = np.zeros((self.dim, self.n_rows))
        self.dynamic_mask = np.zeros(self.dim, dtype=bool)
        self._groups: Dict[str, _Group] = {}
        self._build(components, internal_index)
        self._internal_index = internal_index

    def _build(self, components, internal_index) -> None:
        buckets: Dict[str, Dict[str, list]] = {
            kind: {"ia": [], "ib": [], "row0": [], "params": []} for kind in KIND_ROWS
        }
        for comp in components:
            rows = self.component_row_map[comp.id]
            ia = self._node_col[comp.terminals[0]]
            ib = self._node_col[comp.terminals[1]]
            b = buckets[comp.kind]
            b["ia"].append(ia)
            b["ib"].append(ib)
            b["row0"].append(rows.start)
            b["params"].append(comp.params)
            # Stamp: current rows map to the terminal nodes' KCL equations
            # (dropped for ground), constraint rows to the internal unknown.
            if ia < self.dim:
                self.A[ia, rows.start] = 1.0
            if ib < self.dim:
                self.A[ib, rows.start + 1] = 1.0
            if comp.kind in KIND_INTERNAL:
                self.A[internal_index[comp.id], rows.start + 2] = 1.0
            if comp.kind == "capacitor":
                if ia < self.dim:
                    self.dynamic_mask[ia] = True
                if ib < self.dim:
                    self.dynamic_mask[ib] = True
            elif comp.kind == "nonlinear_inductor":
                self.dynamic_mask[internal_index[comp.id]] = True

        def params(kind, name):
            return [p[name] for p in buckets[kind]["params"]]

        b = buckets["resistor"]
        self._groups["resistor"] = _Group(
            b["ia"], b["ib"], b["row0"], g=1.0 / np.asarray(params("resistor", "ohms")))
        b = buckets["capacitor"]
        self._groups["capacitor"] = _Group(
            b["ia"], b["ib"], b["row0"], c=params("capacitor", "farads"))
        b = buckets["diode"]
        i_s = np.asarray(params("diode", "i_s"), dtype=float)
        n_vt = (np.asarray(params("diode", "n"), dtype=float)
                * np.asarray(params("diode", "v_t"), dtype=float))
        self._groups["diode"] = _Group(
            b["ia"], b["ib"], b["row0"], i_s=i_s,
            inv_nvt=np.divide(1.0, n_vt, out=np.zeros_like(n_vt), where=n_vt != 0))
        b = buckets["sin_voltage_source"]
        src_ids = [c.id for c in components if c.kind == "sin_voltage_source"]
        self._groups["sin_voltage_source"] = _Group(
            b["ia"], b["ib"], b["row0"],
            iv=[internal_index[cid] for cid in src_ids],
            amp=params("sin_voltage_source", "amplitude"),
            omega=2.0 * np.pi * np.asarray(params("sin_voltage_source", "frequency")),
            phase=params("sin_voltage_source", "phase"),
            offset=params("sin_voltage_source", "offset"))
        b = buckets["nonlinear_inductor"]
        ind_ids = [c.id for c in components if c.kind == "nonlinear_inductor"]
        self._groups["nonlinear_inductor"] = _Group(
            b["ia"], b["ib"], b["row0"],
            il=[internal_index[cid] for cid in ind_ids],
            l0=params("nonlinear_inductor", "l0"),
            i_sat=params("nonlinear_inductor", "i_sat"))

    # -- evaluation -------------------------------------------------------

    def _stacks(self, X, t, alpha, beta, want_derivative):
        """Batched residual/derivative stacks; X has shape (m, dim)."""
        m = X.shape[0]
        xp = np.concatenate([X, np.zeros((m, 1))], axis=1)  # ground slot
        bp = (np.append(beta, 0.0) if beta is not None
              else np.zeros(self.dim + 1))
        r = np.zeros((m, self.n_rows))
        Rp = np.zeros((m, self.n_rows, self.dim + 1)) if want_derivative else None

        grp = self._groups["resistor"]
        if len(grp):
            g = grp.extra["g"]
            cur = g * (xp[:, grp.ia] - xp[:, grp.ib])
            r[:, grp.row0] = cur
            r[:, grp.row0 + 1] = -cur
            if want_derivative:
                Rp[:, grp.row0, grp.ia] = g
                Rp[:, grp.row0, grp.ib] = -g
                Rp[:, grp.row0 + 1, grp.ia] = -g
                Rp[:, grp.row0 + 1, grp.ib] = g

        grp = self._groups["capacitor"]
        if len(grp):
            c = grp.extra["c"]
            cur = alpha * c * (xp[:, grp.ia] - xp[:, grp.ib]) - c * (bp[grp.ia] - bp[grp.ib])
            r[:, grp.row0] = cur
            r[:, grp.row0 + 1] = -cur
            if want_derivative:
                ac = alpha * c
                Rp[:, grp.row0, grp.ia] = ac
                Rp[:, grp.row0, grp.ib] = -ac
                Rp[:, grp.row0 + 1, grp.ia] = -ac
                Rp[:, grp.row0 + 1, grp.ib] = ac

        grp = self._groups["diode"]
        if len(grp):
            i_s = grp.extra["i_s"]
            inv_nvt = grp.extra["inv_nvt"]
            u = (xp[:, grp.ia] - xp[:, grp.ib]) * inv_nvt
            ue = np.minimum(u, DIODE_EXP_CLAMP)
            lin = np.maximum(u - DIODE_EXP_CLAMP, 0.0)
            e = np.exp(ue)
            cur = i_s * (e * (1.0 + lin) - 1.0)
            r[:, grp.row0] = cur
            r[:, grp.row0 + 1] = -cur
            if want_derivative:
                gd = i_s * inv_nvt * e
                Rp[:, grp.row0, grp.ia] = gd
                Rp[:, grp.row0, grp.ib] = -gd
                Rp[:, grp.row0 + 1, grp.ia] = -gd
                Rp[:, grp.row0 + 1, grp.ib] = gd

        grp = self._groups["sin_voltage_source"]
        if len(grp):
            iv = grp.extra["iv"]
            vt = grp.extra["offset"] + grp.extra["amp"] * np.sin(
                grp.extra["omega"] * t + grp.extra["phase"])
            cur = xp[:, iv]
            r[:, grp.row0] = cur
            r[:, grp.row0 + 1] = -cur
            r[:, grp.row0 + 2] = xp[:, grp.ia] - xp[:, grp.ib] - vt
            if want_derivative:
                Rp[:, grp.row0, iv] = 1.0
                Rp[:, grp.row0 + 1, iv] = -1.0
                Rp[:, grp.row0 + 2, grp.ia] = 1.0
                Rp[:, grp.row0 + 2, grp.ib] = -1.0

        grp = self._groups["nonlinear_inductor"]
        if len(grp):
            il = grp.extra["il"]
            l0 = grp.extra["l0"]
            i_sat = grp.extra["i_sat"]
            cur = xp[:, il]
            didt = alpha * cur - bp[il]
            denom = i_sat ** 2 + cur ** 2
            dflux = l0 * i_sat ** 3 / denom ** 1.5
            r[:, grp.row0] = cur
            r[:, grp.row0 + 1] = -cur
            r[:, grp.row0 + 2] = xp[:, grp.ia] - xp[:, grp.ib] - dflux * didt
            if want_derivative:
                d2flux = -3.0 * l0 * i_sat ** 3 * cur / denom ** 2.5
                Rp[:, grp.row0, il] = 1.0
                Rp[:, grp.row0 + 1, il] = -1.0
                Rp[:, grp.row0 + 2, grp.ia] = 1.0
                Rp[:, grp.row0 + 2, grp.ib] = -1.0
                Rp[:, grp.row0 + 2, il] = -(d2flux * didt + dflux * alpha)

        if want_derivative:
            return r, Rp[..., : self.dim]
        return r, None

    @staticmethod
    def _as_batch(x) -> Tuple[np.ndarray, bool]:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return x[None, :], True
        return x, False

    def _apply_faults(self, R: np.ndarray, faults: Sequence[FaultSpec]) -> np.ndarray:
        for f in faults:
            rows = self.component_row_map[f.component_id]
            if f.kind == "jacobian_sign_flip":
                R[..., rows.start:rows.stop, :] *= -1.0
            else:
                comp = self._component_by_id(f.component_id)
                if comp.kind == "nonlinear_inductor":
                    # Equivalent to using factor*l0 in the Jacobian only.
                    il = self._internal_index[f.component_id]
                    R[..., rows.stop - 1, il] *= f.factor
                else:
                    R[..., rows.start:rows.stop, :] *= f.factor
        return R

    def _component_by_id(self, cid: str) -> Component:
        for comp in self.components:
            if comp.id == cid:
                return comp
        raise KeyError(cid)

    def validate_faults(self, faults: Sequence[FaultSpec]) -> None:
        for f in faults:
            if f.component_id not in self.component_row_map:
                raise ValueError(f"fault references unknown component {f.component_id!r}")

    def residual_stack(self, x, t=0.0, alpha=0.0, beta=None) -> np.ndarray:
        """Stacked component residuals r(x); faults never apply here."""
        X, single = self._as_batch(x)
        r, _ = self._stacks(X, t, alpha, beta, False)
        return r[0] if single else r

    def derivative_stack(self, x, t=0.0, alpha=0.0, beta=None,
                         faults: Sequence[FaultSpec] = ()) -> np.ndarray:
        """Stacked implemented component derivatives, with faults applied."""
        X, single = self._as_batch(x)
        _, R = self._stacks(X, t, alpha, beta, True)
        R = self._apply_faults(R, faults)
        return R[0] if single else R

    def eval_system(self, x, t=0.0, alpha=0.0, beta=None,
                    faults: Sequence[FaultSpec] = ()):
        """Return (F, J, r, R) with F = A r and J = A R exactly."""
        X, single = self._as_batch(x)
        r, R = self._stacks(X, t, alpha, beta, True)
        R = self._apply_faults(R, faults)
        F = r @ self.A.T
        J = np.matmul(self.A, R)
        if single:
            return F[0], J[0], r[0], R[0]
        return F, J, r, R

    def at_step(self, t, alpha, beta, faults: Sequence[FaultSpec] = ()) -> "CircuitStepFunction":
        return CircuitStepFunction(self, t, alpha, beta, tuple(faults))

    def components_for_rows(self, rows: Iterable[int]) -> Tuple[str, ...]:
        seen: List[str] = []
        for row in rows:
            owner = self._row_owner[row]
            if owner not in seen:
                seen.append(owner)
        return tuple(seen)


class CircuitStepFunction:
    """A circuit frozen at one homotopy step (fixed t, alpha, beta, faults).

    This is the nonlinear algebraic system the solver actually sees, plus
    access to the component-level stacks the localization checks need.
    """

    def __init__(self, circuit: ComposedCircuit, t: float, alpha: float,
                 beta, faults: Tuple[FaultSpec, ...] = ()):
        circuit.validate_faults(faults)
        self.circuit = circuit
        self.t = float(t)
        self.alpha = float(alpha)
        self.beta = None if beta is None else np.asarray(beta, dtype=float)
        self.faults = faults

    @property
    def dim(self) -> int:
        return self.circuit.dim

    def residual(self, x: np.ndarray) -> np.ndarray:
        r = self.circuit.residual_stack(x, self.t, self.alpha, self.beta)
        return self.circuit.A @ r

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        R = self.circuit.derivative_stack(x, self.t, self.alpha, self.beta, self.faults)
        return self.circuit.A @ R

    def both(self, x: np.ndarray):
        F, J, _, _ = self.circuit.eval_system(x, self.t, self.alpha, self.beta, self.faults)
        return F, J

    def both_many(self, X: np.ndarray):
        """Batched (F, J) for a stack of states; feeds the probe diagnostics."""
        F, J, _, _ = self.circuit.eval_system(np.atleast_2d(X), self.t, self.alpha,
                                              self.beta, self.faults)
        return F, J

    def residual_stack(self, x: np.ndarray) -> np.ndarray:
        return self.circuit.residual_stack(x, self.t, self.alpha, self.beta)

    def derivative_stack(self, x: np.ndarray) -> np.ndarray:
        return self.circuit.derivative_stack(x, self.t, self.alpha, self.beta, self.faults)

    def as_residual_system(self) -> ResidualSystem:
        return ResidualSystem(
            dim=self.circuit.dim,
            eval_residual=self.residual,
            eval_jacobian=self.jacobian,
            eval_both=self.both,
            eval_both_many=self.both_many,
        )


def assemble(netlist: Netlist) -> ComposedCircuit:
    """Validate a netlist and build its composed circuit.

    When ``gmin_ohms`` is set, one parallel resistor per diode is appended
    after all declared components (independent components with their own
    residual rows).  Fixture netlists that need specific row labels declare
    their gmin resistors explicitly instead.
    """
    netlist.validate()
    components = list(netlist.components)
    if netlist.gmin_ohms is not None:
        for comp in netlist.components:
            if comp.kind == "diode":
                components.append(
                    resistor(f"gmin_{comp.id}", *comp.terminals, netlist.gmin_ohms))
    return ComposedCircuit(netlist, tuple(components))


# -- netlist file format (JSON document) ----------------------------------

def netlist_to_dict(netlist: Netlist, faults: Sequence[FaultSpec] = ()) -> dict:
    doc = {
        "nodes": list(netlist.nodes),
        "ground": netlist.ground,
        "components": [
            {
                "id": c.id,
                "type": c.kind,
                "nodes": list(c.terminals),
                "params": dict(c.params),
            }
            for c in netlist.components
        ],
    }
    if netlist.gmin_ohms is not None:
        doc["gmin_ohms"] = netlist.gmin_ohms
    if faults:
        doc["faults"] = [
            {"component": f.component_id, "kind": f.kind,
             **({"factor": f.factor} if f.factor is not None else {})}
            for f in faults
        ]
    return doc


def netlist_from_dict(doc: dict) -> Tuple[Netlist, Tuple[FaultSpec, ...]]:
    try:
        components = tuple(
            Component(
                id=c["id"],
                kind=c["type"],
                terminals=tuple(c["nodes"]),
                params={k: float(v) for k, v in c["params"].items()},
            )
            for c in doc["components"]
        )
        netlist = Netlist(
            nodes=tuple(doc["nodes"]),
            ground=doc["ground"],
            components=components,
            gmin_ohms=doc.get("gmin_ohms"),
        )
        faults = tuple(
            FaultSpec(f["component"], f["kind"], f.get("factor"))
            for f in doc.get("faults", ())
        )
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed netlist document: {exc}") from exc
    return netlist, faults


def load_netlist(path) -> Tuple[Netlist, Tuple[FaultSpec, ...]]:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    return netlist_from_dict(doc)


def save_netlist(path, netlist: Netlist, faults: Sequence[FaultSpec] = ()) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(netlist_to_dict(netlist, faults), fh, indent=2)
        fh.write("\n")
