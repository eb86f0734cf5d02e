"""Declarative structural model and the scalar operators derived from it.

A model is a frozen description of nodes, 2D truss/frame elements, supports,
load groups, the parameter mesh, and the measurement layout.  From it we build
the measurement matrix ``H``, the per-element parameter maps ``L_e`` and the
constraint matrix ``C``.  All quantities are SI.

The YAML schema is documented in ``docs/model_format.md``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
import yaml

from .errors import (
    CoverageGap,
    DegenerateGeometry,
    DuplicateConstraint,
    ModelError,
    StrainOnUnsupportedKind,
    UnknownReference,
)

DOF_TAGS = ("ux", "uy", "rz")
_DOF_ALIASES = {"theta": "rz", "rot": "rz", "θ": "rz", "u": "ux", "v": "uy"}
ELEMENT_KINDS = ("truss2d", "frame2d")


def canonical_dof(tag: str) -> str:
    tag = _DOF_ALIASES.get(tag, tag)
    if tag not in DOF_TAGS:
        raise ModelError(f"unknown DOF tag {tag!r}; expected one of {DOF_TAGS}")
    return tag


@dataclass(frozen=True)
class Node:
    id: int
    x: float
    y: float = 0.0


@dataclass(frozen=True)
class Element:
    id: int
    kind: str
    nodes: tuple[int, int]
    area: float
    inertia: float = 0.0
    n_gauss: int = 1

    def __post_init__(self):
        if self.kind not in ELEMENT_KINDS:
            raise ModelError(f"element {self.id}: unknown kind {self.kind!r}")
        if self.nodes[0] == self.nodes[1]:
            raise DegenerateGeometry(f"element {self.id} connects node {self.nodes[0]} to itself")
        if self.area <= 0:
            raise ModelError(f"element {self.id}: area must be positive")
        if self.kind == "frame2d" and self.inertia <= 0:
            raise ModelError(f"element {self.id}: frame2d needs a positive inertia")
        if self.n_gauss < 1:
            raise ModelError(f"element {self.id}: n_gauss must be >= 1")


@dataclass(frozen=True)
class NodalLoad:
    node: int
    dof: str
    factor: float = 1.0


@dataclass(frozen=True)
class ElementLoad:
    """Load acting on an element, in its local frame.

    ``shape`` is ``"uniform"`` (intensity per unit length) or ``"point"``
    (force at normalized ``position`` in [0, 1]).  ``direction`` is
    ``"transverse"`` (local y) or ``"axial"`` (local x).
    """

    element: int
    shape: str = "uniform"
    factor: float = 1.0
    direction: str = "transverse"
    position: float = 0.5


@dataclass(frozen=True)
class LoadGroup:
    """One entry of the load vector ``delta``: a magnitude and its pattern."""

    name: str
    magnitude: float
    uncertainty: float = 0.0
    nodal: tuple[NodalLoad, ...] = ()
    element: tuple[ElementLoad, ...] = ()


@dataclass(frozen=True)
class Measurement:
    kind: str  # "displacement" | "rotation" | "strain"
    tolerance: float
    node: int | None = None
    dof: str | None = None
    element: int | None = None
    weight: float = 1.0
    label: str = ""

    def __post_init__(self):
        if self.kind not in ("displacement", "rotation", "strain"):
            raise ModelError(f"unknown measurement kind {self.kind!r}")
        if self.tolerance <= 0:
            raise ModelError(f"measurement {self.label or self.kind}: tolerance must be positive")
        if self.weight <= 0:
            raise ModelError(f"measurement {self.label or self.kind}: weight must be positive")


@dataclass(frozen=True)
class ParameterMesh:
    """How the global parameter vector feeds the element integration points.

    ``per_element``: parameter ``element_param[e]`` is constant over element
    ``e`` (defaults to element order).  ``nodal_linear``: parameters live at
    the sorted coordinates ``material_x`` and are interpolated linearly.
    """

    style: str
    n_params: int
    element_param: Mapping[int, int] | None = None
    material_x: tuple[float, ...] = ()
    labels: tuple[str, ...] = ()


@dataclass(frozen=True)
class StructuralModel:
    name: str
    nodes: tuple[Node, ...]
    elements: tuple[Element, ...]
    supports: tuple[tuple[int, str], ...]
    load_groups: tuple[LoadGroup, ...]
    parameters: ParameterMesh
    measurements: tuple[Measurement, ...]
    dofs: tuple[str, ...] = ()
    initial_modulus: float = 60e9
    gamma: float = 0.0
    weighting: str = "unit"
    true_parameters: tuple[float, ...] | None = None
    meta: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not self.dofs:
            kinds = {e.kind for e in self.elements}
            dofs = ("ux", "uy", "rz") if "frame2d" in kinds else ("ux", "uy")
            object.__setattr__(self, "dofs", dofs)
        else:
            object.__setattr__(self, "dofs", tuple(canonical_dof(d) for d in self.dofs))
        self._validate()

    # -- lookup -----------------------------------------------------------
    def _validate(self):
        ids = [n.id for n in self.nodes]
        if sorted(ids) != list(range(1, len(ids) + 1)):
            raise ModelError("node ids must be unique and dense from 1")
        eids = [e.id for e in self.elements]
        if len(set(eids)) != len(eids):
            raise ModelError("element ids must be unique")
        for e in self.elements:
            for nid in e.nodes:
                if nid not in ids:
                    raise UnknownReference(f"element {e.id} references unknown node {nid}")
            if element_length(self, e) == 0.0:
                raise DegenerateGeometry(f"element {e.id} has zero length")
        if not {"ux", "uy"} <= set(self.dofs) and any(
            self.node(e.nodes[0]).y != self.node(e.nodes[1]).y for e in self.elements
        ):
            # dropping a translation is only meaningful for collinear, horizontal meshes
            raise ModelError("models without both ux and uy require every element to be horizontal")
        if self.weighting not in ("unit", "tolerance", "relative"):
            raise ModelError(f"unknown weighting {self.weighting!r}")
        if self.true_parameters is not None and len(self.true_parameters) != self.parameters.n_params:
            raise ModelError("true_parameters length differs from n_params")

    def node(self, node_id: int) -> Node:
        try:
            n = self.nodes[node_id - 1]
        except (IndexError, TypeError):
            raise UnknownReference(f"unknown node {node_id}") from None
        return n

    def element(self, element_id: int) -> Element:
        for e in self.elements:
            if e.id == element_id:
                return e
        raise UnknownReference(f"unknown element {element_id}")

    @property
    def n_dof(self) -> int:
        return len(self.nodes) * len(self.dofs)

    @property
    def n_params(self) -> int:
        return self.parameters.n_params

    @property
    def n_meas(self) -> int:
        return len(self.measurements)

    def dof_index(self, node_id: int, tag: str) -> int:
        tag = canonical_dof(tag)
        self.node(node_id)
        if tag not in self.dofs:
            raise UnknownReference(f"DOF {tag} is not active in model {self.name!r}")
        return (node_id - 1) * len(self.dofs) + self.dofs.index(tag)

    def element_dofs(self, e: Element) -> tuple[list[str], np.ndarray]:
        """Local DOF tags of an element and their global indices (``-1`` if inactive)."""
        tags = ["ux", "uy"] if e.kind == "truss2d" else ["ux", "uy", "rz"]
        idx = []
        for nid in e.nodes:
            for t in tags:
                idx.append(self.dof_index(nid, t) if t in self.dofs else -1)
        return tags, np.array(idx)

    @property
    def delta0(self) -> np.ndarray:
        return np.array([g.magnitude for g in self.load_groups], dtype=float)

    @property
    def tolerances(self) -> np.ndarray:
        return np.array([m.tolerance for m in self.measurements], dtype=float)

    @property
    def weights(self) -> np.ndarray:
        return np.array([m.weight for m in self.measurements], dtype=float)

    @property
    def measurement_labels(self) -> list[str]:
        return [m.label or f"m{i + 1}" for i, m in enumerate(self.measurements)]

    @property
    def parameter_labels(self) -> list[str]:
        if self.parameters.labels:
            return list(self.parameters.labels)
        return [f"E{i + 1}" for i in range(self.n_params)]

    def with_measurements(self, measurements: Sequence[Measurement]) -> "StructuralModel":
        return replace(self, measurements=tuple(measurements))


# ---------------------------------------------------------------------------
# geometry helpers
# ---------------------------------------------------------------------------


def element_geometry(model: StructuralModel, e: Element) -> tuple[float, float, float]:
    """Length and direction cosines ``(L, c, s)`` of an element."""
    ni, nj = model.node(e.nodes[0]), model.node(e.nodes[1])
    dx, dy = nj.x - ni.x, nj.y - ni.y
    length = float(np.hypot(dx, dy))
    if length == 0.0:
        raise DegenerateGeometry(f"element {e.id} has zero length")
    return length, dx / length, dy / length


def element_length(model: StructuralModel, e: Element) -> float:
    ni, nj = model.node(e.nodes[0]), model.node(e.nodes[1])
    return float(np.hypot(nj.x - ni.x, nj.y - ni.y))


def gauss_rule(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre abscissae and weights on [-1, 1]."""
    return np.polynomial.legendre.leggauss(n)


def gauss_points_x(model: StructuralModel, e: Element) -> np.ndarray:
    """Global x coordinates of the element's integration points."""
    xi, _ = gauss_rule(e.n_gauss)
    ni, nj = model.node(e.nodes[0]), model.node(e.nodes[1])
    t = 0.5 * (xi + 1.0)
    return ni.x + t * (nj.x - ni.x)


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------


def build_measurement_matrix(model: StructuralModel) -> np.ndarray:
    """Scalar matrix ``H`` with ``u_measured = H @ u``."""
    H = np.zeros((model.n_meas, model.n_dof))
    for row, m in enumerate(model.measurements):
        if m.kind == "strain":
            if m.element is None:
                raise ModelError("strain measurement needs an element")
            e = model.element(m.element)
            if e.kind != "truss2d":
                raise StrainOnUnsupportedKind(
                    f"strain measurement on element {e.id} of kind {e.kind}; only truss2d is supported"
                )
            length, c, s = element_geometry(model, e)
            coeffs = {"ux": c / length, "uy": s / length}
            for sign, nid in ((-1.0, e.nodes[0]), (1.0, e.nodes[1])):
                for tag, val in coeffs.items():
                    if tag in model.dofs:
                        H[row, model.dof_index(nid, tag)] += sign * val
                    elif val != 0.0:
                        raise ModelError(f"strain row on element {e.id} needs inactive DOF {tag}")
        else:
            if m.node is None:
                raise ModelError(f"{m.kind} measurement needs a node")
            tag = "rz" if m.kind == "rotation" else canonical_dof(m.dof or "ux")
            H[row, model.dof_index(m.node, tag)] = 1.0
    return H


def build_parameter_map(model: StructuralModel) -> list[np.ndarray]:
    """Per-element matrices ``L_e`` mapping parameters to integration-point values."""
    pm = model.parameters
    maps = []
    if pm.style == "per_element":
        lookup = dict(pm.element_param) if pm.element_param else {
            e.id: i for i, e in enumerate(model.elements)
        }
        for e in model.elements:
            if e.id not in lookup:
                raise CoverageGap(f"element {e.id} has no parameter")
            k = lookup[e.id]
            if not 0 <= k < pm.n_params:
                raise CoverageGap(f"element {e.id} maps to parameter {k} outside 0..{pm.n_params - 1}")
            L = np.zeros((e.n_gauss, pm.n_params))
            L[:, k] = 1.0
            maps.append(L)
    elif pm.style == "nodal_linear":
        xs = np.asarray(pm.material_x, dtype=float)
        if len(xs) != pm.n_params or np.any(np.diff(xs) <= 0):
            raise ModelError("material_x must be strictly increasing with one entry per parameter")
        span = xs[-1] - xs[0]
        for e in model.elements:
            gx = gauss_points_x(model, e)
            L = np.zeros((len(gx), pm.n_params))
            for r, x in enumerate(gx):
                if x < xs[0] - 1e-12 * span or x > xs[-1] + 1e-12 * span:
                    raise CoverageGap(f"element {e.id}: point x={x} lies outside the material mesh")
                k = int(np.clip(np.searchsorted(xs, x, side="right") - 1, 0, len(xs) - 2))
                t = float(np.clip((x - xs[k]) / (xs[k + 1] - xs[k]), 0.0, 1.0))
                L[r, k] = 1.0 - t
                L[r, k + 1] = t
            maps.append(L)
    else:
        raise ModelError(f"unknown parameter mesh style {pm.style!r}")
    return maps


def build_constraints(model: StructuralModel) -> np.ndarray:
    """Constraint matrix ``C`` with one unit entry per supported DOF."""
    seen = set()
    rows = []
    for nid, tag in model.supports:
        idx = model.dof_index(nid, tag)
        if idx in seen:
            raise DuplicateConstraint(f"DOF {tag} of node {nid} is constrained twice")
        seen.add(idx)
        row = np.zeros(model.n_dof)
        row[idx] = 1.0
        rows.append(row)
    return np.array(rows).reshape(len(rows), model.n_dof)


# ---------------------------------------------------------------------------
# (de)serialization
# ---------------------------------------------------------------------------


def _measurement_from_dict(d: Mapping[str, Any]) -> Measurement:
    kind = d.get("type", d.get("kind"))
    dof = d.get("dof")
    return Measurement(
        kind=kind,
        tolerance=float(d["tolerance"]),
        node=d.get("node"),
        dof=canonical_dof(dof) if dof else None,
        element=d.get("element"),
        weight=float(d.get("weight", 1.0)),
        label=str(d.get("label", "")),
    )


def model_from_dict(d: Mapping[str, Any]) -> StructuralModel:
    nodes = tuple(Node(int(n["id"]), float(n["x"]), float(n.get("y", 0.0))) for n in d["nodes"])
    defaults = d.get("element_defaults", {})
    elements = []
    for raw in d["elements"]:
        e = {**defaults, **raw}
        elements.append(
            Element(
                id=int(e["id"]),
                kind=e["kind"],
                nodes=(int(e["nodes"][0]), int(e["nodes"][1])),
                area=float(e["area"]),
                inertia=float(e.get("inertia", 0.0)),
                n_gauss=int(e.get("n_gauss", 1)),
            )
        )
    supports = []
    for s in d.get("supports", []):
        if isinstance(s, Mapping):
            supports.append((int(s["node"]), canonical_dof(s["dof"])))
        else:
            supports.append((int(s[0]), canonical_dof(s[1])))
    groups = []
    for g in d.get("loads", []):
        nodal = tuple(
            NodalLoad(int(i["node"]), canonical_dof(i["dof"]), float(i.get("factor", 1.0)))
            for i in g.get("nodal", [])
        )
        elem = tuple(
            ElementLoad(
                element=int(i["element"]),
                shape=i.get("shape", "uniform"),
                factor=float(i.get("factor", 1.0)),
                direction=i.get("direction", "transverse"),
                position=float(i.get("position", 0.5)),
            )
            for i in g.get("element", [])
        )
        groups.append(
            LoadGroup(
                name=str(g["name"]),
                magnitude=float(g["magnitude"]),
                uncertainty=float(g.get("uncertainty", 0.0)),
                nodal=nodal,
                element=elem,
            )
        )
    p = d["parameters"]
    ep = p.get("element_param")
    params = ParameterMesh(
        style=p.get("style", "per_element"),
        n_params=int(p.get("count", len(elements))),
        element_param={int(k): int(v) for k, v in ep.items()} if ep else None,
        material_x=tuple(float(x) for x in p.get("material_x", ())),
        labels=tuple(p.get("labels", ())),
    )
    measurements = tuple(_measurement_from_dict(m) for m in d.get("measurements", []))
    true_vals = p.get("true_values")
    return StructuralModel(
        name=str(d.get("name", "model")),
        nodes=nodes,
        elements=tuple(elements),
        supports=tuple(supports),
        load_groups=tuple(groups),
        parameters=params,
        measurements=measurements,
        dofs=tuple(d.get("dofs", ())),
        initial_modulus=float(p.get("initial", 60e9)),
        gamma=float(d.get("gamma", 0.0)),
        weighting=str(d.get("weighting", "unit")),
        true_parameters=tuple(float(v) for v in true_vals) if true_vals is not None else None,
        meta=dict(d.get("meta", {})),
    )


def load_model(path: str | Path) -> StructuralModel:
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(yaml.safe_load(fh))


def model_to_dict(model: StructuralModel) -> dict[str, Any]:
    pm = model.parameters
    params: dict[str, Any] = {"style": pm.style, "count": pm.n_params, "initial": model.initial_modulus}
    if pm.element_param:
        params["element_param"] = dict(pm.element_param)
    if pm.material_x:
        params["material_x"] = list(pm.material_x)
    if pm.labels:
        params["labels"] = list(pm.labels)
    if model.true_parameters is not None:
        params["true_values"] = list(model.true_parameters)
    return {
        "name": model.name,
        "dofs": list(model.dofs),
        "gamma": model.gamma,
        "weighting": model.weighting,
        "nodes": [{"id": n.id, "x": n.x, "y": n.y} for n in model.nodes],
        "elements": [
            {
                "id": e.id,
                "kind": e.kind,
                "nodes": list(e.nodes),
                "area": e.area,
                "inertia": e.inertia,
                "n_gauss": e.n_gauss,
            }
            for e in model.elements
        ],
        "supports": [[nid, tag] for nid, tag in model.supports],
        "loads": [
            {
                "name": g.name,
                "magnitude": g.magnitude,
                "uncertainty": g.uncertainty,
                "nodal": [{"node": i.node, "dof": i.dof, "factor": i.factor} for i in g.nodal],
                "element": [
                    {
                        "element": i.element,
                        "shape": i.shape,
                        "factor": i.factor,
                        "direction": i.direction,
                        "position": i.position,
                    }
                    for i in g.element
                ],
            }
            for g in model.load_groups
        ],
        "parameters": params,
        "measurements": [
            {
                k: v
                for k, v in {
                    "type": m.kind,
                    "node": m.node,
                    "dof": m.dof,
                    "element": m.element,
                    "tolerance": m.tolerance,
                    "weight": m.weight,
                    "label": m.label,
                }.items()
                if v is not None
            }
            for m in model.measurements
        ],
        "meta": dict(model.meta),
    }


def refine_model(model: StructuralModel, factor: int) -> StructuralModel:
    """Split every element into ``factor`` equal children.

    New nodes are appended after the existing ones, so measurement and
    support references stay valid.  Per-element parameters are inherited by
    the children; nodal-linear material meshes are unchanged.  Strain rows
    move to the first child (strain is constant along an unloaded truss
    member).
    """
    if factor < 1:
        raise ModelError("refinement factor must be >= 1")
    if factor == 1:
        return model
    nodes = list(model.nodes)
    elements, children = [], {}
    next_node = len(nodes) + 1
    next_elem = 1
    for e in model.elements:
        ni, nj = model.node(e.nodes[0]), model.node(e.nodes[1])
        chain = [ni.id]
        for k in range(1, factor):
            t = k / factor
            nodes.append(Node(next_node, ni.x + t * (nj.x - ni.x), ni.y + t * (nj.y - ni.y)))
            chain.append(next_node)
            next_node += 1
        chain.append(nj.id)
        ids = []
        for a, b in zip(chain[:-1], chain[1:]):
            elements.append(replace(e, id=next_elem, nodes=(a, b)))
            ids.append(next_elem)
            next_elem += 1
        children[e.id] = ids

    groups = []
    for g in model.load_groups:
        loads = []
        for ld in g.element:
            kids = children[ld.element]
            if ld.shape == "point":
                k = min(int(ld.position * factor), factor - 1)
                loads.append(replace(ld, element=kids[k], position=ld.position * factor - k))
            else:
                loads.extend(replace(ld, element=c) for c in kids)
        groups.append(replace(g, element=tuple(loads)))

    pm = model.parameters
    if pm.style == "per_element":
        lookup = dict(pm.element_param) if pm.element_param else {
            e.id: i for i, e in enumerate(model.elements)
        }
        pm = replace(pm, element_param={c: lookup[p] for p, kids in children.items() for c in kids})
    meas = tuple(
        replace(m, element=children[m.element][0]) if m.element is not None else m
        for m in model.measurements
    )
    return replace(
        model,
        name=f"{model.name}-x{factor}",
        nodes=tuple(nodes),
        elements=tuple(elements),
        load_groups=tuple(groups),
        parameters=pm,
        measurements=meas,
    )
