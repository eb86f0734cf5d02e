"""Separation of deterministic and uncertain terms in K and f.

The stiffness is written as ``K = A diag(Lam @ alpha) A.T`` and the load as
``f = M @ delta`` so that every uncertain parameter enters exactly once.  Each
column of ``A`` is one strain component (axial or bending) evaluated at one
integration point of one element; the matching row of ``Lam`` carries the
quadrature weight, Jacobian, and section constant, times the row of ``L_e``
that interpolates the parameters to that point.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.io

from . import interval as iv
from .errors import DimensionMismatch, ModelError, NonPositiveStiffness, UnsupportedLoadShape
from .model import (
    Element,
    LoadGroup,
    StructuralModel,
    build_constraints,
    build_measurement_matrix,
    build_parameter_map,
    element_geometry,
    gauss_rule,
)


@dataclass(frozen=True)
class ElementDecomposition:
    """``K_e = A_e diag(Lam_e @ alpha_e) A_e.T`` for one element.

    ``A_e`` rows follow ``dof_index`` (the element's active global DOFs);
    columns are (integration point, strain component) pairs.
    """

    element_id: int
    A_e: np.ndarray
    Lam_e: np.ndarray
    dof_index: np.ndarray
    xi: np.ndarray
    weights: np.ndarray
    jacobian: float
    components: tuple[str, ...]
    gauss_of_column: np.ndarray
    # constitutive factors: Phi is the identity, phi the section constants
    phi: tuple[float, ...] = ()


@dataclass
class DecomposedSystem:
    """Globally assembled scalar operators of one structural model."""

    model: StructuralModel
    A: np.ndarray
    Lam: np.ndarray
    M: np.ndarray
    C: np.ndarray
    H: np.ndarray
    elements: list[ElementDecomposition] = field(repr=False)
    column_element: np.ndarray = field(repr=False, default=None)

    @property
    def n_dof(self) -> int:
        return self.A.shape[0]

    @property
    def n_cols(self) -> int:
        return self.A.shape[1]

    @property
    def n_params(self) -> int:
        return self.Lam.shape[1]

    @property
    def n_meas(self) -> int:
        return self.H.shape[0]

    @property
    def n_loads(self) -> int:
        return self.M.shape[1]

    def stiffness(self, alpha):
        return stiffness_from_params(self, alpha)

    def load(self, delta) -> np.ndarray:
        return self.M @ np.asarray(delta, dtype=float)


# ---------------------------------------------------------------------------
# element kinematics
# ---------------------------------------------------------------------------


def _rotation(c: float, s: float, kind: str) -> np.ndarray:
    """Global-to-local transformation of the element DOF vector."""
    if kind == "truss2d":
        r = np.array([[c, s], [-s, c]])
    else:
        r = np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])
    z = np.zeros_like(r)
    return np.block([[r, z], [z, r]])


def hermite_curvature(s: float, length: float) -> np.ndarray:
    """Second x-derivatives of the cubic Hermite shapes at ``s = x/L``."""
    L = length
    return np.array(
        [(-6.0 + 12.0 * s) / L**2, (-4.0 + 6.0 * s) / L, (6.0 - 12.0 * s) / L**2, (-2.0 + 6.0 * s) / L]
    )


def hermite_shapes(s: float, length: float) -> np.ndarray:
    L = length
    return np.array(
        [1 - 3 * s**2 + 2 * s**3, L * (s - 2 * s**2 + s**3), 3 * s**2 - 2 * s**3, L * (-(s**2) + s**3)]
    )


def _local_strain_rows(kind: str, s: float, length: float) -> dict[str, np.ndarray]:
    """Local strain-displacement rows, keyed by component."""
    if kind == "truss2d":
        return {"axial": np.array([-1.0, 0.0, 1.0, 0.0]) / length}
    n2 = hermite_curvature(s, length)
    return {
        "axial": np.array([-1.0, 0.0, 0.0, 1.0, 0.0, 0.0]) / length,
        "bending": np.array([0.0, n2[0], n2[1], 0.0, n2[2], n2[3]]),
    }


def _project(model: StructuralModel, e: Element, vec: np.ndarray, idx: np.ndarray, what: str):
    active = idx >= 0
    if np.any(vec[~active] != 0.0) and np.any(vec[active] != 0.0):
        raise ModelError(f"element {e.id}: {what} couples to a DOF that is not active in the model")
    return vec[active]


def decompose_element_stiffness(model: StructuralModel, e: Element) -> ElementDecomposition:
    """Build ``A_e`` and ``Lam_e`` from the element's quadrature rule."""
    length, c, s = element_geometry(model, e)
    T = _rotation(c, s, e.kind)
    _, idx = model.element_dofs(e)
    active = idx >= 0
    xi, w = gauss_rule(e.n_gauss)
    jac = 0.5 * length
    section = {"axial": e.area, "bending": e.inertia}

    per_gp = [_local_strain_rows(e.kind, 0.5 * (x + 1.0), length) for x in xi]
    # a strain component is kept only if it acts on some active DOF
    names = []
    for name in per_gp[0]:
        rows = np.array([g[name] @ T for g in per_gp])
        if np.any(rows[:, active] != 0.0):
            if np.any(rows[:, ~active] != 0.0):
                raise ModelError(f"element {e.id}: {name} strain needs a DOF that is not active")
            names.append(name)
    if not names:
        raise ModelError(f"element {e.id} has no stiffness on the active DOFs")

    cols, lam_rows, gp_of_col, comps = [], [], [], []
    for i, g in enumerate(per_gp):
        for name in names:
            cols.append((g[name] @ T)[active])
            row = np.zeros(len(xi))
            row[i] = w[i] * jac * section[name]
            lam_rows.append(row)
            gp_of_col.append(i)
            comps.append(name)
    return ElementDecomposition(
        element_id=e.id,
        A_e=np.array(cols).T,
        Lam_e=np.array(lam_rows),
        dof_index=idx[active],
        xi=xi,
        weights=w,
        jacobian=jac,
        components=tuple(comps),
        gauss_of_column=np.array(gp_of_col),
        phi=tuple(section[n] for n in names),
    )


def _element_load_vector(model: StructuralModel, e: Element, load) -> np.ndarray:
    """Consistent nodal load (global frame) for a unit-intensity element load."""
    length, c, s = element_geometry(model, e)
    T = _rotation(c, s, e.kind)
    frame = e.kind == "frame2d"
    if load.shape == "uniform":
        if load.direction == "transverse":
            f = (
                np.array([0.0, length / 2, length**2 / 12, 0.0, length / 2, -(length**2) / 12])
                if frame
                else np.array([0.0, length / 2, 0.0, length / 2])
            )
        elif load.direction == "axial":
            f = (
                np.array([length / 2, 0, 0, length / 2, 0, 0.0])
                if frame
                else np.array([length / 2, 0, length / 2, 0.0])
            )
        else:
            raise UnsupportedLoadShape(f"unknown load direction {load.direction!r}")
    elif load.shape == "point":
        t = load.position
        if not 0.0 <= t <= 1.0:
            raise UnsupportedLoadShape(f"point-load position {t} outside [0, 1]")
        if load.direction == "transverse":
            if frame:
                n = hermite_shapes(t, length)
                f = np.array([0.0, n[0], n[1], 0.0, n[2], n[3]])
            else:
                f = np.array([0.0, 1 - t, 0.0, t])
        elif load.direction == "axial":
            f = np.array([1 - t, 0, 0, t, 0, 0.0]) if frame else np.array([1 - t, 0, t, 0.0])
        else:
            raise UnsupportedLoadShape(f"unknown load direction {load.direction!r}")
    else:
        raise UnsupportedLoadShape(f"load shape {load.shape!r} is not supported (uniform or point only)")
    return T.T @ f


def decompose_element_load(model: StructuralModel, e: Element, groups: tuple[LoadGroup, ...]) -> np.ndarray:
    """``M_e``: columns map each load-group magnitude to the element's nodal loads."""
    _, idx = model.element_dofs(e)
    active = idx >= 0
    Me = np.zeros((int(active.sum()), len(groups)))
    for k, g in enumerate(groups):
        for load in g.element:
            if load.element != e.id:
                continue
            f = _element_load_vector(model, e, load) * load.factor
            Me[:, k] += _project(model, e, f, idx, "element load")
    return Me


def assemble_global(model: StructuralModel) -> DecomposedSystem:
    """Assemble ``A``, ``Lam``, ``M``, ``C`` and ``H`` for the whole model."""
    Ls = build_parameter_map(model)
    n_dof = model.n_dof
    decs = [decompose_element_stiffness(model, e) for e in model.elements]
    n_cols = sum(d.A_e.shape[1] for d in decs)
    A = np.zeros((n_dof, n_cols))
    Lam = np.zeros((n_cols, model.n_params))
    col_elem = np.zeros(n_cols, dtype=int)
    j = 0
    for d, L in zip(decs, Ls):
        if L.shape[0] != d.Lam_e.shape[1]:
            raise DimensionMismatch(f"element {d.element_id}: L_e has {L.shape[0]} rows, expected {d.Lam_e.shape[1]}")
        k = d.A_e.shape[1]
        A[d.dof_index, j : j + k] = d.A_e
        Lam[j : j + k] = d.Lam_e @ L
        col_elem[j : j + k] = d.element_id
        j += k

    groups = model.load_groups
    M = np.zeros((n_dof, len(groups)))
    for k, g in enumerate(groups):
        for nl in g.nodal:
            M[model.dof_index(nl.node, nl.dof), k] += nl.factor
        for load in g.element:
            model.element(load.element)
    for e, d in zip(model.elements, decs):
        Me = decompose_element_load(model, e, groups)
        _, idx = model.element_dofs(e)
        M[idx[idx >= 0]] += Me

    return DecomposedSystem(
        model=model,
        A=A,
        Lam=Lam,
        M=M,
        C=build_constraints(model),
        H=build_measurement_matrix(model),
        elements=decs,
        column_element=col_elem,
    )


# ---------------------------------------------------------------------------
# stiffness evaluation
# ---------------------------------------------------------------------------


def stiffness_from_params(sys: DecomposedSystem, alpha):
    """``K(alpha) = A diag(Lam alpha) A.T`` for scalar or interval ``alpha``."""
    if isinstance(alpha, iv.IntervalVector):
        return _interval_stiffness(sys, alpha)
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape != (sys.n_params,):
        raise DimensionMismatch(f"alpha has shape {alpha.shape}, expected ({sys.n_params},)")
    d = sys.Lam @ alpha
    if np.any(d <= 0.0):
        raise NonPositiveStiffness("an integration-point stiffness is not positive")
    K = (sys.A * d) @ sys.A.T
    return 0.5 * (K + K.T)


def _interval_stiffness(sys: DecomposedSystem, alpha: iv.IntervalVector) -> iv.IntervalMatrix:
    if len(alpha) != sys.n_params:
        raise DimensionMismatch(f"alpha has length {len(alpha)}, expected {sys.n_params}")
    d = iv.scalar_matvec(sys.Lam, alpha)
    n = sys.n_dof
    lo = np.zeros((n, n))
    hi = np.zeros((n, n))
    for k in range(sys.n_cols):
        a = sys.A[:, k]
        nz = np.flatnonzero(a)
        if nz.size == 0:
            continue
        ai, aj = a[nz][:, None], a[nz][None, :]
        c_lo, c_hi = iv.mul_down(ai, aj), iv.mul_up(ai, aj)
        t_lo, t_hi = iv._interval_mul(c_lo, c_hi, d.lo[k], d.hi[k])
        block = np.ix_(nz, nz)
        lo[block] = iv.add_down(lo[block], t_lo)
        hi[block] = iv.add_up(hi[block], t_hi)
    return iv.IntervalMatrix(lo, hi)


def element_stiffness_direct(model: StructuralModel, e: Element, moduli_at_gauss: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Element stiffness by direct quadrature of ``B^T E B`` (global frame).

    Returns the matrix and the global DOF indices of its rows.  Written
    independently of the decomposition so it can serve as a cross-check.
    """
    length, c, s = element_geometry(model, e)
    T = _rotation(c, s, e.kind)
    xi, w = gauss_rule(e.n_gauss)
    n_loc = 4 if e.kind == "truss2d" else 6
    k_loc = np.zeros((n_loc, n_loc))
    for x, wt, E in zip(xi, w, moduli_at_gauss):
        sp = 0.5 * (x + 1.0)
        if e.kind == "truss2d":
            b = np.array([-1.0, 0.0, 1.0, 0.0]) / length
            k_loc += wt * 0.5 * length * E * e.area * np.outer(b, b)
        else:
            ba = np.array([-1.0, 0, 0, 1.0, 0, 0]) / length
            n2 = hermite_curvature(sp, length)
            bb = np.array([0.0, n2[0], n2[1], 0.0, n2[2], n2[3]])
            k_loc += wt * 0.5 * length * E * (e.area * np.outer(ba, ba) + e.inertia * np.outer(bb, bb))
    kg = T.T @ k_loc @ T
    _, idx = model.element_dofs(e)
    active = idx >= 0
    return kg[np.ix_(active, active)], idx[active]


def assemble_conventional(model: StructuralModel, alpha) -> np.ndarray:
    """``K = sum_e T_e^T K_e T_e`` with element matrices from direct quadrature."""
    alpha = np.asarray(alpha, dtype=float)
    K = np.zeros((model.n_dof, model.n_dof))
    for e, L in zip(model.elements, build_parameter_map(model)):
        ke, idx = element_stiffness_direct(model, e, L @ alpha)
        K[np.ix_(idx, idx)] += ke
    return K


def dump_matrices(sys: DecomposedSystem, directory: str | Path) -> list[Path]:
    """Write ``A``, ``Lam``, ``M``, ``C`` and ``H`` as Matrix Market files."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name in ("A", "Lam", "M", "C", "H"):
        p = out / f"{sys.model.name}_{name}.mtx"
        scipy.io.mmwrite(str(p), np.atleast_2d(getattr(sys, name)), comment=f"{name} of {sys.model.name}")
        paths.append(p)
    return paths
