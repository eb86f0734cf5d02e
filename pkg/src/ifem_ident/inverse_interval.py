"""Interval stage: deviation system, propagators, and fixed-point enclosure.

Deviations are measured from the deterministic solution,
``x = x0 - dx`` for ``x`` in ``u, w, alpha, delta, u~``.  Substituting into
the state, adjoint and optimality equations gives

    K_h du_h = M_h dd_h + A_h Theta(A_h^T du_h)

where ``du_h = (du, dw, dalpha)`` and ``Theta`` collects the bilinear
terms.  Multiplying by ``A_h^T K_h^-1`` yields a fixed-point problem in
``v = A_h^T du_h``, which is enclosed by the hull iteration

    v <- hull(Q1 dd_h + Q2 Theta(v), v).

The support constraints are carried through as Lagrange-multiplier rows, so
every ``n_dof`` block below is really ``n_dof + n_constraints`` long.
The optimality residual left by the deterministic stage enters the right
hand side as a point term, so the enclosure is centred on the exact
stationary point rather than on its approximation.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla

from . import interval as iv
from .decomposition import DecomposedSystem, assemble_global
from .errors import DimensionMismatch, EnclosureDiverged, NonFinite, SingularDeviationSystem
from .forward import ConstrainedFactor
from .inverse_det import DetInverseResult, InverseConfig, gradient, invert_deterministic, regularization_matrix
from .model import StructuralModel

# reciprocal condition below which the reduced Hessian is declared singular
_SCHUR_RCOND = 1e-15
RESIDUAL_SIGN = 1.0


@dataclass(frozen=True)
class EnclosureConfig:
    """Settings of the fixed-point stage.

    ``inflation`` widens the recovered bounds by this fraction of their
    magnitude, covering rounding in the point (non-interval) solves that
    produce ``alpha0`` and the propagators.
    """

    eps: float = 1e-12
    max_iters: int = 200
    blowup: float = 10.0
    keep_history: bool = False
    inflation: float = 1e-13


@dataclass
class DeviationSystem:
    """Blocks of ``K_h``, ``M_h``, ``A_h`` and the interval data deviations.

    ``K_h`` is stored by blocks: ``X = [[H^T S H, K0], [K0, 0]]`` acts on
    ``(du, dw)``, ``Y = [C_w0^T; C_u0^T]`` couples them to ``dalpha`` and
    ``Z = gamma D^T D`` is the parameter block.
    """

    sys: DecomposedSystem
    K0: np.ndarray  # augmented with the constraint rows
    HSH: np.ndarray
    HS: np.ndarray
    C_u0: np.ndarray
    C_w0: np.ndarray
    Z: np.ndarray
    A_aug: np.ndarray
    M_aug: np.ndarray
    dd_h: iv.IntervalVector
    n_aug: int
    residual: np.ndarray | None = None

    @property
    def n_gp(self) -> int:
        return self.A_aug.shape[1]

    @property
    def n_params(self) -> int:
        return self.Z.shape[0]

    def K_h(self) -> np.ndarray:
        """The full deviation matrix (for checks; the solver works by blocks)."""
        na, p = self.n_aug, self.n_params
        Kh = np.zeros((2 * na + p, 2 * na + p))
        Kh[:na, :na] = self.HSH
        Kh[:na, na : 2 * na] = self.K0
        Kh[na : 2 * na, :na] = self.K0
        Kh[:na, 2 * na :] = self.C_w0.T
        Kh[na : 2 * na, 2 * na :] = self.C_u0.T
        Kh[2 * na :, :na] = self.C_w0
        Kh[2 * na :, na : 2 * na] = self.C_u0
        Kh[2 * na :, 2 * na :] = self.Z
        return Kh

    def M_h(self) -> np.ndarray:
        na, p = self.n_aug, self.n_params
        k, q = self.M_aug.shape[1], self.HS.shape[1]
        Mh = np.zeros((2 * na + p, k + q))
        Mh[:na, k:] = self.HS
        Mh[na : 2 * na, :k] = self.M_aug
        return Mh

    def A_h(self) -> np.ndarray:
        return sla.block_diag(self.A_aug, self.A_aug, self.sys.Lam.T)


@dataclass
class Propagators:
    P1: np.ndarray
    P2: np.ndarray
    Q1: np.ndarray
    Q2: np.ndarray
    n_aug: int
    p0: np.ndarray | None = None  # K_h^-1 applied to the optimality residual
    q0: np.ndarray | None = None  # A_h^T p0


@dataclass
class IntervalSolution:
    u: iv.IntervalVector
    w: iv.IntervalVector
    alpha: iv.IntervalVector
    v_star: iv.IntervalVector
    iterations: int
    det: DetInverseResult | None = None
    history: list[iv.IntervalVector] = field(default_factory=list, repr=False)

    @property
    def widths(self) -> np.ndarray:
        return self.alpha.width


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------


def build_sensitivity_blocks(sys: DecomposedSystem, u0, w0) -> tuple[np.ndarray, np.ndarray]:
    """``C_u0 = Lam^T diag(A^T u0) A^T`` and ``C_w0 = Lam^T diag(A^T w0) A^T``."""
    u0 = np.asarray(u0, dtype=float)
    w0 = np.asarray(w0, dtype=float)
    if u0.shape != (sys.n_dof,) or w0.shape != (sys.n_dof,):
        raise DimensionMismatch(f"u0 and w0 must have length {sys.n_dof}")
    C_u0 = (sys.Lam.T * (sys.A.T @ u0)) @ sys.A.T
    C_w0 = (sys.Lam.T * (sys.A.T @ w0)) @ sys.A.T
    return C_u0, C_w0


def _as_interval_vector(x, n: int, name: str) -> iv.IntervalVector:
    if not isinstance(x, iv.IntervalVector):
        x = iv.IntervalVector(np.asarray(x, dtype=float))
    if len(x) != n:
        raise DimensionMismatch(f"{name} has length {len(x)}, expected {n}")
    return x


def assemble_deviation_system(
    sys: DecomposedSystem,
    u0,
    w0,
    alpha0,
    cfg: InverseConfig,
    delta: iv.IntervalVector,
    u_meas: iv.IntervalVector,
    delta0=None,
    u_meas0=None,
) -> DeviationSystem:
    """Build the deviation blocks around ``(u0, w0, alpha0)``.

    ``delta0`` and ``u_meas0`` are the reference data the deterministic
    stage was run with (midpoints by default); ``dd_h = (delta0 - delta,
    u_meas0 - u_meas)``.
    """
    delta = _as_interval_vector(delta, sys.n_loads, "delta")
    u_meas = _as_interval_vector(u_meas, sys.n_meas, "u_meas")
    delta0 = delta.mid if delta0 is None else np.asarray(delta0, dtype=float)
    u_meas0 = u_meas.mid if u_meas0 is None else np.asarray(u_meas0, dtype=float)

    n, c = sys.n_dof, sys.C.shape[0]
    na = n + c
    K = sys.stiffness(alpha0)
    K0 = np.zeros((na, na))
    K0[:n, :n] = K
    K0[:n, n:] = sys.C.T
    K0[n:, :n] = sys.C
    s = cfg.s_diag(sys, u_meas0)
    HS = np.zeros((na, sys.n_meas))
    HS[:n] = sys.H.T * s
    HSH = np.zeros((na, na))
    HSH[:n, :n] = (sys.H.T * s) @ sys.H
    C_u0, C_w0 = build_sensitivity_blocks(sys, u0, w0)
    pad = np.zeros((sys.n_params, c))
    C_u0 = np.hstack([C_u0, pad])
    C_w0 = np.hstack([C_w0, pad])
    p = sys.n_params
    if cfg.gamma_eff(sys) > 0.0:
        Z = cfg.gamma_eff(sys) * regularization_matrix(p, cfg.regularization)
    else:
        Z = np.zeros((p, p))
    A_aug = np.vstack([sys.A, np.zeros((c, sys.n_cols))])
    M_aug = np.vstack([sys.M, np.zeros((c, sys.n_loads))])
    dd_h = iv.IntervalVector.concat([delta0 - delta, u_meas0 - u_meas])
    residual = gradient(sys, np.asarray(u0, dtype=float), np.asarray(w0, dtype=float), np.asarray(alpha0, dtype=float), cfg)
    return DeviationSystem(sys, K0, HSH, HS, C_u0, C_w0, Z, A_aug, M_aug, dd_h, na, residual)


def _rcond(mat: np.ndarray) -> float:
    """Reciprocal 1-norm condition of a symmetrically equilibrated matrix."""
    d = np.sqrt(np.abs(np.diag(mat)))
    d[d == 0.0] = 1.0
    scaled = mat / d[:, None] / d[None, :]
    if not np.all(np.isfinite(scaled)):
        return 0.0
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            lu, _ = sla.lu_factor(scaled, check_finite=False)
    except (ValueError, np.linalg.LinAlgError):
        return 0.0
    anorm = np.abs(scaled).sum(axis=0).max()
    rc, info = sla.lapack.dgecon(lu, anorm, norm="1")
    return float(rc) if info == 0 else 0.0


def compute_propagators(dev: DeviationSystem) -> Propagators:
    """``P1 = K_h^-1 M_h``, ``P2 = K_h^-1 A_h`` and ``Q = A_h^T P`` by blocks.

    With ``G = K0^-1`` the ``(du, dw)`` block inverts in closed form,
    ``X^-1 = [[0, G], [G, -G HSH G]]``, and only the ``p x p`` Schur
    complement ``Z - Y^T X^-1 Y`` (the reduced Hessian) is factorized.
    """
    na, p = dev.n_aug, dev.n_params
    lu = sla.lu_factor(dev.K0, check_finite=False)
    G = lambda b: sla.lu_solve(lu, b, check_finite=False)  # noqa: E731

    def xinv(b1, b2):
        gb2 = G(b2)
        return gb2, G(b1 - dev.HSH @ gb2)

    # X^-1 Y with Y = [C_w0^T; C_u0^T]
    xy1, xy2 = xinv(dev.C_w0.T, dev.C_u0.T)
    schur = dev.Z - (dev.C_w0 @ xy1 + dev.C_u0 @ xy2)
    schur = 0.5 * (schur + schur.T)
    if _rcond(schur) < _SCHUR_RCOND:
        raise SingularDeviationSystem(
            "the reduced Hessian of the deviation system is singular; "
            "the parameters are not identifiable from these measurements (try gamma > 0)"
        )
    s_lu = sla.lu_factor(schur, check_finite=False)

    def kh_solve(b1, b2, b3):
        x1, x2 = xinv(b1, b2)
        xa = sla.lu_solve(s_lu, b3 - (dev.C_w0 @ x1 + dev.C_u0 @ x2), check_finite=False)
        return np.vstack([x1 - xy1 @ xa, x2 - xy2 @ xa, xa])

    k, q = dev.M_aug.shape[1], dev.HS.shape[1]
    z = lambda r, c: np.zeros((r, c))  # noqa: E731
    P1 = kh_solve(np.hstack([z(na, k), dev.HS]), np.hstack([dev.M_aug, z(na, q)]), z(p, k + q))
    m = dev.n_gp
    Lt = dev.sys.Lam.T
    P2 = kh_solve(
        np.hstack([dev.A_aug, z(na, 2 * m)]),
        np.hstack([z(na, m), dev.A_aug, z(na, m)]),
        np.hstack([z(p, 2 * m), Lt]),
    )
    props = Propagators(P1, P2, _apply_AhT(dev, P1), _apply_AhT(dev, P2), na)
    if dev.residual is not None:
        p0 = kh_solve(z(na, 1), z(na, 1), RESIDUAL_SIGN * dev.residual[:, None])
        props.p0, props.q0 = p0[:, 0], _apply_AhT(dev, p0)[:, 0]
    return props


def _apply_AhT(dev: DeviationSystem, P: np.ndarray) -> np.ndarray:
    na = dev.n_aug
    return np.vstack([dev.A_aug.T @ P[:na], dev.A_aug.T @ P[na : 2 * na], dev.sys.Lam @ P[2 * na :]])


def propagators_direct(dev: DeviationSystem) -> Propagators:
    """Whole-matrix reference for :func:`compute_propagators`."""
    Kh = dev.K_h()
    P1 = np.linalg.solve(Kh, dev.M_h())
    P2 = np.linalg.solve(Kh, dev.A_h())
    Ah = dev.A_h()
    props = Propagators(P1, P2, Ah.T @ P1, Ah.T @ P2, dev.n_aug)
    if dev.residual is not None:
        rhs = np.concatenate([np.zeros(2 * dev.n_aug), RESIDUAL_SIGN * dev.residual])
        props.p0 = np.linalg.solve(Kh, rhs)
        props.q0 = Ah.T @ props.p0
    return props


# ---------------------------------------------------------------------------
# fixed point
# ---------------------------------------------------------------------------


def theta(v_h: iv.IntervalVector) -> iv.IntervalVector:
    """``(v3 o v2, v3 o v1, v2 o v1)`` for ``v_h = (A^T du, A^T dw, Lam dalpha)``."""
    n = len(v_h)
    if n % 3:
        raise DimensionMismatch(f"v_h length {n} is not a multiple of 3")
    m = n // 3
    v1, v2, v3 = v_h[:m], v_h[m : 2 * m], v_h[2 * m :]
    return iv.IntervalVector.concat([iv.hadamard(v3, v2), iv.hadamard(v3, v1), iv.hadamard(v2, v1)])


def _settled(new: iv.IntervalVector, old: iv.IntervalVector, eps: float) -> bool:
    return bool(
        np.all(np.abs(new.lo - old.lo) <= eps * np.abs(new.lo))
        and np.all(np.abs(new.hi - old.hi) <= eps * np.abs(new.hi))
    )


def fixed_point_enclose(
    props: Propagators,
    dd_h: iv.IntervalVector,
    cfg: EnclosureConfig | None = None,
    reference: np.ndarray | None = None,
    history: list | None = None,
) -> tuple[iv.IntervalVector, int]:
    """Hull iteration from ``v1 = Q1 dd_h``; returns ``(v*, iterations)``.

    ``reference`` is ``Lam alpha0``: the iteration is declared divergent as
    soon as the ``Lam dalpha`` block gets wider than ``cfg.blowup`` times it.
    """
    cfg = cfg or EnclosureConfig()
    m = props.Q1.shape[0] // 3
    limit = None if reference is None else cfg.blowup * np.abs(reference)
    # overflow shows up as a NonFinite bound and is reported as divergence
    with np.errstate(over="ignore", invalid="ignore"):
        return _iterate(props, dd_h, cfg, m, limit, history)


def _iterate(props, dd_h, cfg, m, limit, history):
    try:
        base = iv.scalar_matvec(props.Q1, dd_h)
        if props.q0 is not None:
            base = base + props.q0
        v = base
        if history is not None:
            history.append(v)
        for it in range(1, cfg.max_iters + 1):
            new = (base + iv.scalar_matvec(props.Q2, theta(v))).hull(v)
            if history is not None:
                history.append(new)
            if limit is not None and np.any(new.width[2 * m :] > limit):
                raise EnclosureDiverged(
                    f"parameter deviation bounds exceed {cfg.blowup}x the reference values at iteration {it}"
                )
            if _settled(new, v, cfg.eps):
                return new, it
            v = new
    except NonFinite as exc:
        raise EnclosureDiverged(f"fixed-point iterate became unbounded: {exc}") from None
    raise EnclosureDiverged(f"fixed-point iteration did not settle within {cfg.max_iters} iterations")


def recover_solution(props: Propagators, dd_h, v_star, u0, w0, alpha0) -> IntervalSolution:
    """Map ``v*`` back to ``(u, w, alpha)`` intervals."""
    du_h = iv.scalar_matvec(props.P1, dd_h) + iv.scalar_matvec(props.P2, theta(v_star))
    if props.p0 is not None:
        du_h = du_h + props.p0
    na = props.n_aug
    n = len(u0)
    u = np.asarray(u0, dtype=float) - du_h[:n]
    w = np.asarray(w0, dtype=float) - du_h[na : na + n]
    alpha = np.asarray(alpha0, dtype=float) - du_h[2 * na :]
    return IntervalSolution(u=u, w=w, alpha=alpha, v_star=v_star, iterations=0)


def inflate(x: iv.IntervalVector, rel: float) -> iv.IntervalVector:
    """Outward widening by ``rel`` times the bound magnitudes."""
    return x + iv.IntervalVector(-rel * np.abs(x.lo), rel * np.abs(x.hi))


def enclose(
    sys: DecomposedSystem,
    det: DetInverseResult,
    delta,
    u_meas,
    cfg: InverseConfig,
    enc: EnclosureConfig | None = None,
    delta0=None,
    u_meas0=None,
) -> IntervalSolution:
    """Interval stage around an existing deterministic result."""
    enc = enc or EnclosureConfig()
    cfg = cfg.for_model(sys.model)
    dev = assemble_deviation_system(sys, det.u, det.w, det.alpha, cfg, delta, u_meas, delta0, u_meas0)
    props = compute_propagators(dev)
    history: list | None = [] if enc.keep_history else None
    v_star, its = fixed_point_enclose(props, dev.dd_h, enc, sys.Lam @ det.alpha, history)
    sol = recover_solution(props, dev.dd_h, v_star, det.u, det.w, det.alpha)
    if enc.inflation > 0.0:
        sol.u, sol.w, sol.alpha = (inflate(x, enc.inflation) for x in (sol.u, sol.w, sol.alpha))
    sol.iterations = its
    sol.det = det
    sol.history = history or []
    return sol


def invert_interval(
    model: StructuralModel | DecomposedSystem,
    delta,
    u_meas,
    cfg: InverseConfig | None = None,
    enc: EnclosureConfig | None = None,
) -> IntervalSolution:
    """Two-step inversion: deterministic fit at the data midpoints, then enclosure."""
    sys = model if isinstance(model, DecomposedSystem) else assemble_global(model)
    cfg = (cfg or InverseConfig()).for_model(sys.model)
    delta = _as_interval_vector(delta, sys.n_loads, "delta")
    u_meas = _as_interval_vector(u_meas, sys.n_meas, "u_meas")
    det = invert_deterministic(sys, delta.mid, u_meas.mid, cfg)
    return enclose(sys, det, delta, u_meas, cfg, enc)


def uncertainty_percent(x: iv.IntervalVector) -> np.ndarray:
    """Width relative to the midpoint magnitude, in percent."""
    return 100.0 * x.width / np.abs(x.mid)


def write_interval_report(x: iv.IntervalVector, labels, path: str | Path, scale: float = 1.0) -> Path:
    """CSV with columns entry, lo, hi, mid, width, uncertainty_pct."""
    path = Path(path)
    unc = uncertainty_percent(x)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["entry", "lo", "hi", "mid", "width", "uncertainty_pct"])
        for lab, lo, hi, mid, wd, u in zip(labels, x.lo, x.hi, x.mid, x.width, unc):
            wr.writerow([lab, lo / scale, hi / scale, mid / scale, wd / scale, u])
    return path
