"""Deterministic inverse solver: adjoint gradients and nonlinear CG.

Minimizes

    Gamma(alpha) = 1/2 (H u - u~)^T S (H u - u~) + 1/2 gamma |D alpha / p|^2

subject to ``K(alpha) u = M delta``, where ``D`` is the second-difference
operator and ``p`` (``InverseConfig.param_scale``) sets the units in which
the smoothness penalty is measured.  The gradient comes from one extra
(adjoint) solve with the same factorization.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .decomposition import DecomposedSystem, assemble_global
from .errors import (
    DimensionMismatch,
    DivergedObjective,
    LineSearchFailed,
    NonPositiveStiffness,
    SingularSystem,
    TooFewParams,
)
from .forward import ConstrainedFactor
from .model import StructuralModel

CG_RULES = ("PRP", "FR", "HS")
WEIGHTINGS = ("unit", "tolerance", "relative")
REGULARIZATIONS = ("symmetrized", "literal")
PRECONDITIONERS = (False, True, "diagonal", "gauss-newton")


@dataclass(frozen=True)
class InverseConfig:
    """Settings of the deterministic stage.

    Parameters
    ----------
    gamma
        Regularizer weight (dimensionless once ``alpha`` is divided by
        ``param_scale``); ``None`` uses the model's value.
    weights
        Diagonal of ``S`` or a weighting name (see :func:`resolve_weights`).
    param_scale
        Unit of ``alpha`` inside the penalty term; ``None`` uses the model's
        initial modulus, making the penalty dimensionless.
    tau_l, tau_u
        Weak Wolfe constants, ``0 < tau_l < tau_u < 1``.
    tol
        Relative step and gradient-ratio stopping tolerance.
    initial
        Scalar or vector initial guess in Pa; ``None`` uses the model default.
    regularization
        ``"symmetrized"`` uses ``R = D^T D``; ``"literal"`` uses the square
        second-difference matrix ``tridiag(1, -2, 1)`` itself.
    grad_ref
        Gradient norm that ``|g|`` is compared against in the stopping
        test; ``None`` uses the gradient at the initial point.  Warm-started
        runs pass the cold-start value so they stop at the same accuracy.
    precondition
        ``"diagonal"`` (or ``True``) scales the search directions by the
        inverse Gauss-Newton diagonal at the initial point; ``"gauss-newton"``
        uses the inverse of the full Gauss-Newton matrix there.  The
        preconditioner stays fixed during the run, so the minimizer is
        unchanged; only the iteration count drops.
    polish
        Maximum number of Newton steps taken after the CG run has
        met its stopping test; a step is kept only if it lowers ``|g|``.
        This pins ``alpha`` to the stationary point well below the
        accuracy ``tol`` implies on ill-conditioned problems.
    stall_ratio
        If the line search can no longer make progress while
        ``|g|/|g1|`` is below this value, the run ends with status
        ``"stalled"`` instead of raising.
    """

    gamma: float | None = None
    weights: str | Sequence[float] | None = None
    param_scale: float | None = None
    tau_l: float = 0.25
    tau_u: float = 0.5
    tol: float = 1e-10
    max_iters: int = 5000
    initial: float | Sequence[float] | None = None
    rule: str = "PRP"
    prp_plus: bool = True
    first_step: float = 0.1
    ls_budget: int = 60
    regularization: str = "symmetrized"
    precondition: bool | str = False
    grad_ref: float | None = None
    stall_ratio: float = 1e-6
    diverge_window: int = 10
    polish: int = 5

    def __post_init__(self):
        if not 0.0 < self.tau_l < self.tau_u < 1.0:
            raise ValueError("need 0 < tau_l < tau_u < 1")
        if self.gamma is not None and self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.polish < 0:
            raise ValueError("polish must be >= 0")
        if self.rule not in CG_RULES:
            raise ValueError(f"rule must be one of {CG_RULES}")
        if self.param_scale is not None and self.param_scale <= 0:
            raise ValueError("param_scale must be positive")
        if self.precondition not in PRECONDITIONERS:
            raise ValueError(f"precondition must be one of {PRECONDITIONERS}")
        if self.regularization not in REGULARIZATIONS:
            raise ValueError(f"regularization must be one of {REGULARIZATIONS}")
        if isinstance(self.weights, str) and self.weights not in WEIGHTINGS:
            raise ValueError(f"weights must be one of {WEIGHTINGS} or a sequence")

    def for_model(self, model: StructuralModel) -> "InverseConfig":
        """Fill unset fields (``gamma``, ``weights``, ``param_scale``) from the model."""
        return replace(
            self,
            gamma=model.gamma if self.gamma is None else self.gamma,
            weights=model.weighting if self.weights is None else self.weights,
            param_scale=model.initial_modulus if self.param_scale is None else self.param_scale,
        )

    def s_diag(self, sys: DecomposedSystem, u_ref=None) -> np.ndarray:
        """Diagonal of ``S``; ``u_ref`` (the fitted data) is needed for ``"relative"``."""
        return resolve_weights(sys, self.weights, u_ref)

    def scale(self, sys: DecomposedSystem) -> float:
        return sys.model.initial_modulus if self.param_scale is None else self.param_scale

    def gamma_eff(self, sys: DecomposedSystem) -> float:
        gamma = sys.model.gamma if self.gamma is None else self.gamma
        return gamma / self.scale(sys) ** 2


def resolve_weights(sys: DecomposedSystem, weights, u_ref=None) -> np.ndarray:
    """Turn a weighting name or sequence into the diagonal of ``S``.

    ``None`` defers to the model's ``weighting``.  ``"unit"`` is ``S = I``
    scaled by the per-row model weights, ``"tolerance"`` uses
    ``1 / tol^2`` and ``"relative"`` uses ``1 / u_ref^2`` so each row's
    misfit is measured relative to its reading.
    """
    if weights is None:
        weights = sys.model.weighting
    if isinstance(weights, str):
        base = sys.model.weights
        if weights == "unit":
            s = base
        elif weights == "tolerance":
            s = base / sys.model.tolerances**2
        elif weights == "relative":
            if u_ref is None:
                raise ValueError("relative weighting needs the reference measurements")
            u_ref = np.asarray(u_ref, dtype=float)
            if np.any(u_ref == 0):
                raise ValueError("relative weighting needs nonzero readings")
            s = base / u_ref**2
        else:
            raise ValueError(f"unknown weighting {weights!r}")
    else:
        s = np.asarray(weights, dtype=float)
    if s.shape != (sys.n_meas,):
        raise DimensionMismatch(f"S has {s.shape} entries, expected {sys.n_meas}")
    if np.any(s <= 0) or not np.all(np.isfinite(s)):
        raise ValueError("weights must be positive and finite")
    return s


@dataclass
class DetInverseResult:
    alpha: np.ndarray
    u: np.ndarray
    w: np.ndarray
    iterations: int
    status: str
    gamma_history: list[float]
    grad_ratio: float
    step_ratio: float
    regularization: str = "symmetrized"
    grad_norm0: float = 0.0
    polished: int = 0
    trace: list[tuple[int, float, float, float]] = field(default_factory=list, repr=False)

    @property
    def converged(self) -> bool:
        return self.status in ("converged", "stalled")


# ---------------------------------------------------------------------------
# building blocks
# ---------------------------------------------------------------------------


def regularizer_matrix(n_params: int) -> np.ndarray:
    """Second-difference operator ``D`` with interior rows ``(1, -2, 1)``.

    ``D`` has shape ``(n - 2, n)``; the penalty is ``1/2 gamma |D alpha|^2``.
    """
    if n_params < 3:
        raise TooFewParams(f"second differences need at least 3 parameters, got {n_params}")
    D = np.zeros((n_params - 2, n_params))
    for i in range(n_params - 2):
        D[i, i : i + 3] = (1.0, -2.0, 1.0)
    return D


def regularization_matrix(n_params: int, form: str = "symmetrized") -> np.ndarray:
    """Symmetric ``R`` of the penalty ``1/2 gamma alpha^T R alpha``."""
    D = regularizer_matrix(n_params)
    if form == "symmetrized":
        return D.T @ D
    if form == "literal":
        R = np.zeros((n_params, n_params))
        R[1:-1] = D
        R[0, :2] = (-2.0, 1.0)
        R[-1, -2:] = (1.0, -2.0)
        return R
    raise ValueError(f"unknown regularization {form!r}")


def _reg_operator(sys: DecomposedSystem, cfg: InverseConfig) -> np.ndarray | None:
    if cfg.gamma_eff(sys) == 0.0:
        return None
    return regularization_matrix(sys.n_params, cfg.regularization)


def _factor(sys: DecomposedSystem, alpha: np.ndarray) -> ConstrainedFactor:
    return ConstrainedFactor(sys.stiffness(alpha), sys.C)


def solve_state_adjoint(sys: DecomposedSystem, alpha, delta0, u_meas, cfg: InverseConfig):
    """State ``K u = M delta0`` and adjoint ``K w = H^T S (u~ - H u)``."""
    alpha = np.asarray(alpha, dtype=float)
    fac = _factor(sys, alpha)
    u, _ = fac.solve(sys.M @ np.asarray(delta0, dtype=float))
    u_meas = np.asarray(u_meas, dtype=float)
    w = _adjoint(sys, fac, u, u_meas, cfg.s_diag(sys, u_meas))
    return u, w


def _adjoint(sys, fac, u, u_meas, s):
    w, _ = fac.solve(sys.H.T @ (s * (u_meas - sys.H @ u)))
    return w


def objective(sys: DecomposedSystem, u, alpha, u_meas, cfg: InverseConfig) -> float:
    r = sys.H @ u - np.asarray(u_meas, dtype=float)
    val = 0.5 * float(r @ (cfg.s_diag(sys, u_meas) * r))
    R = _reg_operator(sys, cfg)
    if R is not None:
        alpha = np.asarray(alpha, dtype=float)
        val += 0.5 * cfg.gamma_eff(sys) * float(alpha @ (R @ alpha))
    return val


def gradient(sys: DecomposedSystem, u, w, alpha, cfg: InverseConfig) -> np.ndarray:
    """``g = Lam^T (A^T w o A^T u) + gamma R alpha``."""
    g = sys.Lam.T @ ((sys.A.T @ w) * (sys.A.T @ u))
    R = _reg_operator(sys, cfg)
    if R is not None:
        g = g + cfg.gamma_eff(sys) * (R @ np.asarray(alpha, dtype=float))
    return g


def cg_direction(g_new, g_old, d_old, rule: str = "PRP", prp_plus: bool = True, precond=None) -> np.ndarray:
    """New search direction ``-P g_new + theta d_old``; ``d_old=None`` gives steepest descent.

    ``precond`` is ``P`` itself or its diagonal (identity when ``None``).
    """
    g_new = np.asarray(g_new, dtype=float)
    if precond is None:
        apply = lambda g: g
    elif np.ndim(precond) == 2:
        apply = lambda g: precond @ g
    else:
        apply = lambda g: precond * g
    z_new = apply(g_new)
    if d_old is None or g_old is None:
        return -z_new
    g_old = np.asarray(g_old, dtype=float)
    d_old = np.asarray(d_old, dtype=float)
    z_old = apply(g_old)
    if rule == "PRP":
        theta = z_new @ (g_new - g_old) / (z_old @ g_old)
        if prp_plus:
            theta = max(theta, 0.0)
    elif rule == "FR":
        theta = (z_new @ g_new) / (z_old @ g_old)
    elif rule == "HS":
        y = g_new - g_old
        denom = d_old @ y
        theta = 0.0 if denom == 0.0 else (z_new @ y) / denom
    else:
        raise ValueError(f"unknown CG rule {rule!r}")
    return -z_new + theta * d_old


def line_search_weak_wolfe(
    phi: Callable[[float], float],
    dphi: Callable[[float], float],
    s_init: float,
    tau_l: float = 0.25,
    tau_u: float = 0.5,
    *,
    phi0: float | None = None,
    dphi0: float | None = None,
    budget: int = 60,
) -> float:
    """Bisection/expansion search for a step meeting the weak Wolfe conditions.

    Accepts ``s`` with ``phi(s) - phi(0) <= tau_l s phi'(0)`` and
    ``phi'(s) >= tau_u phi'(0)``.  A non-finite ``phi(s)`` counts as a failed
    decrease test.
    """
    phi0 = phi(0.0) if phi0 is None else phi0
    dphi0 = dphi(0.0) if dphi0 is None else dphi0
    if not dphi0 < 0.0:
        raise LineSearchFailed("search direction is not a descent direction")
    lo, hi = 0.0, np.inf
    s = float(s_init)
    for _ in range(budget):
        f = phi(s)
        if not np.isfinite(f) or f - phi0 > tau_l * s * dphi0:
            hi = s
        elif dphi(s) < tau_u * dphi0:
            lo = s
        else:
            return s
        s = 0.5 * (lo + hi) if np.isfinite(hi) else 2.0 * s
        if s == lo or s == hi:
            break
    raise LineSearchFailed(f"no weak Wolfe step found within {budget} evaluations")


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------


class _State:
    """Objective, gradient, and factorization at one parameter point."""

    __slots__ = ("alpha", "fac", "u", "r", "w", "g")

    def __init__(self, alpha, fac, u, r, w, g):
        self.alpha, self.fac, self.u, self.r, self.w, self.g = alpha, fac, u, r, w, g


class _Problem:
    def __init__(self, sys, delta0, u_meas, cfg):
        self.sys = sys
        self.cfg = cfg
        self.f = sys.M @ np.asarray(delta0, dtype=float)
        self.u_meas = np.asarray(u_meas, dtype=float)
        if self.u_meas.shape != (sys.n_meas,):
            raise DimensionMismatch(f"u_meas has shape {self.u_meas.shape}, expected ({sys.n_meas},)")
        self.s = cfg.s_diag(sys, self.u_meas)
        self.R = _reg_operator(sys, cfg)
        self.geff = cfg.gamma_eff(sys)

    def _complete(self, alpha, fac, u) -> _State:
        r = self.sys.H @ u - self.u_meas
        w, _ = fac.solve(-(self.sys.H.T @ (self.s * r)))
        g = self.sys.Lam.T @ ((self.sys.A.T @ w) * (self.sys.A.T @ u))
        if self.R is not None:
            g = g + self.geff * (self.R @ alpha)
        return _State(alpha, fac, u, r, w, g)

    def state(self, alpha) -> _State:
        fac = _factor(self.sys, alpha)
        u, _ = fac.solve(self.f)
        return self._complete(alpha, fac, u)

    def gauss_newton(self, st: _State) -> np.ndarray:
        """``J^T S J + gamma R`` with ``J = d(H u)/d alpha``."""
        A = self.sys.A
        du, _ = st.fac.solve(-(A @ (self.sys.Lam * (A.T @ st.u)[:, None])))
        J = self.sys.H @ du
        G = (J.T * self.s) @ J
        if self.R is not None:
            G = G + self.geff * self.R
        return 0.5 * (G + G.T)

    def hessian(self, st: _State) -> np.ndarray:
        """Exact Hessian of the reduced objective, from batched state and adjoint sensitivities."""
        A, Lam, H = self.sys.A, self.sys.Lam, self.sys.H
        Au, Aw = A.T @ st.u, A.T @ st.w
        du, _ = st.fac.solve(-(A @ (Lam * Au[:, None])))
        dw, _ = st.fac.solve(-(A @ (Lam * Aw[:, None])) - H.T @ (self.s[:, None] * (H @ du)))
        G = Lam.T @ ((A.T @ dw) * Au[:, None] + Aw[:, None] * (A.T @ du))
        if self.R is not None:
            G = G + self.geff * self.R
        return 0.5 * (G + G.T)

    def preconditioner(self, st: _State, kind) -> np.ndarray | None:
        """Fixed ``P`` (matrix or diagonal), or ``None`` if it is not positive definite."""
        G = self.gauss_newton(st)
        if kind == "gauss-newton":
            try:
                Lc = np.linalg.cholesky(G)
            except np.linalg.LinAlgError:
                return None
            Linv = np.linalg.inv(Lc)
            return Linv.T @ Linv
        h = np.diag(G)
        if np.all(h > 0) and np.all(np.isfinite(h)):
            return 1.0 / h
        return None

    def value(self, st: _State) -> float:
        val = 0.5 * float(st.r @ (self.s * st.r))
        if self.R is not None:
            val += 0.5 * self.geff * float(st.alpha @ (self.R @ st.alpha))
        return val

    def step(self, st: _State, dalpha) -> tuple[_State, float]:
        """State at ``alpha + dalpha`` and the exact objective change.

        The displacement change solves ``K1 du = -dK u0`` so that small steps
        do not lose digits to cancellation.
        """
        a1 = st.alpha + dalpha
        fac = _factor(self.sys, a1)
        A = self.sys.A
        du, _ = fac.solve(-(A @ ((self.sys.Lam @ dalpha) * (A.T @ st.u))))
        new = self._complete(a1, fac, st.u + du)
        dr = self.sys.H @ du
        change = float(dr @ (self.s * (st.r + 0.5 * dr)))
        if self.R is not None:
            rd = self.R @ dalpha
            change += self.geff * float(st.alpha @ rd + 0.5 * (dalpha @ rd))
        return new, change


def _polish(prob: _Problem, st: _State, max_steps: int, halvings: int = 4) -> tuple[_State, int]:
    """Damped Newton steps from a converged point while ``|g|`` keeps falling."""
    taken = 0
    for _ in range(max_steps):
        try:
            dalpha = -np.linalg.solve(prob.hessian(st), st.g)
        except np.linalg.LinAlgError:
            break
        new = None
        for k in range(halvings + 1):
            try:
                trial, _ = prob.step(st, 0.5**k * dalpha)
            except (NonPositiveStiffness, SingularSystem):
                continue
            if np.linalg.norm(trial.g) < np.linalg.norm(st.g):
                new = trial
                break
        if new is None:
            break
        st, taken = new, taken + 1
    return st, taken


def _initial_alpha(sys: DecomposedSystem, cfg: InverseConfig) -> np.ndarray:
    init = sys.model.initial_modulus if cfg.initial is None else cfg.initial
    alpha = np.broadcast_to(np.asarray(init, dtype=float), (sys.n_params,)).copy()
    if np.any(alpha <= 0):
        raise NonPositiveStiffness("initial parameters must be positive")
    return alpha


def invert_deterministic(
    model: StructuralModel | DecomposedSystem,
    delta0,
    u_meas,
    cfg: InverseConfig | None = None,
) -> DetInverseResult:
    """Nonlinear CG with weak Wolfe line search from ``cfg.initial``.

    Stops when both ``|alpha_{i+1} - alpha_i| / |alpha_i|`` and
    ``|g_{i+1}| / |g_1|`` drop below ``cfg.tol``.
    """
    sys = model if isinstance(model, DecomposedSystem) else assemble_global(model)
    cfg = (cfg or InverseConfig()).for_model(sys.model)
    prob = _Problem(sys, delta0, u_meas, cfg)
    st = prob.state(_initial_alpha(sys, cfg))
    gamma = prob.value(st)
    history = [gamma]
    trace = [(0, gamma, 1.0, 0.0)]
    g0 = float(np.linalg.norm(st.g))
    g1 = g0 if cfg.grad_ref is None else max(float(cfg.grad_ref), g0)
    if g0 == 0.0:
        return DetInverseResult(st.alpha, st.u, st.w, 0, "converged", history, 0.0, 0.0, trace=trace, regularization=cfg.regularization, grad_norm0=g0)

    def finish(iterations, status):
        end, steps = _polish(prob, st, cfg.polish)
        ratio = float(np.linalg.norm(end.g) / g1) if steps else grad_ratio
        return DetInverseResult(end.alpha, end.u, end.w, iterations, status, history, ratio, step_ratio, trace=trace,
                                regularization=cfg.regularization, grad_norm0=g0, polished=steps)

    precond = prob.preconditioner(st, cfg.precondition) if cfg.precondition else None
    d = cg_direction(st.g, None, None, precond=precond)
    prev_change = None
    grad_ratio, step_ratio = 1.0, np.inf
    rises = 0
    for it in range(1, cfg.max_iters + 1):
        slope = float(st.g @ d)
        if slope >= 0.0:
            d = cg_direction(st.g, None, None, precond=precond)
            slope = float(st.g @ d)
        if prev_change is None:
            s0 = cfg.first_step * np.linalg.norm(st.alpha) / np.linalg.norm(d)
        else:
            s0 = 2.0 * prev_change / slope
        cache: dict[float, tuple[_State, float]] = {}

        def trial(s):
            if s not in cache:
                try:
                    cache[s] = prob.step(st, s * d)
                except (NonPositiveStiffness, SingularSystem):
                    cache[s] = (None, np.inf)
            return cache[s]

        try:
            s = line_search_weak_wolfe(
                lambda s: trial(s)[1],
                lambda s: float(trial(s)[0].g @ d),
                s0,
                cfg.tau_l,
                cfg.tau_u,
                phi0=0.0,
                dphi0=slope,
                budget=cfg.ls_budget,
            )
        except LineSearchFailed:
            if grad_ratio <= cfg.stall_ratio:
                return finish(it - 1, "stalled")
            raise
        new, change = cache[s]
        rises = rises + 1 if change > 0 else 0
        if rises >= cfg.diverge_window:
            raise DivergedObjective(f"objective rose over {rises} consecutive steps")
        step_ratio = float(np.linalg.norm(s * d) / np.linalg.norm(st.alpha))
        grad_ratio = float(np.linalg.norm(new.g) / g1)
        d = cg_direction(new.g, st.g, d, cfg.rule, cfg.prp_plus, precond)
        st, prev_change = new, change
        gamma = prob.value(st)
        history.append(gamma)
        trace.append((it, gamma, grad_ratio, s))
        if step_ratio <= cfg.tol and grad_ratio <= cfg.tol:
            return finish(it, "converged")
    return DetInverseResult(st.alpha, st.u, st.w, cfg.max_iters, "max_iters", history, grad_ratio, step_ratio, trace=trace, regularization=cfg.regularization, grad_norm0=g0)


def write_trace_csv(result: DetInverseResult, path: str | Path) -> Path:
    """Convergence trace: iteration, objective, gradient ratio, step size."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["iteration", "objective", "grad_ratio", "step"])
        for row in result.trace:
            wr.writerow([row[0], repr(row[1]), repr(row[2]), repr(row[3])])
    return path
