"""Constrained equilibrium solves and synthetic exact measurements.

Supports enter through Lagrange multipliers::

    [K  C^T] [u]   [f]
    [C   0 ] [l] = [0]

The constraint block is scaled by the largest stiffness diagonal before
factorization so partial pivoting sees entries of comparable size.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .decomposition import assemble_global
from .errors import DimensionMismatch, SingularSystem
from .model import StructuralModel, build_measurement_matrix, refine_model

# pivot ratio below which the augmented matrix is treated as singular
_SINGULAR_RCOND = 1e-14


@dataclass(frozen=True)
class ConstrainedSolve:
    u: np.ndarray
    lam: np.ndarray
    residual_norm: float
    constraint_norm: float


class ConstrainedFactor:
    """LU factorization of the augmented system, reusable across right-hand sides."""

    def __init__(self, K: np.ndarray, C: np.ndarray):
        K = np.asarray(K, dtype=float)
        C = np.asarray(C, dtype=float).reshape(-1, K.shape[0])
        if K.ndim != 2 or K.shape[0] != K.shape[1]:
            raise DimensionMismatch(f"K must be square, got {K.shape}")
        n, m = K.shape[0], C.shape[0]
        diag = np.abs(np.diag(K))
        self.scale = float(diag.max()) if diag.size and diag.max() > 0 else 1.0
        aug = np.zeros((n + m, n + m))
        aug[:n, :n] = K
        aug[:n, n:] = self.scale * C.T
        aug[n:, :n] = self.scale * C
        if not np.all(np.isfinite(aug)):
            raise SingularSystem("augmented matrix has non-finite entries")
        with warnings.catch_warnings():
            # singularity is detected from the pivots below
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            lu, piv = sla.lu_factor(aug, check_finite=False)
        piv_abs = np.abs(np.diag(lu))
        if piv_abs.min() <= _SINGULAR_RCOND * piv_abs.max():
            raise SingularSystem("augmented stiffness matrix is singular (check supports and stiffness)")
        self.K, self.C, self.n, self.m = K, C, n, m
        self._lu = (lu, piv)

    def solve(self, f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(u, lam)`` for load ``f`` (vector or matrix of columns)."""
        f = np.asarray(f, dtype=float)
        rhs = np.zeros((self.n + self.m,) + f.shape[1:])
        rhs[: self.n] = f
        x = sla.lu_solve(self._lu, rhs, check_finite=False)
        return x[: self.n], self.scale * x[self.n :]


def solve_constrained(K: np.ndarray, C: np.ndarray, f: np.ndarray) -> ConstrainedSolve:
    """Solve ``K u + C^T lam = f`` subject to ``C u = 0``."""
    fac = ConstrainedFactor(K, C)
    f = np.asarray(f, dtype=float)
    if f.shape != (fac.n,):
        raise DimensionMismatch(f"f has shape {f.shape}, expected ({fac.n},)")
    u, lam = fac.solve(f)
    res = np.linalg.norm(fac.K @ u + fac.C.T @ lam - f)
    return ConstrainedSolve(u, lam, float(res), float(np.linalg.norm(fac.C @ u)))


def generalized_inverse(K: np.ndarray, C: np.ndarray) -> np.ndarray:
    """Upper-left block ``G11`` of the inverse augmented matrix (``u = G11 f``)."""
    fac = ConstrainedFactor(K, C)
    G, _ = fac.solve(np.eye(fac.n))
    return 0.5 * (G + G.T)


def solve_model(model: StructuralModel, alpha, delta=None) -> np.ndarray:
    """Displacements of ``model`` for parameters ``alpha`` and loads ``delta``."""
    sys = assemble_global(model)
    delta = model.delta0 if delta is None else np.asarray(delta, dtype=float)
    return solve_constrained(sys.stiffness(alpha), sys.C, sys.M @ delta).u


def generate_exact_measurements(model: StructuralModel, alpha_true, refinement: int = 1) -> np.ndarray:
    """Noise-free measurements from a forward solve, optionally on a refined mesh."""
    alpha_true = np.asarray(alpha_true, dtype=float)
    if np.any(alpha_true <= 0):
        raise ValueError("alpha_true must be positive")
    fine = refine_model(model, refinement)
    u = solve_model(fine, alpha_true)
    return build_measurement_matrix(fine) @ u
