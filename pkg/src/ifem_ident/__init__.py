"""Interval identification of structural parameters.

A deterministic adjoint-based conjugate-gradient fit is followed by an
interval fixed-point enclosure built on the decomposition
``K = A diag(Lambda alpha) A^T``.
"""

from .decomposition import DecomposedSystem, assemble_global
from .errors import *  # noqa: F401,F403
from .forward import generate_exact_measurements, solve_constrained, solve_model
from .interval import Interval, IntervalMatrix, IntervalVector
from .inverse_det import DetInverseResult, InverseConfig, invert_deterministic
from .inverse_interval import EnclosureConfig, IntervalSolution, invert_interval, uncertainty_percent
from .measurements import monte_carlo_inverse, synthesize_measurements
from .model import StructuralModel, load_model

__version__ = "0.1.0"
