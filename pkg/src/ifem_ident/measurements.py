"""Interval measurement synthesis and the Monte Carlo comparison.

Synthesis perturbs exact data with uniform noise inside the device
tolerance, ``n_sets`` times, and intersects the resulting tolerance boxes.
Every box contains the exact value, so the intersection does too.

Monte Carlo draws point data inside the interval data, inverts each draw
deterministically, and keeps the element-wise min/max of the estimates.
"""

from __future__ import annotations

import csv
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import interval as iv
from .decomposition import DecomposedSystem, assemble_global
from .errors import AllRunsFailed, DimensionMismatch, EmptyIntersection, IdentError
from .inverse_det import DetInverseResult, InverseConfig, invert_deterministic
from .model import StructuralModel

DISTRIBUTIONS = ("uniform", "triangular", "exponential", "rayleigh")


@dataclass(frozen=True)
class MeasurementEnsemble:
    u_exact: np.ndarray
    tolerance: np.ndarray
    n_sets: int
    samples: np.ndarray  # (n_sets, n_meas) perturbed readings
    u: iv.IntervalVector
    seed: int | None


@dataclass
class MonteCarloResult:
    n_runs: int
    alpha: iv.IntervalVector
    failures: int
    seed: int | None
    distribution: str = "uniform"
    samples: np.ndarray | None = field(default=None, repr=False)


def synthesize_measurements(u_exact, tol, n_sets: int = 3, seed: int | None = None) -> MeasurementEnsemble:
    """Intersect ``n_sets`` noisy tolerance boxes around ``u_exact``."""
    u_exact = np.asarray(u_exact, dtype=float)
    tol = np.broadcast_to(np.asarray(tol, dtype=float), u_exact.shape).copy()
    if np.any(tol <= 0):
        raise ValueError("tolerances must be positive")
    if n_sets < 1:
        raise ValueError("n_sets must be >= 1")
    rng = np.random.default_rng(seed)
    noise = rng.uniform(-1.0, 1.0, size=(n_sets,) + u_exact.shape) * tol
    samples = u_exact + noise
    lo = iv.add_down(samples, -tol).max(axis=0)
    hi = iv.add_up(samples, tol).min(axis=0)
    if np.any(lo > hi):
        raise EmptyIntersection("tolerance boxes do not intersect")
    u = iv.IntervalVector(lo, hi)
    assert np.all(u.contains(u_exact)), "synthesized intervals must contain the exact data"
    return MeasurementEnsemble(u_exact, tol, n_sets, samples, u, seed)


def sample_in_box(box: iv.IntervalVector, rng: np.random.Generator, distribution: str = "uniform") -> np.ndarray:
    """One draw per entry, supported on ``[lo, hi]``.

    ``triangular`` peaks at the midpoint; ``exponential`` and ``rayleigh``
    are truncated to the box (rate/scale = width / 3) and start at ``lo``.
    """
    lo, hi = box.lo, box.hi
    width = hi - lo
    p = rng.random(len(box))
    if distribution == "uniform":
        t = p
    elif distribution == "triangular":
        t = np.where(p < 0.5, np.sqrt(p / 2.0), 1.0 - np.sqrt((1.0 - p) / 2.0))
    elif distribution == "exponential":
        c = 1.0 - np.exp(-3.0)
        t = -np.log1p(-p * c) / 3.0
    elif distribution == "rayleigh":
        c = 1.0 - np.exp(-0.5 * 9.0)
        t = np.sqrt(-2.0 * np.log1p(-p * c)) / 3.0
    else:
        raise ValueError(f"unknown distribution {distribution!r}; expected one of {DISTRIBUTIONS}")
    return np.clip(lo + np.clip(t, 0.0, 1.0) * width, lo, hi)


def _one_run(args):
    sys, delta, u_meas, cfg, dist, seed = args
    rng = np.random.default_rng(seed)
    d = sample_in_box(delta, rng, dist)
    u = sample_in_box(u_meas, rng, dist)
    try:
        res = invert_deterministic(sys, d, u, cfg)
    except IdentError:
        return None
    return res.alpha if res.converged else None


def monte_carlo_inverse(
    model: StructuralModel | DecomposedSystem,
    delta: iv.IntervalVector,
    u_meas: iv.IntervalVector,
    n_runs: int = 1000,
    seed: int | None = 0,
    cfg: InverseConfig | None = None,
    distribution: str = "uniform",
    workers: int | None = None,
    warm_start=None,
    keep_samples: bool = False,
    precondition: bool | str = "gauss-newton",
    tol: float | None = None,
) -> MonteCarloResult:
    """Element-wise min/max of deterministic inversions of sampled data.

    Run ``k`` uses a seed spawned from ``seed``, so results do not depend on
    ``workers``.  Runs that fail or do not converge are dropped and counted.
    ``warm_start`` replaces ``cfg.initial``.  Passing the midpoint
    :class:`DetInverseResult` also carries over its initial gradient norm,
    so warm runs stop at the accuracy of the cold midpoint fit.  Runs use the diagonally preconditioned solver with stopping tolerance
    ``tol`` (``None`` keeps ``cfg.tol``); both only change the path to the
    same minimizer.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    if distribution not in DISTRIBUTIONS:
        raise ValueError(f"unknown distribution {distribution!r}")
    sys = model if isinstance(model, DecomposedSystem) else assemble_global(model)
    if not isinstance(delta, iv.IntervalVector):
        delta = iv.IntervalVector(np.asarray(delta, dtype=float))
    if len(delta) != sys.n_loads or len(u_meas) != sys.n_meas:
        raise DimensionMismatch("data lengths do not match the model")
    cfg = (cfg or InverseConfig()).for_model(sys.model)
    # fix S from the interval midpoints so every run fits the same objective
    cfg = replace(cfg, weights=tuple(cfg.s_diag(sys, u_meas.mid)), precondition=precondition)
    if tol is not None:
        cfg = replace(cfg, tol=tol)
    if isinstance(warm_start, DetInverseResult):
        if warm_start.grad_norm0 > 0:
            cfg = replace(cfg, grad_ref=warm_start.grad_norm0)
        warm_start = warm_start.alpha
    if warm_start is not None:
        cfg = _with_initial(cfg, warm_start)
    seeds = np.random.SeedSequence(seed).spawn(n_runs)
    jobs = [(sys, delta, u_meas, cfg, distribution, s) for s in seeds]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=min(workers, os.cpu_count() or 1)) as ex:
            results = list(ex.map(_one_run, jobs, chunksize=max(1, n_runs // (4 * workers))))
    else:
        results = [_one_run(j) for j in jobs]
    good = [r for r in results if r is not None]
    if not good:
        raise AllRunsFailed(f"all {n_runs} Monte Carlo runs failed")
    arr = np.array(good)
    return MonteCarloResult(
        n_runs=n_runs,
        alpha=iv.IntervalVector(arr.min(axis=0), arr.max(axis=0)),
        failures=n_runs - len(good),
        seed=seed,
        distribution=distribution,
        samples=arr if keep_samples else None,
    )


def _with_initial(cfg: InverseConfig, initial) -> InverseConfig:
    return replace(cfg, initial=tuple(np.asarray(initial, dtype=float)))


def write_ensemble_csv(ens: MeasurementEnsemble, labels, path: str | Path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow([f"# seed={ens.seed} n_sets={ens.n_sets}"])
        wr.writerow(["label", "exact", "tolerance", "lo", "hi"] + [f"sample{i + 1}" for i in range(ens.n_sets)])
        for k, lab in enumerate(labels):
            wr.writerow([lab, ens.u_exact[k], ens.tolerance[k], ens.u.lo[k], ens.u.hi[k], *ens.samples[:, k]])
    return path


def write_mc_csv(mc: MonteCarloResult, labels, path: str | Path, scale: float = 1.0) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow([f"# seed={mc.seed} runs={mc.n_runs} failures={mc.failures} distribution={mc.distribution}"])
        wr.writerow(["entry", "lo", "hi"])
        for lab, lo, hi in zip(labels, mc.alpha.lo, mc.alpha.hi):
            wr.writerow([lab, lo / scale, hi / scale])
    return path
