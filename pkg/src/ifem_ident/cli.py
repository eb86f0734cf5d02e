"""Command-line driver.

Subcommands: ``forward``, ``synth``, ``invert-det``, ``invert-interval``,
``mc`` and ``bench``.  Model arguments accept a YAML path or the name of a
packaged model (``bar``, ``truss``, ``beam``, ``beam_moments``, ``frame``).
Measurement files are CSV with ``label,lo,hi`` columns in SI units; a
``value`` column may replace ``lo``/``hi`` for point data.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import interval as iv
from .benchmarks import BENCHMARKS, GPA, data_path, read_csv_table, run_benchmark
from .decomposition import assemble_global
from .errors import IdentError
from .forward import generate_exact_measurements, solve_model
from .inverse_det import InverseConfig, invert_deterministic, write_trace_csv
from .inverse_interval import invert_interval, write_interval_report
from .measurements import DISTRIBUTIONS, monte_carlo_inverse, synthesize_measurements, write_ensemble_csv, write_mc_csv
from .model import StructuralModel, build_measurement_matrix, load_model


def resolve_model(ref: str) -> StructuralModel:
    p = Path(ref)
    if p.exists():
        return load_model(p)
    packaged = data_path(ref if ref.endswith(".yaml") else ref.replace("-", "_") + ".yaml")
    if packaged.exists():
        return load_model(packaged)
    raise FileNotFoundError(f"no model file or packaged model named {ref!r}")


def read_measurements(path: str, model: StructuralModel) -> iv.IntervalVector:
    cols = read_csv_table(Path(path))
    if "lo" in cols and "hi" in cols:
        lo = np.array([float(v) for v in cols["lo"]])
        hi = np.array([float(v) for v in cols["hi"]])
    elif "value" in cols:
        lo = hi = np.array([float(v) for v in cols["value"]])
    else:
        raise ValueError(f"{path}: expected lo/hi or value columns")
    if len(lo) != model.n_meas:
        raise ValueError(f"{path}: {len(lo)} rows, model has {model.n_meas} measurements")
    return iv.IntervalVector(lo, hi)


def _parameters(model: StructuralModel, modulus: float | None) -> np.ndarray:
    if modulus is not None:
        return np.full(model.n_params, modulus * GPA)
    if model.true_parameters is None:
        raise ValueError("model has no true parameters; pass --modulus")
    return np.asarray(model.true_parameters, dtype=float)


def _cfg(args) -> InverseConfig:
    kw = {"gamma": args.gamma}
    if args.tol is not None:
        kw["tol"] = args.tol
    return InverseConfig(**kw)


def _write_rows(path: str | None, header, rows) -> None:
    fh = open(path, "w", newline="") if path else sys.stdout
    try:
        wr = csv.writer(fh)
        wr.writerow(header)
        wr.writerows(rows)
    finally:
        if path:
            fh.close()


def cmd_forward(args) -> int:
    model = resolve_model(args.model)
    alpha = _parameters(model, args.modulus)
    if args.refinement > 1:
        meas = generate_exact_measurements(model, alpha, args.refinement)
    else:
        meas = build_measurement_matrix(model) @ solve_model(model, alpha)
    _write_rows(args.out, ["label", "value"], zip(model.measurement_labels, meas))
    return 0


def cmd_synth(args) -> int:
    model = resolve_model(args.model)
    alpha = _parameters(model, args.modulus)
    refinement = args.refinement or int(model.meta.get("data_refinement", 1))
    u_exact = generate_exact_measurements(model, alpha, refinement)
    tol = model.tolerances if args.device_tol is None else np.full(model.n_meas, args.device_tol)
    ens = synthesize_measurements(u_exact, tol, args.sets, args.seed)
    if args.out:
        write_ensemble_csv(ens, model.measurement_labels, args.out)
    else:
        _write_rows(None, ["label", "exact", "lo", "hi"],
                    zip(model.measurement_labels, ens.u_exact, ens.u.lo, ens.u.hi))
    return 0


def cmd_invert_det(args) -> int:
    model = resolve_model(args.model)
    u = read_measurements(args.data, model)
    res = invert_deterministic(model, model.delta0, u.mid, _cfg(args))
    if args.trace:
        write_trace_csv(res, args.trace)
    print(f"# status={res.status} iterations={res.iterations} grad_ratio={res.grad_ratio:.3e}")
    _write_rows(args.out, ["entry", "modulus_gpa"], zip(model.parameter_labels, res.alpha / GPA))
    return 0 if res.converged else 1


def cmd_invert_interval(args) -> int:
    model = resolve_model(args.model)
    u = read_measurements(args.data, model)
    sol = invert_interval(model, model.delta0, u, _cfg(args))
    print(f"# deterministic iterations={sol.det.iterations} interval iterations={sol.iterations}")
    out = args.report or args.out
    if out:
        write_interval_report(sol.alpha, model.parameter_labels, out, GPA)
    else:
        _write_rows(None, ["entry", "lo_gpa", "hi_gpa"],
                    zip(model.parameter_labels, sol.alpha.lo / GPA, sol.alpha.hi / GPA))
    return 0


def cmd_mc(args) -> int:
    model = resolve_model(args.model)
    u = read_measurements(args.data, model)
    sys_ = assemble_global(model)
    mc = monte_carlo_inverse(sys_, iv.IntervalVector(model.delta0), u, args.runs, args.seed, _cfg(args),
                             args.distribution, args.workers)
    print(f"# runs={mc.n_runs} failures={mc.failures}")
    if args.out:
        write_mc_csv(mc, model.parameter_labels, args.out, GPA)
    else:
        _write_rows(None, ["entry", "lo_gpa", "hi_gpa"],
                    zip(model.parameter_labels, mc.alpha.lo / GPA, mc.alpha.hi / GPA))
    return 0


def cmd_bench(args) -> int:
    rep = run_benchmark(
        args.name,
        seed=args.seed,
        gamma=args.gamma,
        runs=args.runs,
        use_published_data=args.use_published_data,
        device_tol=args.device_tol,
        cg_tol=args.tol,
        workers=args.workers,
        theta4=args.theta4,
        tighten=args.tighten,
    )
    print(rep.to_text())
    if args.report:
        rep.write(args.report)
    return 0 if rep.passed else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ifem-ident", description="Interval identification of structural moduli.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, data=True):
        p.add_argument("model", help="model YAML path or packaged model name")
        if data:
            p.add_argument("--data", required=True, help="measurement CSV (label,lo,hi)")
        p.add_argument("--gamma", type=float, default=None, help="regularizer weight")
        p.add_argument("--tol", type=float, default=None, help="CG stopping tolerance")
        p.add_argument("--out", default=None, help="output CSV (default stdout)")

    p = sub.add_parser("forward", help="forward solve, print measured displacements")
    p.add_argument("model")
    p.add_argument("--modulus", type=float, default=None, help="uniform modulus in GPa")
    p.add_argument("--refinement", type=int, default=1)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_forward)

    p = sub.add_parser("synth", help="synthesize interval measurements")
    p.add_argument("model")
    p.add_argument("--modulus", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sets", type=int, default=3)
    p.add_argument("--refinement", type=int, default=None)
    p.add_argument("--device-tol", type=float, default=None, help="override every tolerance (m or rad)")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("invert-det", help="deterministic inversion at the data midpoints")
    common(p)
    p.add_argument("--trace", default=None, help="write the convergence trace CSV")
    p.set_defaults(func=cmd_invert_det)

    p = sub.add_parser("invert-interval", help="two-step interval inversion")
    common(p)
    p.add_argument("--report", default=None, help="write the interval report CSV")
    p.set_defaults(func=cmd_invert_interval)

    p = sub.add_parser("mc", help="Monte Carlo inversion over the data box")
    common(p)
    p.add_argument("--runs", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--distribution", choices=DISTRIBUTIONS, default="uniform")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_mc)

    p = sub.add_parser("bench", help="run a registered benchmark")
    p.add_argument("name", choices=sorted(BENCHMARKS))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--tol", type=float, default=None, help="CG stopping tolerance")
    p.add_argument("--device-tol", type=float, default=None, help="override every measurement tolerance")
    p.add_argument("--runs", type=int, default=200, help="Monte Carlo runs (0 disables)")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--use-paper-data", dest="use_published_data", action="store_true", help="use published measurement bounds")
    p.add_argument("--tighten", action="store_true", help="frame: use the 0.2%% v4, v7 intervals")
    p.add_argument("--theta4", action="store_true", help="frame: add the published theta4 interval")
    p.add_argument("--report", default=None, help="directory for report text and CSV")
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (IdentError, ValueError, FileNotFoundError, KeyError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
