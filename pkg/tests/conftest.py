import numpy as np
import pytest

from ifem_ident import interval as iv
from ifem_ident.benchmarks import BENCHMARKS, data_path
from ifem_ident.decomposition import assemble_global
from ifem_ident.model import load_model

MODEL_FILES = ("bar.yaml", "truss.yaml", "beam.yaml", "frame.yaml")


@pytest.fixture(scope="session")
def models():
    return {name.split(".")[0]: load_model(data_path(name)) for name in MODEL_FILES + ("beam_moments.yaml",)}


@pytest.fixture(scope="session")
def systems(models):
    return {k: assemble_global(m) for k, m in models.items()}


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_alpha(model, rng, spread=0.3):
    base = np.asarray(model.true_parameters)
    return base * (1.0 + spread * (rng.random(len(base)) - 0.5))


def point_box(x):
    return iv.IntervalVector(np.asarray(x, dtype=float))


# acceptance verdicts: criterion number -> list of (label, passed, detail)
ACCEPTANCE: dict[int, list[tuple[str, bool, str]]] = {}


def record(criterion: int, label: str, passed: bool, detail: str = "") -> bool:
    ACCEPTANCE.setdefault(criterion, []).append((label, bool(passed), detail))
    print(f"criterion {criterion} [{label}]: {'PASS' if passed else 'FAIL'} {detail}".rstrip())
    return bool(passed)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        entries = ACCEPTANCE[n]
        ok = all(p for _, p, _ in entries)
        failed = [lab for lab, p, _ in entries if not p]
        tr.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}" + (f"  (failed: {', '.join(failed)})" if failed else ""))
