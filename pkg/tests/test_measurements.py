import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ifem_ident import interval as iv
from ifem_ident.benchmarks import published_measurements
from ifem_ident.errors import AllRunsFailed, DimensionMismatch
from ifem_ident.inverse_det import InverseConfig
from ifem_ident.measurements import (
    DISTRIBUTIONS,
    monte_carlo_inverse,
    sample_in_box,
    synthesize_measurements,
    write_ensemble_csv,
    write_mc_csv,
)


class TestSynthesis:
    @given(st.integers(0, 2**31 - 1), st.integers(1, 6))
    @settings(max_examples=200, deadline=None)
    def test_contains_exact(self, seed, n_sets):
        rng = np.random.default_rng(seed)
        u = rng.standard_normal(12) * 1e-3
        tol = rng.uniform(1e-7, 1e-5, 12)
        ens = synthesize_measurements(u, tol, n_sets, seed)
        assert np.all(ens.u.contains(u))
        # each bound moves outward by at most one float
        assert np.all(ens.u.width <= 2 * tol + 4 * np.spacing(np.abs(u) + tol))

    def test_single_set_width(self):
        ens = synthesize_measurements(np.ones(4), 0.1, 1, 0)
        np.testing.assert_allclose(ens.u.width, 0.2)

    def test_more_sets_narrower(self):
        u = np.zeros(2000)
        w1 = synthesize_measurements(u, 1.0, 1, 1).u.width.mean()
        w3 = synthesize_measurements(u, 1.0, 3, 1).u.width.mean()
        assert w3 < w1

    def test_deterministic_for_seed(self):
        a = synthesize_measurements(np.ones(5), 0.01, 3, 42)
        b = synthesize_measurements(np.ones(5), 0.01, 3, 42)
        assert a.u == b.u

    def test_invalid(self):
        with pytest.raises(ValueError):
            synthesize_measurements(np.ones(3), 0.0)
        with pytest.raises(ValueError):
            synthesize_measurements(np.ones(3), 0.1, 0)

    def test_csv(self, tmp_path):
        ens = synthesize_measurements(np.array([1.0, 2.0]), 0.01, 3, 0)
        p = write_ensemble_csv(ens, ["a", "b"], tmp_path / "e.csv")
        lines = p.read_text().splitlines()
        assert lines[1].startswith("label,exact,tolerance,lo,hi,sample1")
        assert len(lines) == 4


class TestSampling:
    @pytest.mark.parametrize("dist", DISTRIBUTIONS)
    def test_inside_box(self, dist):
        rng = np.random.default_rng(0)
        box = iv.IntervalVector(np.full(5000, -2.0), np.full(5000, 3.0))
        x = sample_in_box(box, rng, dist)
        assert np.all(box.contains(x))

    def test_shapes_of_distributions(self):
        box = iv.IntervalVector(np.zeros(20000), np.ones(20000))
        mean = {d: sample_in_box(box, np.random.default_rng(1), d).mean() for d in DISTRIBUTIONS}
        assert mean["uniform"] == pytest.approx(0.5, abs=0.01)
        assert mean["triangular"] == pytest.approx(0.5, abs=0.01)
        assert mean["exponential"] < 0.4 and mean["rayleigh"] < 0.5

    def test_unknown(self):
        with pytest.raises(ValueError):
            sample_in_box(iv.IntervalVector([0.0], [1.0]), np.random.default_rng(0), "cauchy")


class TestMonteCarlo:
    def test_bar_reproducible_and_inside(self, models, systems):
        m = models["bar"]
        u = published_measurements("bar")
        a = monte_carlo_inverse(systems["bar"], m.delta0, u, 20, seed=3, keep_samples=True)
        b = monte_carlo_inverse(systems["bar"], m.delta0, u, 20, seed=3)
        assert a.alpha == b.alpha and a.failures == 0
        assert a.samples.shape == (20, 10)
        np.testing.assert_array_equal(a.alpha.lo, a.samples.min(axis=0))

    def test_workers_do_not_change_result(self, models, systems):
        m = models["bar"]
        u = published_measurements("bar")
        a = monte_carlo_inverse(systems["bar"], m.delta0, u, 8, seed=5)
        b = monte_carlo_inverse(systems["bar"], m.delta0, u, 8, seed=5, workers=2)
        assert a.alpha == b.alpha

    def test_all_failed(self, models, systems):
        m = models["truss"]
        u = published_measurements("truss")
        with pytest.raises(AllRunsFailed):
            monte_carlo_inverse(systems["truss"], m.delta0, u, 3, cfg=InverseConfig(max_iters=2), precondition=False)

    def test_bad_arguments(self, models, systems):
        m = models["bar"]
        u = published_measurements("bar")
        with pytest.raises(ValueError):
            monte_carlo_inverse(systems["bar"], m.delta0, u, 0)
        with pytest.raises(ValueError):
            monte_carlo_inverse(systems["bar"], m.delta0, u, 2, distribution="cauchy")
        with pytest.raises(DimensionMismatch):
            monte_carlo_inverse(systems["bar"], m.delta0, u[:3], 2)

    def test_csv(self, models, systems, tmp_path):
        m = models["bar"]
        mc = monte_carlo_inverse(systems["bar"], m.delta0, published_measurements("bar"), 3)
        p = write_mc_csv(mc, m.parameter_labels, tmp_path / "mc.csv", 1e9)
        assert p.read_text().splitlines()[1] == "entry,lo,hi"
