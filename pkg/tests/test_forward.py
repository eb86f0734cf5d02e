import numpy as np
import pytest

from ifem_ident.benchmarks import load_table
from ifem_ident.errors import SingularSystem
from ifem_ident.forward import (
    ConstrainedFactor,
    generalized_inverse,
    generate_exact_measurements,
    solve_constrained,
    solve_model,
)
from ifem_ident.model import build_measurement_matrix


class TestConstrainedSolve:
    def test_spring_chain(self):
        K = np.array([[2.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 1.0]])
        K[0, 0] = 1.0
        C = np.array([[1.0, 0.0, 0.0]])
        r = solve_constrained(K, C, np.array([0.0, 0.0, 1.0]))
        np.testing.assert_allclose(r.u, [0.0, 1.0, 2.0], atol=1e-14)
        assert r.lam[0] == pytest.approx(1.0)
        assert r.residual_norm < 1e-12 and r.constraint_norm < 1e-14

    def test_unsupported_is_singular(self, systems):
        s = systems["bar"]
        with pytest.raises(SingularSystem):
            ConstrainedFactor(s.stiffness(np.full(10, 1e11)), np.zeros((0, s.n_dof)))

    def test_generalized_inverse(self, systems):
        s = systems["truss"]
        K = s.stiffness(np.asarray(s.model.true_parameters))
        G = generalized_inverse(K, s.C)
        f = s.load(s.model.delta0)
        np.testing.assert_allclose(G @ f, solve_constrained(K, s.C, f).u, rtol=1e-10, atol=1e-16)


class TestPublishedDisplacements:
    def test_bar_closed_form(self, models):
        m = models["bar"]
        E = np.asarray(m.true_parameters)
        u = solve_model(m, E)[1:]
        np.testing.assert_allclose(u, np.cumsum(100e3 * 0.5 / (0.005 * E)), rtol=1e-12)

    def test_bar_table(self, models):
        t = load_table("table1_bar_measurements.csv")
        m = models["bar"]
        meas = build_measurement_matrix(m) @ solve_model(m, m.true_parameters)
        np.testing.assert_allclose(meas * 1e3, t["exact"], atol=6e-6)

    def test_truss_table(self, models):
        t = load_table("table3_truss_measurements.csv")
        m = models["truss"]
        meas = build_measurement_matrix(m) @ solve_model(m, m.true_parameters)
        np.testing.assert_allclose(meas, t["exact"], rtol=2e-4)

    def test_beam_uniform_modulus(self, models):
        # simply supported beam, uniform load: v(x) = q x (L^3 - 2 L x^2 + x^3) / (24 E I)
        m = models["beam"]
        E, I, L, q = 2e11, 1.125e-4, 2.0, 1e5
        meas = build_measurement_matrix(m) @ solve_model(m, np.full(21, E))
        x = np.array([0.1 * (n - 1) for n in (3, 5, 7, 9, 11, 13, 15, 17, 19)])
        v = -q * x * (L**3 - 2 * L * x**2 + x**3) / (24 * E * I)
        np.testing.assert_allclose(meas, v, rtol=1e-10)

    def test_refinement_converges(self, models):
        m = models["beam"]
        u1 = generate_exact_measurements(m, m.true_parameters, 1)
        u4 = generate_exact_measurements(m, m.true_parameters, 4)
        u8 = generate_exact_measurements(m, m.true_parameters, 8)
        assert np.max(np.abs(u8 - u4)) < np.max(np.abs(u4 - u1))
        np.testing.assert_allclose(u4, u1, rtol=1e-5)

    def test_exact_measurements_positive_alpha(self, models):
        with pytest.raises(ValueError):
            generate_exact_measurements(models["bar"], -np.ones(10))
