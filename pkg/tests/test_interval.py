from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ifem_ident import interval as iv
from ifem_ident.errors import (
    BoundsInverted,
    DimensionMismatch,
    DivisorContainsZero,
    EmptyIntersection,
    NegativeRadius,
    NonFinite,
)

finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False)


@st.composite
def intervals(draw):
    a, b = draw(finite), draw(finite)
    return iv.Interval(min(a, b), max(a, b))


def F(x):
    return Fraction(float(x))


class TestConstruction:
    def test_point_and_props(self):
        x = iv.Interval(1.0, 3.0)
        assert x.mid == 2.0 and x.rad == 1.0 and x.width == 2.0
        assert iv.Interval.point(2.5).is_degenerate()

    def test_inverted_bounds(self):
        with pytest.raises(BoundsInverted):
            iv.Interval(2.0, 1.0)

    def test_non_finite(self):
        with pytest.raises(NonFinite):
            iv.Interval(0.0, np.inf)
        with pytest.raises(NonFinite):
            iv.IntervalVector([0.0, np.nan], [1.0, 1.0])

    def test_negative_radius(self):
        with pytest.raises(NegativeRadius):
            iv.from_mid_rad(0.0, -1.0)

    def test_from_mid_rad_encloses(self):
        x = iv.from_mid_rad(0.1, 0.2)
        assert x.lo <= -0.1 <= 0.3 <= x.hi

    def test_vector_shapes(self):
        with pytest.raises(DimensionMismatch):
            iv.IntervalVector([0.0, 1.0], [1.0])
        with pytest.raises(DimensionMismatch):
            iv.IntervalVector([0.0]) + iv.IntervalVector([0.0, 1.0])

    def test_bounds_are_readonly(self):
        v = iv.IntervalVector([0.0], [1.0])
        with pytest.raises(ValueError):
            v.lo[0] = 5.0


class TestScalarOps:
    def test_known_values(self):
        a, b = iv.Interval(1.0, 2.0), iv.Interval(-3.0, 4.0)
        s = a + b
        assert s.lo <= -2.0 and s.hi >= 6.0
        p = a * b
        assert p.lo <= -6.0 and p.hi >= 8.0
        q = a / iv.Interval(2.0, 4.0)
        assert q.lo <= 0.25 and q.hi >= 1.0

    def test_division_by_zero_interval(self):
        with pytest.raises(DivisorContainsZero):
            iv.Interval(1.0, 2.0) / iv.Interval(-1.0, 1.0)
        with pytest.raises(DivisorContainsZero):
            iv.Interval(1.0, 2.0) / iv.Interval(0.0, 1.0)

    def test_outward_rounding_of_inexact_sum(self):
        s = iv.Interval.point(0.1) + iv.Interval.point(0.2)
        assert F(s.lo) <= F(0.1) + F(0.2) <= F(s.hi)
        assert s.lo < s.hi

    def test_exact_sum_is_not_widened(self):
        s = iv.Interval.point(0.5) + iv.Interval.point(0.25)
        assert s.lo == s.hi == 0.75

    def test_hull_intersect(self):
        a, b = iv.Interval(0.0, 1.0), iv.Interval(2.0, 3.0)
        assert a.hull(b) == iv.Interval(0.0, 3.0)
        with pytest.raises(EmptyIntersection):
            a.intersect(b)
        assert iv.Interval(0.0, 2.5).intersect(b) == iv.Interval(2.0, 2.5)

    @given(intervals(), intervals())
    def test_hull_encloses_both(self, a, b):
        h = a.hull(b)
        assert h.encloses(a) and h.encloses(b)

    @given(intervals(), intervals(), st.floats(0, 1), st.floats(0, 1))
    @settings(max_examples=300)
    def test_mul_contains_products(self, a, b, s, t):
        x = a.lo + s * (a.hi - a.lo)
        y = b.lo + t * (b.hi - b.lo)
        x, y = min(max(x, a.lo), a.hi), min(max(y, b.lo), b.hi)
        p = a * b
        assert F(p.lo) <= F(x) * F(y) <= F(p.hi)


def _random_boxes(rng, n, scale=1e3):
    lo = scale * rng.standard_normal(n)
    hi = lo + scale * rng.random(n) * 10.0 ** rng.integers(-8, 1, n)
    return lo, hi


def _random_points(rng, lo, hi):
    p = lo + rng.random(lo.shape) * (hi - lo)
    return np.clip(p, lo, hi)


class TestContainmentSoundness:
    """10^4 randomized checks per operation against exact rational arithmetic."""

    N = 10_000

    def _check(self, lo, hi, exact):
        for l, h, e in zip(lo, hi, exact):
            assert F(l) <= e <= F(h)

    @pytest.mark.parametrize("op", ["add", "sub", "mul"])
    def test_binary(self, op):
        rng = np.random.default_rng({"add": 1, "sub": 2, "mul": 3}[op])
        alo, ahi = _random_boxes(rng, self.N)
        blo, bhi = _random_boxes(rng, self.N)
        a, b = iv.IntervalVector(alo, ahi), iv.IntervalVector(blo, bhi)
        x, y = _random_points(rng, alo, ahi), _random_points(rng, blo, bhi)
        r = {"add": a + b, "sub": a - b, "mul": a * b}[op]
        fn = {"add": lambda p, q: p + q, "sub": lambda p, q: p - q, "mul": lambda p, q: p * q}[op]
        self._check(r.lo, r.hi, [fn(F(p), F(q)) for p, q in zip(x, y)])
        # the endpoint combinations are the extreme cases
        for p, q in ((alo, blo), (ahi, bhi), (alo, bhi), (ahi, blo)):
            self._check(r.lo, r.hi, [fn(F(s), F(t)) for s, t in zip(p, q)])

    def test_divide(self):
        rng = np.random.default_rng(4)
        alo, ahi = _random_boxes(rng, self.N)
        blo = rng.uniform(0.1, 100.0, self.N) * rng.choice([-1.0, 1.0], self.N)
        bhi = blo + np.abs(blo) * rng.random(self.N) * 0.5
        neg = blo < 0
        bhi[neg] = blo[neg] + np.abs(blo[neg]) * rng.random(neg.sum()) * 0.5
        r = iv.divide(iv.IntervalVector(alo, ahi), iv.IntervalVector(blo, bhi))
        x, y = _random_points(rng, alo, ahi), _random_points(rng, blo, bhi)
        self._check(r.lo, r.hi, [F(p) / F(q) for p, q in zip(x, y)])
        self._check(r.lo, r.hi, [F(p) / F(q) for p, q in zip(ahi, blo)])

    def test_scalar_matvec(self):
        rng = np.random.default_rng(5)
        n = 8
        m = rng.standard_normal((self.N // n, n)) * 10.0 ** rng.integers(-3, 4, (self.N // n, n))
        lo, hi = _random_boxes(rng, n)
        v = iv.IntervalVector(lo, hi)
        r = iv.scalar_matvec(m, v)
        for _ in range(3):
            x = _random_points(rng, lo, hi)
            exact = [sum(F(mij) * F(xj) for mij, xj in zip(row, x)) for row in m]
            self._check(r.lo, r.hi, exact)

    def test_hadamard(self):
        rng = np.random.default_rng(6)
        alo, ahi = _random_boxes(rng, self.N)
        blo, bhi = _random_boxes(rng, self.N)
        r = iv.hadamard(iv.IntervalVector(alo, ahi), iv.IntervalVector(blo, bhi))
        x, y = _random_points(rng, alo, ahi), _random_points(rng, blo, bhi)
        self._check(r.lo, r.hi, [F(p) * F(q) for p, q in zip(x, y)])

    def test_directed_sums(self):
        rng = np.random.default_rng(7)
        terms = rng.standard_normal((20, self.N // 20)) * 10.0 ** rng.integers(-10, 10, (20, self.N // 20))
        lo, hi = iv.sum_down(terms), iv.sum_up(terms)
        exact = [sum(F(t) for t in col) for col in terms.T]
        self._check(lo, hi, exact)

    def test_from_mid_rad(self):
        rng = np.random.default_rng(8)
        mid = rng.standard_normal(self.N) * 1e3
        rad = rng.random(self.N) * 1e-3
        v = iv.IntervalVector.from_mid_rad(mid, rad)
        self._check(v.lo, v.hi, [F(m) - F(r) for m, r in zip(mid, rad)])
        self._check(v.lo, v.hi, [F(m) + F(r) for m, r in zip(mid, rad)])


class TestVectorOps:
    def test_ndarray_minus_vector(self):
        v = iv.IntervalVector([1.0, 2.0], [2.0, 3.0])
        r = np.array([10.0, 10.0]) - v
        assert isinstance(r, iv.IntervalVector)
        assert np.all(r.lo <= [8.0, 7.0]) and np.all(r.hi >= [9.0, 8.0])

    def test_slicing_and_concat(self):
        v = iv.IntervalVector([0.0, 1.0, 2.0], [1.0, 2.0, 3.0])
        assert isinstance(v[1:], iv.IntervalVector) and len(v[1:]) == 2
        assert v[0] == iv.Interval(0.0, 1.0)
        assert iv.IntervalVector.concat([v[:1], v[1:]]) == v

    def test_contains_and_encloses(self):
        v = iv.IntervalVector([0.0, 1.0], [1.0, 2.0])
        assert v.contains([0.5, 3.0]).tolist() == [True, False]
        assert v.encloses(iv.IntervalVector([0.2, 1.2], [0.8, 1.8]))
        assert not v.encloses(iv.IntervalVector([0.2, 0.5], [0.8, 1.8]))

    def test_divide_zero(self):
        with pytest.raises(DivisorContainsZero):
            iv.divide(iv.IntervalVector([1.0]), iv.IntervalVector([-1.0], [1.0]))

    def test_matvec_dimension(self):
        with pytest.raises(DimensionMismatch):
            iv.scalar_matvec(np.ones((2, 3)), iv.IntervalVector(np.zeros(2)))

    def test_matrix_transpose(self):
        m = iv.IntervalMatrix(np.array([[0.0, 1.0], [2.0, 3.0]]), np.array([[1.0, 2.0], [3.0, 4.0]]))
        assert m.T[0, 1] == iv.Interval(2.0, 3.0)
        assert not m.is_symmetric()

    @given(st.lists(st.tuples(finite, finite), min_size=1, max_size=6))
    def test_hull_is_idempotent(self, pairs):
        lo = np.array([min(p) for p in pairs])
        hi = np.array([max(p) for p in pairs])
        v = iv.IntervalVector(lo, hi)
        assert v.hull(v) == v
        assert v.intersect(v) == v
