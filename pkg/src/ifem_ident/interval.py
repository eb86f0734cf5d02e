"""Closed real intervals with outward rounding.

Every arithmetic primitive returns bounds that enclose the exact real result.
Rounding direction is decided with error-free transformations: ``two_sum``
(Knuth) for addition and Dekker's ``two_prod`` for multiplication give the
exact rounding error of the round-to-nearest result, and a bound is moved one
representable float outward exactly when that error points outward.  Where the
error term cannot be trusted (overflow-prone splitting, underflow) the bound is
nudged unconditionally, which is still sound.

Scalars are :class:`Interval`; vectors and matrices keep their bounds in two
float64 arrays so that matrix-vector work stays vectorized.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    BoundsInverted,
    DimensionMismatch,
    DivisorContainsZero,
    EmptyIntersection,
    NegativeRadius,
    NonFinite,
)

__all__ = [
    "Interval",
    "IntervalVector",
    "IntervalMatrix",
    "make",
    "from_mid_rad",
    "hull",
    "intersect",
    "encloses",
    "contains",
    "scalar_matvec",
    "hadamard",
]

_SPLITTER = 134217729.0  # 2**27 + 1
_SPLIT_LIMIT = 2.0**995
_TINY = 2.0**-968
_NEG_INF = -np.inf
_POS_INF = np.inf


# ---------------------------------------------------------------------------
# directed-rounding primitives (work on floats and on ndarrays alike)
# ---------------------------------------------------------------------------


def _two_sum(a, b):
    s = a + b
    bb = s - a
    err = (a - (s - bb)) + (b - bb)
    return s, err


def _split(a):
    t = _SPLITTER * a
    hi = t - (t - a)
    return hi, a - hi


def _two_prod(a, b):
    p = a * b
    ah, al = _split(a)
    bh, bl = _split(b)
    err = ((ah * bh - p) + ah * bl + al * bh) + al * bl
    unsafe = (
        (np.abs(a) > _SPLIT_LIMIT)
        | (np.abs(b) > _SPLIT_LIMIT)
        | ((np.abs(p) < _TINY) & (a != 0) & (b != 0))
    )
    err = np.where(unsafe, np.nan, err)
    return p, err


def _round_down(x, err):
    step = (err < 0) | np.isnan(err)
    return np.where(step & np.isfinite(x), np.nextafter(x, _NEG_INF), x)


def _round_up(x, err):
    step = (err > 0) | np.isnan(err)
    return np.where(step & np.isfinite(x), np.nextafter(x, _POS_INF), x)


def add_down(a, b):
    return _round_down(*_two_sum(a, b))


def add_up(a, b):
    return _round_up(*_two_sum(a, b))


def mul_down(a, b):
    return _round_down(*_two_prod(a, b))


def mul_up(a, b):
    return _round_up(*_two_prod(a, b))


def _interval_mul(alo, ahi, blo, bhi):
    lo = np.minimum(
        np.minimum(mul_down(alo, blo), mul_down(alo, bhi)),
        np.minimum(mul_down(ahi, blo), mul_down(ahi, bhi)),
    )
    hi = np.maximum(
        np.maximum(mul_up(alo, blo), mul_up(alo, bhi)),
        np.maximum(mul_up(ahi, blo), mul_up(ahi, bhi)),
    )
    return lo, hi


def _scaled(m, lo, hi):
    """Bounds of ``m * [lo, hi]`` for an exact scalar (array) ``m``."""
    a = mul_down(m, lo)
    b = mul_down(m, hi)
    c = mul_up(m, lo)
    d = mul_up(m, hi)
    return np.minimum(a, b), np.maximum(c, d)


def _check_bounds(lo, hi):
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise NonFinite("interval bounds must be finite")
    if np.any(lo > hi):
        raise BoundsInverted("lower bound exceeds upper bound")


# ---------------------------------------------------------------------------
# scalar interval
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Interval:
    """Closed interval ``[lo, hi]`` with ``lo <= hi``."""

    lo: float
    hi: float

    def __post_init__(self):
        lo, hi = float(self.lo), float(self.hi)
        if not (np.isfinite(lo) and np.isfinite(hi)):
            raise NonFinite(f"non-finite bound in [{lo}, {hi}]")
        if lo > hi:
            raise BoundsInverted(f"lower bound {lo} exceeds upper bound {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def point(cls, x: float) -> "Interval":
        return cls(x, x)

    @property
    def mid(self) -> float:
        return 0.5 * self.lo + 0.5 * self.hi

    @property
    def rad(self) -> float:
        return 0.5 * (self.hi - self.lo)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def is_degenerate(self) -> bool:
        return self.lo == self.hi

    def __add__(self, other):
        o = _as_interval(other)
        return Interval(float(add_down(self.lo, o.lo)), float(add_up(self.hi, o.hi)))

    __radd__ = __add__

    def __sub__(self, other):
        o = _as_interval(other)
        return Interval(float(add_down(self.lo, -o.hi)), float(add_up(self.hi, -o.lo)))

    def __rsub__(self, other):
        return _as_interval(other) - self

    def __neg__(self):
        return Interval(-self.hi, -self.lo)

    def __mul__(self, other):
        o = _as_interval(other)
        lo, hi = _interval_mul(self.lo, self.hi, o.lo, o.hi)
        return Interval(float(lo), float(hi))

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = _as_interval(other)
        if o.lo <= 0.0 <= o.hi:
            raise DivisorContainsZero(f"divisor {o} contains zero")
        q = np.array([self.lo / o.lo, self.lo / o.hi, self.hi / o.lo, self.hi / o.hi])
        return Interval(float(np.nextafter(q.min(), _NEG_INF)), float(np.nextafter(q.max(), _POS_INF)))

    def __rtruediv__(self, other):
        return _as_interval(other) / self

    def __contains__(self, x) -> bool:
        if isinstance(x, Interval):
            return self.encloses(x)
        return self.lo <= x <= self.hi

    def encloses(self, other) -> bool:
        o = _as_interval(other)
        return self.lo <= o.lo and o.hi <= self.hi

    def hull(self, other) -> "Interval":
        o = _as_interval(other)
        return Interval(min(self.lo, o.lo), max(self.hi, o.hi))

    def intersect(self, other) -> "Interval":
        o = _as_interval(other)
        lo, hi = max(self.lo, o.lo), min(self.hi, o.hi)
        if lo > hi:
            raise EmptyIntersection(f"{self} and {o} are disjoint")
        return Interval(lo, hi)

    def to_list(self) -> list[float]:
        return [self.lo, self.hi]

    def __repr__(self):
        return f"[{self.lo!r}, {self.hi!r}]"


def _as_interval(x) -> Interval:
    if isinstance(x, Interval):
        return x
    return Interval(x, x)


def make(lo: float, hi: float) -> Interval:
    return Interval(lo, hi)


def from_mid_rad(mid: float, rad: float) -> Interval:
    """Interval centred at ``mid`` whose radius is at least ``rad``."""
    if rad < 0:
        raise NegativeRadius(f"radius must be non-negative, got {rad}")
    return Interval(float(add_down(mid, -rad)), float(add_up(mid, rad)))


# ---------------------------------------------------------------------------
# vectors and matrices
# ---------------------------------------------------------------------------


class _IntervalArray:
    ndim: int = 0

    __slots__ = ("lo", "hi")
    # let ndarray op IntervalVector dispatch to our reflected operators
    __array_ufunc__ = None

    def __init__(self, lo, hi=None):
        lo = np.array(lo, dtype=float)
        hi = lo.copy() if hi is None else np.array(hi, dtype=float)
        if lo.shape != hi.shape:
            raise DimensionMismatch(f"bound shapes differ: {lo.shape} vs {hi.shape}")
        if lo.ndim != self.ndim:
            raise DimensionMismatch(f"{type(self).__name__} needs {self.ndim}-d bounds, got {lo.ndim}-d")
        _check_bounds(lo, hi)
        lo.flags.writeable = False
        hi.flags.writeable = False
        self.lo = lo
        self.hi = hi

    @classmethod
    def _raw(cls, lo, hi):
        # Internal constructor for results already known to be valid.
        obj = cls.__new__(cls)
        _check_bounds(lo, hi)
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        lo.flags.writeable = False
        hi.flags.writeable = False
        obj.lo, obj.hi = lo, hi
        return obj

    @classmethod
    def from_mid_rad(cls, mid, rad):
        mid = np.asarray(mid, dtype=float)
        rad = np.broadcast_to(np.asarray(rad, dtype=float), mid.shape)
        if np.any(rad < 0):
            raise NegativeRadius("radius must be non-negative")
        return cls(add_down(mid, -rad), add_up(mid, rad))

    @classmethod
    def zeros(cls, shape):
        z = np.zeros(shape)
        return cls(z, z)

    @property
    def shape(self):
        return self.lo.shape

    @property
    def mid(self) -> np.ndarray:
        return 0.5 * self.lo + 0.5 * self.hi

    @property
    def rad(self) -> np.ndarray:
        return 0.5 * (self.hi - self.lo)

    @property
    def width(self) -> np.ndarray:
        return self.hi - self.lo

    def __len__(self):
        return self.lo.shape[0]

    def _coerce(self, other):
        if isinstance(other, _IntervalArray):
            if other.shape != self.shape:
                raise DimensionMismatch(f"shapes differ: {self.shape} vs {other.shape}")
            olo, ohi = other.lo, other.hi
        elif isinstance(other, Interval):
            olo, ohi = np.float64(other.lo), np.float64(other.hi)
        else:
            olo = ohi = np.asarray(other, dtype=float)
        try:
            np.broadcast_shapes(self.shape, np.shape(olo))
        except ValueError as exc:
            raise DimensionMismatch(str(exc)) from None
        return olo, ohi

    def __add__(self, other):
        olo, ohi = self._coerce(other)
        return type(self)._raw(add_down(self.lo, olo), add_up(self.hi, ohi))

    __radd__ = __add__

    def __sub__(self, other):
        olo, ohi = self._coerce(other)
        return type(self)._raw(add_down(self.lo, -ohi), add_up(self.hi, -olo))

    def __rsub__(self, other):
        olo, ohi = self._coerce(other)
        return type(self)._raw(add_down(olo, -self.hi), add_up(ohi, -self.lo))

    def __neg__(self):
        return type(self)._raw(-self.hi, -self.lo)

    def __mul__(self, other):
        """Element-wise product (broadcasting like numpy)."""
        olo, ohi = self._coerce(other)
        lo, hi = _interval_mul(self.lo, self.hi, olo, ohi)
        return type(self)._raw(lo, hi)

    __rmul__ = __mul__

    def hull(self, other):
        olo, ohi = self._coerce(other)
        return type(self)._raw(np.minimum(self.lo, olo), np.maximum(self.hi, ohi))

    def intersect(self, other):
        olo, ohi = self._coerce(other)
        lo, hi = np.maximum(self.lo, olo), np.minimum(self.hi, ohi)
        if np.any(lo > hi):
            raise EmptyIntersection("intersection is empty in at least one entry")
        return type(self)._raw(lo, hi)

    def encloses(self, other) -> bool:
        olo, ohi = self._coerce(other)
        return bool(np.all(self.lo <= olo) and np.all(ohi <= self.hi))

    def contains(self, points) -> np.ndarray:
        """Entry-wise membership test for a point array (broadcasts)."""
        p = np.asarray(points, dtype=float)
        return (self.lo <= p) & (p <= self.hi)

    def to_list(self):
        return np.stack([self.lo, self.hi], axis=-1).tolist()

    def __eq__(self, other):
        if not isinstance(other, _IntervalArray):
            return NotImplemented
        return np.array_equal(self.lo, other.lo) and np.array_equal(self.hi, other.hi)

    __hash__ = None


class IntervalVector(_IntervalArray):
    """Ordered sequence of intervals stored as two bound arrays."""

    ndim = 1

    def __getitem__(self, idx):
        if isinstance(idx, (int, np.integer)):
            return Interval(self.lo[idx], self.hi[idx])
        return IntervalVector._raw(self.lo[idx], self.hi[idx])

    def __iter__(self):
        for lo, hi in zip(self.lo, self.hi):
            yield Interval(lo, hi)

    @classmethod
    def from_intervals(cls, items: Iterable[Interval]) -> "IntervalVector":
        items = list(items)
        return cls([i.lo for i in items], [i.hi for i in items])

    @classmethod
    def from_list(cls, pairs: Sequence[Sequence[float]]) -> "IntervalVector":
        arr = np.asarray(pairs, dtype=float).reshape(-1, 2)
        return cls(arr[:, 0], arr[:, 1])

    @staticmethod
    def concat(parts: Sequence["IntervalVector"]) -> "IntervalVector":
        return IntervalVector._raw(
            np.concatenate([p.lo for p in parts]), np.concatenate([p.hi for p in parts])
        )

    def __repr__(self):
        body = ", ".join(f"[{lo:.6g}, {hi:.6g}]" for lo, hi in zip(self.lo, self.hi))
        return f"IntervalVector({body})"


class IntervalMatrix(_IntervalArray):
    """Dense ``m x n`` grid of intervals."""

    ndim = 2

    def __getitem__(self, idx):
        lo, hi = self.lo[idx], self.hi[idx]
        if np.ndim(lo) == 0:
            return Interval(lo, hi)
        if np.ndim(lo) == 1:
            return IntervalVector._raw(lo, hi)
        return IntervalMatrix._raw(lo, hi)

    @property
    def T(self):
        return IntervalMatrix._raw(self.lo.T, self.hi.T)

    def is_symmetric(self) -> bool:
        return np.array_equal(self.lo, self.lo.T) and np.array_equal(self.hi, self.hi.T)

    def __repr__(self):
        return f"IntervalMatrix(shape={self.shape})"


# ---------------------------------------------------------------------------
# module-level operations
# ---------------------------------------------------------------------------


def hull(a, b):
    return a.hull(b)


def intersect(a, b):
    return a.intersect(b)


def encloses(a, b) -> bool:
    return a.encloses(b)


def contains(a, x):
    if isinstance(a, Interval):
        return a.lo <= x <= a.hi
    return a.contains(x)


def sum_down(terms: np.ndarray, axis: int = 0) -> np.ndarray:
    """Lower bound of the exact sum of ``terms`` along ``axis``."""
    terms = np.moveaxis(np.asarray(terms, dtype=float), axis, 0)
    if terms.shape[0] == 0:
        return np.zeros(terms.shape[1:])
    acc = terms[0]
    for t in terms[1:]:
        acc = add_down(acc, t)
    return acc


def sum_up(terms: np.ndarray, axis: int = 0) -> np.ndarray:
    """Upper bound of the exact sum of ``terms`` along ``axis``."""
    terms = np.moveaxis(np.asarray(terms, dtype=float), axis, 0)
    if terms.shape[0] == 0:
        return np.zeros(terms.shape[1:])
    acc = terms[0]
    for t in terms[1:]:
        acc = add_up(acc, t)
    return acc


def scalar_matvec(m, v: IntervalVector) -> IntervalVector:
    """Enclosure of ``{m @ x : x in v}`` for an exact scalar matrix ``m``.

    Each row is an interval dot product accumulated column by column with
    directed rounding, so the bound holds for every row simultaneously.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[1] != len(v):
        raise DimensionMismatch(f"cannot multiply {m.shape} matrix by length-{len(v)} vector")
    rows = m.shape[0]
    acc_lo = np.zeros(rows)
    acc_hi = np.zeros(rows)
    for j in range(m.shape[1]):
        lo_j, hi_j = v.lo[j], v.hi[j]
        if lo_j == 0.0 and hi_j == 0.0:
            continue
        col = m[:, j]
        t_lo, t_hi = _scaled(col, lo_j, hi_j)
        acc_lo = add_down(acc_lo, t_lo)
        acc_hi = add_up(acc_hi, t_hi)
    return IntervalVector._raw(acc_lo, acc_hi)


def hadamard(a: IntervalVector, b: IntervalVector) -> IntervalVector:
    """Element-by-element interval product."""
    if len(a) != len(b):
        raise DimensionMismatch(f"lengths differ: {len(a)} vs {len(b)}")
    lo, hi = _interval_mul(a.lo, a.hi, b.lo, b.hi)
    return IntervalVector._raw(lo, hi)


def divide(a: IntervalVector, b: IntervalVector) -> IntervalVector:
    """Element-wise quotient; every divisor entry must exclude zero."""
    if len(a) != len(b):
        raise DimensionMismatch(f"lengths differ: {len(a)} vs {len(b)}")
    if np.any((b.lo <= 0.0) & (b.hi >= 0.0)):
        raise DivisorContainsZero("a divisor interval contains zero")
    q = np.stack([a.lo / b.lo, a.lo / b.hi, a.hi / b.lo, a.hi / b.hi])
    return IntervalVector._raw(
        np.nextafter(q.min(axis=0), _NEG_INF), np.nextafter(q.max(axis=0), _POS_INF)
    )
