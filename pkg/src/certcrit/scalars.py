"""Scalar kinds for expression evaluation: intervals and dual numbers.

Interval arithmetic is outward-rounded by one ulp after every binary64
operation (instead of switching rounding modes), so enclosures are valid and
the implementation is portable and thread-safe.  Complex intervals are
rectangles: independent real and imaginary intervals.
"""

from __future__ import annotations

import math
from fractions import Fraction

from .expr import SingularEvaluationError

__all__ = ["Interval", "ComplexInterval", "Dual", "Dual2", "interval_hull"]

_INF = math.inf


def _down(x: float) -> float:
    return math.nextafter(x, -_INF)


def _up(x: float) -> float:
    return math.nextafter(x, _INF)


def interval_hull(value) -> "Interval":
    """Tight enclosure of an exact rational (or float) in binary64."""
    if isinstance(value, Interval):
        return value
    if isinstance(value, Fraction):
        f = float(value)
        if math.isfinite(f) and Fraction(f) == value:
            return Interval(f, f)
        return Interval(_down(f), _up(f))
    f = float(value)
    return Interval(f, f)


class Interval:
    """Closed real interval [lo, hi] with outward-rounded arithmetic."""

    __slots__ = ("lo", "hi")

    def __init__(self, lo: float, hi: float):
        if not lo <= hi:
            raise ValueError(f"invalid interval [{lo}, {hi}]")
        self.lo = lo
        self.hi = hi

    def __repr__(self):
        return f"[{self.lo!r}, {self.hi!r}]"

    def __contains__(self, x) -> bool:
        if isinstance(x, Interval):
            return self.lo <= x.lo and x.hi <= self.hi
        return self.lo <= x <= self.hi

    def strictly_contains(self, other: "Interval") -> bool:
        return self.lo < other.lo and other.hi < self.hi

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def contains_zero(self) -> bool:
        return self.lo <= 0.0 <= self.hi

    def _other(self, x):
        if isinstance(x, Interval):
            return x
        if isinstance(x, (int, float, Fraction)):
            return interval_hull(x)
        return NotImplemented

    def __add__(self, other):
        o = self._other(other)
        if o is NotImplemented:
            return o
        return Interval(_down(self.lo + o.lo), _up(self.hi + o.hi))

    __radd__ = __add__

    def __neg__(self):
        return Interval(-self.hi, -self.lo)

    def __sub__(self, other):
        o = self._other(other)
        if o is NotImplemented:
            return o
        return Interval(_down(self.lo - o.hi), _up(self.hi - o.lo))

    def __rsub__(self, other):
        return (-self).__add__(other)

    def __mul__(self, other):
        o = self._other(other)
        if o is NotImplemented:
            return o
        ps = (self.lo * o.lo, self.lo * o.hi, self.hi * o.lo, self.hi * o.hi)
        return Interval(_down(min(ps)), _up(max(ps)))

    __rmul__ = __mul__

    def reciprocal(self) -> "Interval":
        if self.contains_zero():
            raise SingularEvaluationError(f"reciprocal of interval containing zero: {self}")
        return Interval(_down(1.0 / self.hi), _up(1.0 / self.lo))

    def __truediv__(self, other):
        o = self._other(other)
        if o is NotImplemented:
            return o
        return self * o.reciprocal()

    def __rtruediv__(self, other):
        o = self._other(other)
        return o * self.reciprocal()

    def square(self) -> "Interval":
        a, b = abs(self.lo), abs(self.hi)
        hi = max(a, b)
        lo = 0.0 if self.contains_zero() else min(a, b)
        return Interval(_down(lo * lo) if lo else 0.0, _up(hi * hi))

    def __pow__(self, k: int):
        if not isinstance(k, int):
            return NotImplemented
        if k < 0:
            return self.reciprocal() ** (-k)
        if k == 0:
            return Interval(1.0, 1.0)
        if k == 1:
            return self
        if k % 2 == 0 and k == 2:
            return self.square()
        out = self
        for _ in range(k - 1):
            out = out * self
        if k % 2 == 0 and self.contains_zero():
            out = Interval(max(out.lo, 0.0), out.hi)
        return out

    def intersects(self, other: "Interval") -> bool:
        return self.lo <= other.hi and other.lo <= self.hi


class ComplexInterval:
    """Rectangle re + i*im with interval components."""

    __slots__ = ("re", "im")

    def __init__(self, re: Interval, im: Interval):
        self.re = re
        self.im = im

    @classmethod
    def from_value(cls, z) -> "ComplexInterval":
        z = complex(z)
        return cls(Interval(z.real, z.real), Interval(z.imag, z.imag))

    @classmethod
    def from_exact(cls, value) -> "ComplexInterval":
        return cls(interval_hull(value), Interval(0.0, 0.0))

    def __repr__(self):
        return f"({self.re} + {self.im}i)"

    def __contains__(self, z) -> bool:
        if isinstance(z, ComplexInterval):
            return z.re in self.re and z.im in self.im
        z = complex(z)
        return z.real in self.re and z.imag in self.im

    def strictly_contains(self, other: "ComplexInterval") -> bool:
        return self.re.strictly_contains(other.re) and self.im.strictly_contains(other.im)

    def _other(self, x):
        if isinstance(x, ComplexInterval):
            return x
        if isinstance(x, Interval):
            return ComplexInterval(x, Interval(0.0, 0.0))
        if isinstance(x, (int, float, Fraction)):
            return ComplexInterval.from_exact(x)
        if isinstance(x, complex):
            return ComplexInterval.from_value(x)
        return NotImplemented

    def __add__(self, other):
        o = self._other(other)
        if o is NotImplemented:
            return o
        return ComplexInterval(self.re + o.re, self.im + o.im)

    __radd__ = __add__

    def __neg__(self):
        return ComplexInterval(-self.re, -self.im)

    def __sub__(self, other):
        o = self._other(other)
        if o is NotImplemented:
            return o
        return ComplexInterval(self.re - o.re, self.im - o.im)

    def __rsub__(self, other):
        return (-self).__add__(other)

    def __mul__(self, other):
        o = self._other(other)
        if o is NotImplemented:
            return o
        return ComplexInterval(self.re * o.re - self.im * o.im,
                               self.re * o.im + self.im * o.re)

    __rmul__ = __mul__

    def reciprocal(self) -> "ComplexInterval":
        # 1/z = conj(z) / |z|^2; rectangle dependencies only widen, never unsound.
        q = self.re.square() + self.im.square()
        if q.contains_zero():
            raise SingularEvaluationError(
                f"reciprocal of complex interval containing zero: {self}")
        qi = q.reciprocal()
        return ComplexInterval(self.re * qi, -self.im * qi)

    def __truediv__(self, other):
        o = self._other(other)
        if o is NotImplemented:
            return o
        return self * o.reciprocal()

    def __rtruediv__(self, other):
        o = self._other(other)
        return o * self.reciprocal()

    def __pow__(self, k: int):
        if not isinstance(k, int):
            return NotImplemented
        if k < 0:
            return self.reciprocal() ** (-k)
        if k == 0:
            return ComplexInterval.from_value(1.0)
        out = self
        for _ in range(k - 1):
            out = out * self
        return out

    @property
    def mid(self) -> complex:
        return complex(self.re.mid, self.im.mid)

    def intersects(self, other: "ComplexInterval") -> bool:
        return self.re.intersects(other.re) and self.im.intersects(other.im)


class Dual:
    """First-order dual number a + b*eps for directional derivatives."""

    __slots__ = ("val", "eps")

    def __init__(self, val, eps=0.0):
        self.val = val
        self.eps = eps

    def __repr__(self):
        return f"Dual({self.val!r}, {self.eps!r})"

    def _other(self, x):
        if isinstance(x, Dual):
            return x
        if isinstance(x, (int, float, complex, Fraction)):
            return Dual(_num(x), 0.0)
        return NotImplemented

    def __add__(self, other):
        o = self._other(other)
        if o is NotImplemented:
            return o
        return Dual(self.val + o.val, self.eps + o.eps)

    __radd__ = __add__

    def __neg__(self):
        return Dual(-self.val, -self.eps)

    def __sub__(self, other):
        o = self._other(other)
        if o is NotImplemented:
            return o
        return Dual(self.val - o.val, self.eps - o.eps)

    def __rsub__(self, other):
        return (-self).__add__(other)

    def __mul__(self, other):
        o = self._other(other)
        if o is NotImplemented:
            return o
        return Dual(self.val * o.val, self.val * o.eps + self.eps * o.val)

    __rmul__ = __mul__

    def reciprocal(self) -> "Dual":
        if self.val == 0:
            raise SingularEvaluationError("reciprocal of zero dual value")
        inv = 1.0 / self.val
        return Dual(inv, -self.eps * inv * inv)

    def __truediv__(self, other):
        o = self._other(other)
        if o is NotImplemented:
            return o
        return self * o.reciprocal()

    def __rtruediv__(self, other):
        o = self._other(other)
        return o * self.reciprocal()

    def __pow__(self, k: int):
        if not isinstance(k, int):
            return NotImplemented
        if k < 0:
            return self.reciprocal() ** (-k)
        if k == 0:
            return Dual(1.0, 0.0)
        out = self
        for _ in range(k - 1):
            out = out * self
        return out


class Dual2:
    """Second-order jet a + b*t + c*t^2 along one direction.

    ``d1`` is the directional derivative and ``2*d2`` the directional second
    derivative of the evaluated expression.
    """

    __slots__ = ("val", "d1", "d2")

    def __init__(self, val, d1=0.0, d2=0.0):
        self.val = val
        self.d1 = d1
        self.d2 = d2

    def __repr__(self):
        return f"Dual2({self.val!r}, {self.d1!r}, {self.d2!r})"

    def _other(self, x):
        if isinstance(x, Dual2):
            return x
        if isinstance(x, (int, float, complex, Fraction)):
            return Dual2(_num(x))
        return NotImplemented

    def __add__(self, other):
        o = self._other(other)
        if o is NotImplemented:
            return o
        return Dual2(self.val + o.val, self.d1 + o.d1, self.d2 + o.d2)

    __radd__ = __add__

    def __neg__(self):
        return Dual2(-self.val, -self.d1, -self.d2)

    def __sub__(self, other):
        o = self._other(other)
        if o is NotImplemented:
            return o
        return Dual2(self.val - o.val, self.d1 - o.d1, self.d2 - o.d2)

    def __rsub__(self, other):
        return (-self).__add__(other)

    def __mul__(self, other):
        o = self._other(other)
        if o is NotImplemented:
            return o
        return Dual2(self.val * o.val,
                     self.val * o.d1 + self.d1 * o.val,
                     self.val * o.d2 + self.d1 * o.d1 + self.d2 * o.val)

    __rmul__ = __mul__

    def reciprocal(self) -> "Dual2":
        if self.val == 0:
            raise SingularEvaluationError("reciprocal of zero jet value")
        inv = 1.0 / self.val
        c1 = -self.d1 * inv * inv
        c2 = (self.d1 * self.d1 - self.val * self.d2) * inv * inv * inv
        return Dual2(inv, c1, c2)

    def __truediv__(self, other):
        o = self._other(other)
        if o is NotImplemented:
            return o
        return self * o.reciprocal()

    def __rtruediv__(self, other):
        o = self._other(other)
        return o * self.reciprocal()

    def __pow__(self, k: int):
        if not isinstance(k, int):
            return NotImplemented
        if k < 0:
            return self.reciprocal() ** (-k)
        if k == 0:
            return Dual2(1.0)
        out = self
        for _ in range(k - 1):
            out = out * self
        return out


def _num(x):
    if isinstance(x, Fraction):
        return float(x)
    return x
