"""Outward-rounded interval arithmetic and log-domain bound helpers.

Directed rounding is emulated by one-ulp outward nudges (``math.nextafter``)
around round-to-nearest results: an IEEE-754 basic operation in nearest mode
is off by at most half an ulp, so widening each endpoint by a full ulp yields
a rigorous enclosure.  Transcendental functions (log, exp, sqrt, cos, sin)
are nudged by two ulps to cover libm implementations that are faithful but
not correctly rounded.
"""

from __future__ import annotations

import math

_INF = math.inf

ROUNDING_NOTE = "one-ulp outward nudging around round-to-nearest (math.nextafter)"


def _up(x: float) -> float:
    if x == _INF or x != x:
        return x
    return math.nextafter(x, _INF)


def _down(x: float) -> float:
    if x == -_INF or x != x:
        return x
    return math.nextafter(x, -_INF)


def _up2(x: float) -> float:
    return _up(_up(x))


def _down2(x: float) -> float:
    return _down(_down(x))


class Interval:
    """Closed floating-point interval [lo, hi] with outward rounding."""

    __slots__ = ("lo", "hi")

    def __init__(self, lo, hi=None):
        if hi is None:
            hi = lo
        lo = float(lo)
        hi = float(hi)
        if not lo <= hi:
            raise ValueError(f"invalid interval bounds [{lo}, {hi}]")
        self.lo = lo
        self.hi = hi

    # -- constructors -------------------------------------------------------

    @staticmethod
    def point(x) -> "Interval":
        return Interval(float(x), float(x))

    @staticmethod
    def zero() -> "Interval":
        return Interval(0.0, 0.0)

    # -- predicates / scalar views ------------------------------------------

    def is_zero(self) -> bool:
        return self.lo == 0.0 and self.hi == 0.0

    def contains(self, x: float) -> bool:
        return self.lo <= x <= self.hi

    def contains_zero(self) -> bool:
        return self.lo <= 0.0 <= self.hi

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def width(self) -> float:
        return _up(self.hi - self.lo)

    def mag(self) -> float:
        """Upper bound for |x| over the interval."""
        return max(abs(self.lo), abs(self.hi))

    def mig(self) -> float:
        """Lower bound for |x| over the interval (0 if it straddles zero)."""
        if self.contains_zero():
            return 0.0
        return min(abs(self.lo), abs(self.hi))

    # -- arithmetic ----------------------------------------------------------

    def __neg__(self) -> "Interval":
        return Interval(-self.hi, -self.lo)

    def __add__(self, other):
        o = _coerce(other)
        if o is None:
            return NotImplemented
        return Interval(_down(self.lo + o.lo), _up(self.hi + o.hi))

    __radd__ = __add__

    def __sub__(self, other):
        o = _coerce(other)
        if o is None:
            return NotImplemented
        return Interval(_down(self.lo - o.hi), _up(self.hi - o.lo))

    def __rsub__(self, other):
        o = _coerce(other)
        if o is None:
            return NotImplemented
        return o - self

    def __mul__(self, other):
        o = _coerce(other)
        if o is None:
            return NotImplemented
        p1 = self.lo * o.lo
        p2 = self.lo * o.hi
        p3 = self.hi * o.lo
        p4 = self.hi * o.hi
        return Interval(_down(min(p1, p2, p3, p4)), _up(max(p1, p2, p3, p4)))

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = _coerce(other)
        if o is None:
            return NotImplemented
        if o.contains_zero():
            raise ZeroDivisionError(f"division by interval containing zero: [{o.lo}, {o.hi}]")
        q1 = self.lo / o.lo
        q2 = self.lo / o.hi
        q3 = self.hi / o.lo
        q4 = self.hi / o.hi
        return Interval(_down(min(q1, q2, q3, q4)), _up(max(q1, q2, q3, q4)))

    def __rtruediv__(self, other):
        o = _coerce(other)
        if o is None:
            return NotImplemented
        return o / self

    def __abs__(self) -> "Interval":
        return Interval(self.mig(), self.mag())

    def sqrt(self) -> "Interval":
        if self.lo < 0.0:
            raise ValueError(f"sqrt of interval with negative part: [{self.lo}, {self.hi}]")
        return Interval(max(0.0, _down2(math.sqrt(self.lo))), _up2(math.sqrt(self.hi)))

    def __pow__(self, n: int) -> "Interval":
        if not isinstance(n, int) or n < 0:
            raise ValueError("only non-negative integer powers are supported")
        out = Interval(1.0, 1.0)
        base = self
        m = n
        while m:
            if m & 1:
                out = out * base
            base = base * base
            m >>= 1
        if n % 2 == 0 and self.contains_zero():
            out = Interval(0.0, out.hi)
        return out

    # -- misc -----------------------------------------------------------------

    def hull(self, other: "Interval") -> "Interval":
        return Interval(min(self.lo, other.lo), max(self.hi, other.hi))

    def widened(self, eps_ulps: int = 1) -> "Interval":
        lo, hi = self.lo, self.hi
        for _ in range(eps_ulps):
            lo = _down(lo)
            hi = _up(hi)
        return Interval(lo, hi)

    def __repr__(self) -> str:
        return f"Interval({self.lo!r}, {self.hi!r})"

    def __eq__(self, other) -> bool:
        return isinstance(other, Interval) and self.lo == other.lo and self.hi == other.hi

    def __hash__(self):
        return hash((self.lo, self.hi))


def _coerce(x):
    if isinstance(x, Interval):
        return x
    if isinstance(x, (int, float)):
        return Interval(float(x), float(x))
    return None


def icos(iv: Interval) -> Interval:
    """Enclosure of cos over an interval (crude but rigorous)."""
    if iv.width >= 2.0 * math.pi:
        return Interval(-1.0, 1.0)
    vals = [math.cos(iv.lo), math.cos(iv.hi)]
    lo = _down2(min(vals))
    hi = _up2(max(vals))
    # include interior extrema at multiples of pi
    k0 = math.ceil(iv.lo / math.pi)
    k1 = math.floor(iv.hi / math.pi)
    for k in range(k0, k1 + 1):
        lo = min(lo, -1.0 if k % 2 else 1.0)
        hi = max(hi, -1.0 if k % 2 else 1.0)
    return Interval(max(lo, -1.0), min(hi, 1.0))


def isin(iv: Interval) -> Interval:
    half_pi = 0.5 * math.pi
    return icos(Interval(_down(iv.lo - half_pi), _up(iv.hi - half_pi)))


# -- log-domain upper-bound helpers -------------------------------------------
#
# Norm bounds during the estimate iteration are stored as natural logarithms;
# log(0) is represented by -inf.  Every helper rounds its result upward so the
# represented bound never shrinks through accumulation.

LOG_ZERO = -_INF


def log_up(x: float) -> float:
    """Upper bound of log(x) for x >= 0."""
    if x < 0.0:
        raise ValueError("log of negative value")
    if x == 0.0:
        return LOG_ZERO
    return _up2(math.log(x))


def exp_up(a: float) -> float:
    if a == LOG_ZERO:
        return 0.0
    if a == _INF:
        return _INF
    return _up2(math.exp(a))


def ladd(a: float, b: float) -> float:
    """Upper bound of log(exp(a) + exp(b))."""
    if a == LOG_ZERO:
        return b
    if b == LOG_ZERO:
        return a
    hi = max(a, b)
    lo = min(a, b)
    d = lo - hi
    if d < -745.0:
        return _up(hi)
    return _up2(hi + _up2(math.log1p(math.exp(d))))


def lmul(a: float, b: float) -> float:
    """Upper bound of log(exp(a) * exp(b))."""
    if a == LOG_ZERO or b == LOG_ZERO:
        return LOG_ZERO
    return _up(a + b)


def lpow(a: float, n: int) -> float:
    if n == 0:
        return 0.0
    if a == LOG_ZERO:
        return LOG_ZERO
    return _up(a * n)


def lscale(a: float, c: float) -> float:
    """Upper bound of log(c * exp(a)) for c > 0."""
    if a == LOG_ZERO:
        return LOG_ZERO
    return _up(a + log_up(c))
