"""Exact probabilities and probability intervals.

Probabilities are :class:`fractions.Fraction` values everywhere; nothing in
the package converts them to floats except for display and Monte Carlo
sampling.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction

Rational = Fraction

ZERO = Fraction(0)
ONE = Fraction(1)

_DECIMAL = re.compile(r"^\s*(\d+)(?:\.(\d+))?\s*$")
_FRACTION = re.compile(r"^\s*(\d+)\s*/\s*(\d+)\s*$")


def parse_rational(text: str) -> Fraction:
    """Parse ``"0.14"`` or ``"7/50"`` (non-negative) into an exact rational."""
    m = _DECIMAL.match(text)
    if m:
        whole, frac = m.groups()
        if frac is None:
            return Fraction(int(whole))
        return Fraction(int(whole + frac), 10 ** len(frac))
    m = _FRACTION.match(text)
    if m:
        num, den = int(m.group(1)), int(m.group(2))
        if den == 0:
            raise ValueError(f"zero denominator in {text!r}")
        return Fraction(num, den)
    raise ValueError(f"not a rational literal: {text!r}")


def is_decimal(r: Fraction) -> bool:
    """True when ``r`` has a terminating decimal expansion."""
    d = r.denominator
    for p in (2, 5):
        while d % p == 0:
            d //= p
    return d == 1


def format_decimal(r: Fraction, places: int = 12) -> str:
    """Decimal rendering; exact when the expansion terminates."""
    if is_decimal(r):
        sign = "-" if r < 0 else ""
        r = abs(r)
        whole, rest = divmod(r.numerator, r.denominator)
        digits = []
        while rest:
            rest *= 10
            q, rest = divmod(rest, r.denominator)
            digits.append(str(q))
        return sign + str(whole) + ("." + "".join(digits) if digits else "")
    return f"{float(r):.{places}g}"


def format_fraction(r: Fraction) -> str:
    return str(r.numerator) if r.denominator == 1 else f"{r.numerator}/{r.denominator}"


def format_rational(r: Fraction) -> str:
    """Source-syntax rendering: decimal when exact, else ``a/b``."""
    return format_decimal(r) if is_decimal(r) else format_fraction(r)


@dataclass(frozen=True)
class ProbInterval:
    """A sub-interval of [0, 1] with independently open or closed endpoints."""

    lo: Fraction
    hi: Fraction
    lo_closed: bool = True
    hi_closed: bool = True

    def __post_init__(self):
        lo, hi = Fraction(self.lo), Fraction(self.hi)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if not (0 <= lo <= hi <= 1):
            raise ValueError(f"interval bounds out of order or outside [0,1]: {lo}, {hi}")
        if lo == hi and not (self.lo_closed and self.hi_closed):
            raise ValueError("a degenerate interval must be closed at both ends")

    @property
    def is_point(self) -> bool:
        return self.lo == self.hi

    def __contains__(self, p) -> bool:
        return interval_contains(Fraction(p), self)

    def __add__(self, other: ProbInterval) -> ProbInterval:
        return interval_add(self, other)

    def __str__(self) -> str:
        if self.is_point:
            return format_rational(self.lo)
        return "%s%s,%s%s" % (
            "[" if self.lo_closed else "(",
            format_rational(self.lo),
            format_rational(self.hi),
            "]" if self.hi_closed else ")",
        )


def point(p) -> ProbInterval:
    p = Fraction(p)
    if not 0 <= p <= 1:
        raise ValueError(f"probability {p} outside [0,1]")
    return ProbInterval(p, p)


def interval_add(a: ProbInterval, b: ProbInterval) -> ProbInterval:
    lo, hi = a.lo + b.lo, a.hi + b.hi
    lo_closed = a.lo_closed and b.lo_closed
    hi_closed = a.hi_closed and b.hi_closed
    # clamping to 1 makes the endpoint attained
    if lo >= 1:
        lo, lo_closed = ONE, True
    if hi >= 1:
        hi, hi_closed = ONE, True
    if lo == hi:
        lo_closed = hi_closed = True
    return ProbInterval(lo, hi, lo_closed, hi_closed)


def interval_contains(p: Fraction, d: ProbInterval) -> bool:
    above = p >= d.lo if d.lo_closed else p > d.lo
    below = p <= d.hi if d.hi_closed else p < d.hi
    return above and below


def interval_sum(intervals) -> ProbInterval:
    total = point(0)
    for d in intervals:
        total = interval_add(total, d)
    return total


def interval_hull(a: ProbInterval, b: ProbInterval) -> ProbInterval:
    """Smallest interval containing both ``a`` and ``b``."""
    if a.lo < b.lo:
        lo, lo_closed = a.lo, a.lo_closed
    elif b.lo < a.lo:
        lo, lo_closed = b.lo, b.lo_closed
    else:
        lo, lo_closed = a.lo, a.lo_closed or b.lo_closed
    if a.hi > b.hi:
        hi, hi_closed = a.hi, a.hi_closed
    elif b.hi > a.hi:
        hi, hi_closed = b.hi, b.hi_closed
    else:
        hi, hi_closed = a.hi, a.hi_closed or b.hi_closed
    return ProbInterval(lo, hi, lo_closed, hi_closed)


def interval_subset(a: ProbInterval, b: ProbInterval) -> bool:
    """``a`` is contained in ``b``."""
    lo_ok = a.lo > b.lo or (a.lo == b.lo and (b.lo_closed or not a.lo_closed))
    hi_ok = a.hi < b.hi or (a.hi == b.hi and (b.hi_closed or not a.hi_closed))
    return lo_ok and hi_ok


def feasible_sum(intervals) -> bool:
    """Whether some choice of points, one per interval, sums to exactly 1."""
    intervals = list(intervals)
    lo = sum((d.lo for d in intervals), ZERO)
    hi = sum((d.hi for d in intervals), ZERO)
    lo_strict = any(not d.lo_closed for d in intervals)
    hi_strict = any(not d.hi_closed for d in intervals)
    lo_ok = lo < 1 or (lo == 1 and not lo_strict)
    hi_ok = hi > 1 or (hi == 1 and not hi_strict)
    return lo_ok and hi_ok
