"""High-precision helpers built on gmpy2.

gmpy2 contexts are thread-local, so every function here is safe to call
from worker threads as long as precision is set through :func:`working`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import gmpy2
from gmpy2 import mpfr, mpq, mpz

from .errors import PrecisionExhausted

DEFAULT_BITS = 192
MAX_ESCALATIONS = 4
# bits of headroom required below the working precision before a fractional
# part is considered trustworthy
FRAC_HEADROOM = 60


class NeedMorePrecision(PrecisionExhausted):
    """A value sat too close to an integer; retrying at higher precision may help.

    Subclasses PrecisionExhausted so callers that cannot retry see the public
    error type.
    """


def working(bits: int):
    """Context manager setting the thread-local working precision."""
    return gmpy2.context(gmpy2.get_context(), precision=int(bits))


def to_mpfr(x, bits: int) -> mpfr:
    """Convert int, Fraction, str, float or mpfr to an mpfr rounded to ``bits``."""
    if isinstance(x, mpfr):
        return mpfr(x, bits)
    if isinstance(x, Fraction):
        return mpfr(mpq(x.numerator, x.denominator), bits)
    if isinstance(x, int):
        return mpfr(mpz(x), bits)
    if isinstance(x, str):
        return mpfr(x, bits)
    if isinstance(x, float):
        return mpfr(x, bits)
    value = getattr(x, "value", None)
    if callable(value):
        return mpfr(value(bits), bits)
    raise TypeError(f"cannot convert {type(x).__name__} to mpfr")


def magnitude_bits(x: mpfr) -> int:
    """Binary exponent e with |x| < 2**e (0 for zero)."""
    if gmpy2.is_zero(x):
        return 0
    return int(gmpy2.get_exp(x))


def frac_parts(x: mpfr):
    """Return (floor(x) as int, fractional part as mpfr) exactly."""
    fl = gmpy2.floor(x)
    return int(fl), x - fl


def frac_float(x: mpfr) -> float:
    """Fractional part of ``x`` as a float in [0, 1).

    Raises PrecisionExhausted when the integer part eats so much of the
    mantissa that fewer than ~53 trustworthy fractional bits remain.
    """
    if not gmpy2.is_finite(x):
        raise PrecisionExhausted(f"non-finite value {x}")
    if magnitude_bits(x) > x.precision - FRAC_HEADROOM:
        raise PrecisionExhausted(
            f"integer part needs {magnitude_bits(x)} of {x.precision} bits"
        )
    f = float(x - gmpy2.floor(x))
    # rounding can push 1 - tiny up to 1.0; on the circle that is 0
    return 0.0 if f >= 1.0 else f


def guarded_floor(x: mpfr, guard: int = 32) -> int:
    """floor(x), signalling NeedMorePrecision when x sits too close to an integer.

    The tolerance is ``guard`` bits above the last mantissa bit of x; exact
    integers are accepted as they are.
    """
    if not gmpy2.is_finite(x):
        raise PrecisionExhausted(f"non-finite value {x}")
    fl = gmpy2.floor(x)
    f = x - fl
    if gmpy2.is_zero(f):
        return int(fl)
    tol_exp = max(magnitude_bits(x), 0) - x.precision + guard
    tol = gmpy2.exp2(tol_exp)
    if f < tol or 1 - f < tol:
        raise NeedMorePrecision(str(x))
    return int(fl)


@dataclass
class PrecisionStats:
    """Mutable counter of precision escalations, owned by one computation."""

    escalations: int = 0


def escalate(fn, bits: int, stats: PrecisionStats | None = None,
             max_escalations: int = MAX_ESCALATIONS):
    """Call ``fn(bits)``, doubling ``bits`` on NeedMorePrecision.

    After ``max_escalations`` doublings PrecisionExhausted is raised.
    """
    b = int(bits)
    for attempt in range(max_escalations + 1):
        try:
            return fn(b)
        except NeedMorePrecision:
            if stats is not None:
                stats.escalations += 1
            b *= 2
    raise PrecisionExhausted(f"no stable result up to {b // 2} bits")



def default_bits(d: int, m_max: int) -> int:
    """Precision needed to keep fractional parts of b**m, m <= m_max, in UT(d)."""
    m_max = max(int(m_max), 2)
    return int(math.ceil((d - 1) * math.log2(m_max))) + 96


def to_decimal_string(x: mpfr) -> str:
    """Decimal string that round-trips bit-exactly at ``x.precision``."""
    if gmpy2.is_zero(x):
        return "0"
    digits = int(math.ceil(x.precision * math.log10(2))) + 2
    mant, exp, _ = x.digits(10, digits)
    sign = ""
    if mant.startswith("-"):
        sign, mant = "-", mant[1:]
    mant = mant.rstrip("0") or "0"
    # digits() gives 0.mant * 10**exp
    return f"{sign}0.{mant}e{exp}"
