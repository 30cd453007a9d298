"""Growth types and the pointwise-good trichotomy for grammar expressions."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction

import gmpy2

from ..errors import GrammarError
from .expr import HardyExpr, Term
from .symbolic import SymbolicReal, compare, rank_over_q

__all__ = [
    "Type",
    "TypePlus",
    "GrowthType",
    "classify_type",
    "FarFromPolys",
    "PolyPlusConvergent",
    "NearLinearOverM",
    "NotPointwiseGood",
    "DistanceClass",
    "distance_class",
    "Order",
    "growth_compare",
]


@dataclass(frozen=True)
class Type:
    """a(t)/t^k tends to a non-zero constant."""

    k: int

    def __str__(self):
        return f"type {self.k}"


@dataclass(frozen=True)
class TypePlus:
    """t^k is strictly slower than a(t), which is strictly slower than t^(k+1)."""

    k: int

    def __str__(self):
        return f"type {self.k}+"


GrowthType = Type | TypePlus


def _int_power(term: Term) -> int | None:
    p = term.power
    if p.is_rational and p.rational.denominator == 1:
        return int(p.rational)
    return None


def _floor_power(p: SymbolicReal) -> int:
    if p.is_rational:
        return math.floor(p.rational)
    # p is irrational so floor is well defined; 320 bits is plenty away from ties
    return int(gmpy2.floor(p.value(320)))


def classify_type(a: HardyExpr) -> GrowthType:
    """Type k or k+ from the leading term of ``a``."""
    lead = a.leading
    if lead.power.sign() < 0:
        raise GrammarError(f"{a} tends to zero and has no growth type")
    k = _int_power(lead)
    if k is not None and lead.logpow == 0:
        return Type(k)
    return TypePlus(_floor_power(lead.power))


# distance classes --------------------------------------------------------

@dataclass(frozen=True)
class FarFromPolys:
    """|a - c p| grows faster than log t for every real c and integer polynomial p."""

    def __str__(self):
        return "far-from-polynomials"


@dataclass(frozen=True)
class PolyPlusConvergent:
    """a(t) - c p(t) tends to d.

    ``p`` holds integer coefficients lowest degree first, primitive with a
    positive leading coefficient (empty when a itself converges).
    """

    c: SymbolicReal
    p: tuple[int, ...]
    d: SymbolicReal

    def __str__(self):
        return f"poly-plus-convergent(c={self.c}, p={_poly_str(self.p)}, d={self.d})"


@dataclass(frozen=True)
class NearLinearOverM:
    """|a(t) - t/m| is at most a constant times log t."""

    m: int

    def __str__(self):
        return f"near-linear(m={self.m})"


@dataclass(frozen=True)
class NotPointwiseGood:
    """None of the three good conditions holds.

    Happens when a = c p + b log t + o(log t) with b non-zero and c p not of
    the form t/m, e.g. a = log t.
    """

    def __str__(self):
        return "not-pointwise-good"


DistanceClass = FarFromPolys | PolyPlusConvergent | NearLinearOverM | NotPointwiseGood


def _poly_str(p) -> str:
    if not p:
        return "0"
    parts = []
    for k, c in enumerate(p):
        if c:
            mono = "" if k == 0 else "t" if k == 1 else f"t^{k}"
            coef = "" if (c == 1 and k) else "-" if (c == -1 and k) else f"{c}*" if k else f"{c}"
            parts.append(coef + mono)
    return " + ".join(reversed(parts))


def _above_log(term: Term) -> bool:
    """Whether the term grows strictly faster than log t."""
    s = term.power.sign()
    return s > 0 or (s == 0 and term.logpow > 1)


def _as_scaled_integer_poly(coeffs: dict[int, SymbolicReal]):
    """Write parallel coefficients as c * p with p primitive in Z[t]."""
    degrees = sorted(coeffs)
    top = coeffs[degrees[-1]]
    # every coefficient is a rational multiple of the leading one
    ratios = {}
    for k in degrees:
        ck = coeffs[k]
        if top.is_rational:
            ratios[k] = ck.rational / top.rational
        else:
            sym, q = top.terms[0]
            ratios[k] = dict(ck.terms).get(sym, Fraction(0)) / q
            if ck != top * ratios[k]:
                return None
    den = math.lcm(*(r.denominator for r in ratios.values()))
    ints = {k: int(r * den) for k, r in ratios.items()}
    g = math.gcd(*ints.values())
    ints = {k: v // g for k, v in ints.items()}
    p = tuple(ints.get(k, 0) for k in range(degrees[-1] + 1))
    c = top * Fraction(g, den)
    return c, p


def distance_class(a: HardyExpr) -> DistanceClass:
    """Decide which pointwise-good condition, if any, ``a`` satisfies.

    Terms t^k with integer k >= 0 form the polynomial part; everything else
    is the remainder.  Raises UndecidableInGrammar when the polynomial
    coefficients involve constants whose linear relations are unknown.
    """
    if a.is_zero:
        return PolyPlusConvergent(SymbolicReal.of(0), (), SymbolicReal.of(0))
    poly: dict[int, SymbolicReal] = {}
    rest: list[Term] = []
    for term in a.terms:
        k = _int_power(term)
        if k is not None and k >= 0 and term.logpow == 0:
            poly[k] = term.coef
        else:
            rest.append(term)
    if rest and _above_log(rest[0]):
        return FarFromPolys()
    const = poly.pop(0, SymbolicReal.of(0))
    if poly:
        if rank_over_q(list(poly.values())) > 1:
            return FarFromPolys()
        scaled = _as_scaled_integer_poly(poly)
        if scaled is None:
            return FarFromPolys()
        c, p = scaled
    else:
        c, p = SymbolicReal.of(0), ()
    if not rest or rest[0].power.sign() < 0:
        return PolyPlusConvergent(c, p, const)
    # the remainder is a non-zero multiple of log t plus o(1)
    if len(poly) == 1 and 1 in poly and poly[1].is_rational:
        inv = 1 / poly[1].rational
        if inv.denominator == 1:
            return NearLinearOverM(int(inv))
    return NotPointwiseGood()


# growth comparison -------------------------------------------------------

class Order(enum.Enum):
    SLOWER = "≺"
    COMPARABLE = "∼"
    FASTER = "≻"

    def __str__(self):
        return self.value


def growth_compare(a: HardyExpr, b: HardyExpr) -> Order:
    """Compare growth: SLOWER means a/b -> 0, COMPARABLE means a/b -> non-zero constant."""
    if a.is_zero and b.is_zero:
        raise GrammarError("cannot compare the growth of two zero expressions")
    if a.is_zero:
        return Order.SLOWER
    if b.is_zero:
        return Order.FASTER
    la, lb = a.leading, b.leading
    c = compare(la.power, lb.power)
    if c == 0:
        c = (la.logpow > lb.logpow) - (la.logpow < lb.logpow)
    return {-1: Order.SLOWER, 0: Order.COMPARABLE, 1: Order.FASTER}[c]

