"""Finite sums of ``c * t**g * log(t)**e`` and their exact calculus."""

from __future__ import annotations

import functools
import numbers
from dataclasses import dataclass
from typing import Callable, NamedTuple

import gmpy2
from gmpy2 import mpfr

from .._prec import DEFAULT_BITS
from ..errors import GrammarError, PrecisionExhausted
from .symbolic import ONE, ZERO, SymbolicReal, compare

__all__ = ["Term", "HardyExpr", "Evaluation", "evaluate", "derivative", "T", "LOG"]


@dataclass(frozen=True)
class Term:
    coef: SymbolicReal
    power: SymbolicReal
    logpow: int = 0

    def growth_key(self):
        return (self.power, self.logpow)

    def __str__(self) -> str:
        pieces = []
        if not self.power.is_zero:
            p = self.power
            if p == ONE:
                pieces.append("t")
            elif p.is_rational and p.rational.denominator == 1 and p.rational > 0:
                pieces.append(f"t^{p.rational}")
            else:
                pieces.append(f"t^({p})")
        if self.logpow:
            pieces.append("log(t)" if self.logpow == 1 else f"log(t)^{self.logpow}")
        if not pieces:
            return f"({self.coef})"
        body = "*".join(pieces)
        return body if self.coef == ONE else f"({self.coef})*{body}"


def _cmp_growth(a: Term, b: Term) -> int:
    c = compare(a.power, b.power)
    if c:
        return c
    return (a.logpow > b.logpow) - (a.logpow < b.logpow)


class Evaluation(NamedTuple):
    value: mpfr
    error: mpfr


@dataclass(frozen=True)
class HardyExpr:
    """An element of the closed grammar, leading (fastest-growing) term first.

    ``tail`` optionally holds a non-negative majorant of the gap between the
    function this expression stands for and the expression itself (used for
    the Stirling rewrite of ``log(t!)``).
    """

    terms: tuple[Term, ...] = ()
    tail: HardyExpr | None = None

    def __post_init__(self):
        merged: dict[tuple, SymbolicReal] = {}
        order: list[tuple] = []
        for term in self.terms:
            key = (term.power, term.logpow)
            if key not in merged:
                merged[key] = ZERO
                order.append(key)
            merged[key] = merged[key] + term.coef
        terms = [Term(merged[k], k[0], k[1]) for k in order if not merged[k].is_zero]
        terms.sort(key=functools.cmp_to_key(_cmp_growth), reverse=True)
        object.__setattr__(self, "terms", tuple(terms))
        if self.tail is not None and not self.tail.terms:
            object.__setattr__(self, "tail", None)

    # construction -------------------------------------------------------
    @classmethod
    def const(cls, c) -> HardyExpr:
        return cls((Term(SymbolicReal.of(c), ZERO, 0),))

    @classmethod
    def monomial(cls, coef=1, power=1, logpow: int = 0) -> HardyExpr:
        if logpow < 0:
            raise GrammarError("negative powers of log(t) are outside the grammar")
        return cls((Term(SymbolicReal.of(coef), SymbolicReal.of(power), int(logpow)),))

    @classmethod
    def parse(cls, text: str) -> HardyExpr:
        from .parse import parse_expr

        return parse_expr(text)

    # queries ------------------------------------------------------------
    @property
    def is_zero(self) -> bool:
        return not self.terms

    @property
    def leading(self) -> Term:
        if not self.terms:
            raise GrammarError("the zero expression has no leading term")
        return self.terms[0]

    def is_constant(self) -> bool:
        return all(t.power.is_zero and t.logpow == 0 for t in self.terms)

    def is_polynomial(self) -> bool:
        return all(t.logpow == 0 and t.power.is_rational and t.power.rational.denominator == 1
                   and t.power.rational >= 0 for t in self.terms)

    def majorant(self) -> HardyExpr:
        """Sum of |c| t^g log(t)^e, an upper bound for |self| when t >= 2."""
        terms = []
        for t in self.terms:
            c = t.coef if t.coef.sign() > 0 else -t.coef
            terms.append(Term(c, t.power, t.logpow))
        return HardyExpr(tuple(terms))

    # arithmetic ---------------------------------------------------------
    def _tail_sum(self, other: HardyExpr) -> HardyExpr | None:
        if self.tail is None:
            return other.tail
        if other.tail is None:
            return self.tail
        return self.tail + other.tail

    def __add__(self, other):
        other = _coerce(other)
        if other is None:
            return NotImplemented
        return HardyExpr(self.terms + other.terms, self._tail_sum(other))

    __radd__ = __add__

    def __neg__(self):
        return HardyExpr(tuple(Term(-t.coef, t.power, t.logpow) for t in self.terms), self.tail)

    def __sub__(self, other):
        other = _coerce(other)
        if other is None:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        return _coerce(other) - self

    def __mul__(self, other):
        other = _coerce(other)
        if other is None:
            return NotImplemented
        terms = tuple(
            Term(a.coef * b.coef, a.power + b.power, a.logpow + b.logpow)
            for a in self.terms for b in other.terms
        )
        tail = None
        if self.tail is not None or other.tail is not None:
            ta = self.tail or HardyExpr()
            tb = other.tail or HardyExpr()
            tail = self.majorant() * tb + other.majorant() * ta + ta * tb
        return HardyExpr(terms, tail)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _coerce(other)
        if other is None or not other.is_constant() or other.is_zero:
            raise GrammarError("only division by a non-zero constant stays in the grammar")
        c = other.terms[0].coef
        if not c.is_rational:
            raise GrammarError("division by an irrational constant is outside the grammar")
        inv = HardyExpr.const(1 / c.rational)
        out = self * inv
        return out

    def __pow__(self, k):
        if isinstance(k, int) and k >= 0:
            out = HardyExpr.const(1)
            for _ in range(k):
                out = out * self
            return out
        k = SymbolicReal.of(k)
        if len(self.terms) == 1 and self.tail is None:
            (t,) = self.terms
            if t.logpow == 0 and t.coef == ONE:
                return HardyExpr((Term(ONE, t.power * k, 0),))
        raise GrammarError(f"({self})^({k}) is outside the grammar")

    # calculus -----------------------------------------------------------
    def derivative(self, order: int = 1) -> HardyExpr:
        if order < 0:
            raise ValueError("order must be non-negative")
        out = self
        for _ in range(order):
            out = out._d()
        return out

    def _d(self) -> HardyExpr:
        terms = []
        for t in self.terms:
            new_power = t.power - 1
            if not t.power.is_zero:
                terms.append(Term(t.coef * t.power, new_power, t.logpow))
            if t.logpow:
                terms.append(Term(t.coef * t.logpow, new_power, t.logpow - 1))
        return HardyExpr(tuple(terms))

    # evaluation ---------------------------------------------------------
    def evaluator(self, bits: int = DEFAULT_BITS) -> Callable[[object], mpfr]:
        """Return ``f(t) -> mpfr`` evaluating at ``bits`` of precision.

        Constants are rounded once; each call computes log(t) at most once.
        """
        return _Evaluator(self, int(bits))

    def __call__(self, t, bits: int = DEFAULT_BITS) -> mpfr:
        return self.evaluator(bits)(t)

    def __str__(self) -> str:
        if not self.terms:
            return "0"
        return " + ".join(str(t) for t in self.terms)

    def __repr__(self) -> str:
        return f"HardyExpr({str(self)!r})"


def _coerce(x) -> HardyExpr | None:
    if isinstance(x, HardyExpr):
        return x
    try:
        return HardyExpr.const(SymbolicReal.of(x))
    except TypeError:
        return None


class _Evaluator:
    def __init__(self, expr: HardyExpr, bits: int):
        self.bits = bits
        self.wbits = bits + 24
        self.plan = []
        for t in expr.terms:
            coef = t.coef.value(self.wbits)
            p = t.power
            if p.is_rational and p.rational.denominator in (1, 2):
                kind, arg = "half", p.rational
            else:
                kind, arg = "real", p.value(self.wbits)
            self.plan.append((coef, kind, arg, t.logpow))
        self.need_log = any(k == "real" or lp for _, k, _, lp in self.plan)

    def __call__(self, t) -> mpfr:
        with gmpy2.context(gmpy2.get_context(), precision=self.wbits):
            tt = mpfr(int(t)) if isinstance(t, numbers.Integral) else mpfr(t)
            if tt < 2:
                raise ValueError("evaluation requires t >= 2")
            lt = gmpy2.log(tt) if self.need_log else None
            root = None
            acc = mpfr(0)
            for coef, kind, arg, logpow in self.plan:
                if kind == "half":
                    q = arg
                    if q.denominator == 1:
                        v = tt ** int(q)
                    else:
                        if root is None:
                            root = gmpy2.sqrt(tt)
                        v = root ** int(q.numerator)
                else:
                    v = gmpy2.exp(arg * lt)
                if logpow:
                    v *= lt ** logpow
                acc += coef * v
            if not gmpy2.is_finite(acc):
                raise PrecisionExhausted(f"overflow evaluating at t={t}")
        return mpfr(acc, self.bits)


def evaluate(a: HardyExpr, t, bits: int = DEFAULT_BITS) -> Evaluation:
    """Value of ``a`` at ``t`` with a bound on the absolute error.

    The bound combines a relative 2**(1-bits) per term with the expression's
    tail majorant, if any.
    """
    if bits < 64:
        raise ValueError("bits must be at least 64")
    value = a.evaluator(bits)(t)
    with gmpy2.context(gmpy2.get_context(), precision=bits):
        err = mpfr(0)
        rel = gmpy2.exp2(1 - bits)
        tt = mpfr(t)
        for term in a.terms:
            err += abs(HardyExpr((term,)).evaluator(bits)(tt)) * rel
        if a.tail is not None:
            err += a.tail.evaluator(bits)(tt)
    return Evaluation(value, err)


def derivative(a: HardyExpr, order: int = 1) -> HardyExpr:
    return a.derivative(order)


T = HardyExpr.monomial(1, 1)
LOG = HardyExpr.monomial(1, 0, 1)
