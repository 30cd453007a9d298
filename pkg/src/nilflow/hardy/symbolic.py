"""Exact real constants over a declared basis of irrational symbols.

A :class:`SymbolicReal` is ``q0 + q1*s1 + ... + qk*sk`` with rational ``qi``
and basis symbols ``si``.  Each symbol carries a numeric value (computable to
any precision) and two flags:

``independent``
    the symbol belongs to the family declared linearly independent over Q
    together with 1.  Square roots of distinct square-free integers form such
    a family, so every ``sqrtN`` symbol is independent.
``irrational``
    the symbol is known irrational (so {1, s} is independent) even if its
    relation to other symbols is unknown, e.g. ``pi`` or ``log2``.

Linear-dependence questions are decided exactly when the symbols involved
allow it and raise :class:`UndecidableInGrammar` otherwise.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable

import gmpy2
from gmpy2 import mpfr, mpq

from ..errors import GrammarError, UndecidableInGrammar

__all__ = [
    "Symbol",
    "SymbolicReal",
    "declare_symbol",
    "lookup_symbol",
    "rank_over_q",
    "independent_over_q",
    "compare",
    "ZERO",
    "ONE",
]

# comparisons of nearly equal constants are decided at this precision and
# refused below TIE_BITS
COMPARE_BITS = 320
TIE_BITS = 200


@dataclass(frozen=True)
class Symbol:
    name: str
    evaluate: Callable[[int], mpfr] = field(compare=False, hash=False, repr=False)
    independent: bool = field(default=False, compare=False, hash=False)
    irrational: bool = field(default=False, compare=False, hash=False)
    # for product symbols: the two factors, used for printing
    factors: tuple = field(default=(), compare=False, hash=False, repr=False)

    def value(self, bits: int) -> mpfr:
        return _symbol_value(self, int(bits))

    def __str__(self) -> str:
        if self.factors:
            return "(" + str(self.factors[0]) + ")*(" + str(self.factors[1]) + ")"
        return self.name


@lru_cache(maxsize=4096)
def _symbol_value(sym: Symbol, bits: int) -> mpfr:
    with gmpy2.context(gmpy2.get_context(), precision=bits + 16):
        v = sym.evaluate(bits + 16)
    return mpfr(v, bits)


def _squarefree_part(n: int) -> tuple[int, int]:
    """Write n = k*k*s with s square-free; return (k, s)."""
    k, s, p = 1, 1, 2
    while p * p <= n:
        while n % (p * p) == 0:
            n //= p * p
            k *= p
        if n % p == 0:
            n //= p
            s *= p
        p += 1
    return k, s * n


def _sqrt_symbol(n: int) -> Symbol:
    return Symbol(
        f"sqrt{n}",
        lambda bits, n=n: gmpy2.sqrt(mpfr(n)),
        independent=True,
        irrational=True,
    )


_REGISTRY: dict[str, Symbol] = {
    "pi": Symbol("pi", lambda bits: gmpy2.const_pi(), irrational=True),
    "e": Symbol("e", lambda bits: gmpy2.exp(mpfr(1)), irrational=True),
    "log2": Symbol("log2", lambda bits: gmpy2.const_log2(), irrational=True),
    "log3": Symbol("log3", lambda bits: gmpy2.log(mpfr(3)), irrational=True),
    # log(sqrt(2*pi)), the Stirling constant; irrationality is not known
    "halflog2pi": Symbol(
        "halflog2pi", lambda bits: gmpy2.log(2 * gmpy2.const_pi()) / 2
    ),
}

_SQRT_RE = re.compile(r"sqrt(\d+)$")


def declare_symbol(name: str, value: str | Callable[[int], mpfr], *,
                   independent: bool = False, irrational: bool = False) -> Symbol:
    """Register a named constant usable in expression text.

    ``value`` is a decimal string or a callable ``bits -> mpfr``.  Declaring
    ``independent=True`` asserts that the symbol is linearly independent over
    Q from 1 and from every other independent symbol; that assertion is the
    caller's responsibility.
    """
    if not re.fullmatch(r"[A-Za-z_][A-Za-z_0-9]*", name) or name == "t":
        raise GrammarError(f"bad symbol name {name!r}")
    if name in _REGISTRY or _SQRT_RE.match(name):
        raise GrammarError(f"symbol {name!r} already declared")
    if isinstance(value, str):
        text = value
        evaluate = lambda bits, text=text: mpfr(text)  # noqa: E731
    else:
        evaluate = value
    sym = Symbol(name, evaluate, independent=independent,
                 irrational=irrational or independent)
    _REGISTRY[name] = sym
    return sym


def lookup_symbol(name: str) -> SymbolicReal:
    """Resolve a symbol name to a SymbolicReal (``sqrt8`` becomes ``2*sqrt2``)."""
    m = _SQRT_RE.match(name)
    if m:
        return SymbolicReal.sqrt(int(m.group(1)))
    if name == "phi":
        return SymbolicReal(Fraction(1, 2)) + SymbolicReal.sqrt(5) / 2
    try:
        return SymbolicReal.symbol(_REGISTRY[name])
    except KeyError:
        raise GrammarError(f"unknown constant {name!r}") from None


def _as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x)
    raise TypeError(f"not an exact rational: {x!r}")


@dataclass(frozen=True)
class SymbolicReal:
    """``rational + sum(coef * symbol)`` with exact rational coefficients."""

    rational: Fraction = Fraction(0)
    terms: tuple[tuple[Symbol, Fraction], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "rational", _as_fraction(self.rational))
        merged: dict[Symbol, Fraction] = {}
        for sym, c in self.terms:
            merged[sym] = merged.get(sym, Fraction(0)) + _as_fraction(c)
        terms = tuple(sorted(((s, c) for s, c in merged.items() if c),
                             key=lambda sc: str(sc[0])))
        object.__setattr__(self, "terms", terms)

    # constructors -------------------------------------------------------
    @classmethod
    def of(cls, x) -> SymbolicReal:
        if isinstance(x, SymbolicReal):
            return x
        if isinstance(x, float):
            raise TypeError("binary floats need SymbolicReal.from_float(x, assume_independent=...)")
        return cls(_as_fraction(x))

    @classmethod
    def symbol(cls, sym: Symbol) -> SymbolicReal:
        return cls(Fraction(0), ((sym, Fraction(1)),))

    @classmethod
    def sqrt(cls, n: int) -> SymbolicReal:
        if n < 0:
            raise GrammarError("square root of a negative number")
        k, s = _squarefree_part(n)
        if s == 1:
            return cls(Fraction(k))
        return cls(Fraction(0), ((_sqrt_symbol(s), Fraction(k)),))

    @classmethod
    def from_float(cls, x: float, *, assume_independent: bool) -> SymbolicReal:
        """Wrap a binary float as a fresh symbol.

        Linear independence of floating-point inputs cannot be decided, so the
        caller must say whether to treat the value as a new independent
        irrational.
        """
        if not assume_independent:
            raise UndecidableInGrammar(
                "float input needs assume_independent=True, or pass an exact rational"
            )
        name = "float_" + float(x).hex().replace("-", "m").replace(".", "_").replace("+", "p")
        sym = Symbol(name, lambda bits, x=float(x): mpfr(x), independent=True,
                     irrational=True)
        return cls.symbol(sym)

    # queries ------------------------------------------------------------
    @property
    def is_rational(self) -> bool:
        return not self.terms

    @property
    def is_zero(self) -> bool:
        return not self.terms and self.rational == 0

    def symbols(self) -> frozenset[Symbol]:
        return frozenset(s for s, _ in self.terms)

    def vector(self, basis: list[Symbol]) -> list[Fraction]:
        coeffs = dict(self.terms)
        return [self.rational] + [coeffs.get(s, Fraction(0)) for s in basis]

    def value(self, bits: int) -> mpfr:
        return _value(self, int(bits))

    def __float__(self) -> float:
        return float(self.value(64))

    def sign(self) -> int:
        if self.is_zero:
            return 0
        if self.is_rational:
            return (self.rational > 0) - (self.rational < 0)
        v = self.value(COMPARE_BITS)
        if abs(v) < gmpy2.exp2(-TIE_BITS):
            raise UndecidableInGrammar(f"cannot decide the sign of {self}")
        return 1 if v > 0 else -1

    # arithmetic ---------------------------------------------------------
    def __add__(self, other):
        try:
            other = SymbolicReal.of(other)
        except TypeError:
            return NotImplemented
        return SymbolicReal(self.rational + other.rational, self.terms + other.terms)

    __radd__ = __add__

    def __neg__(self):
        return SymbolicReal(-self.rational, tuple((s, -c) for s, c in self.terms))

    def __sub__(self, other):
        try:
            other = SymbolicReal.of(other)
        except TypeError:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        return SymbolicReal.of(other) - self

    def __mul__(self, other):
        try:
            other = SymbolicReal.of(other)
        except TypeError:
            return NotImplemented
        if other.is_rational:
            q = other.rational
            return SymbolicReal(self.rational * q, tuple((s, c * q) for s, c in self.terms))
        if self.is_rational:
            return other * self
        out = SymbolicReal(self.rational * other.rational)
        out = out + SymbolicReal(Fraction(0), tuple((s, c * other.rational) for s, c in self.terms))
        out = out + SymbolicReal(Fraction(0), tuple((s, c * self.rational) for s, c in other.terms))
        for s1, c1 in self.terms:
            for s2, c2 in other.terms:
                out = out + _symbol_product(s1, s2) * (c1 * c2)
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        q = _as_fraction(other) if not isinstance(other, SymbolicReal) else None
        if q is None:
            if not other.is_rational:
                raise GrammarError("division by an irrational constant is outside the grammar")
            q = other.rational
        if q == 0:
            raise ZeroDivisionError("division by zero")
        return self * (1 / q)

    # printing -----------------------------------------------------------
    def __str__(self) -> str:
        parts = []
        if self.rational or not self.terms:
            parts.append(_fmt_q(self.rational))
        for s, c in self.terms:
            name = str(s)
            if c == 1:
                parts.append(name)
            elif c == -1:
                parts.append("-" + name)
            else:
                parts.append(f"{_fmt_q(c)}*{name}")
        out = parts[0]
        for p in parts[1:]:
            out += " - " + p[1:] if p.startswith("-") else " + " + p
        return out

    def __repr__(self) -> str:
        return f"SymbolicReal({str(self)!r})"


def _fmt_q(q: Fraction) -> str:
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


@lru_cache(maxsize=4096)
def _value(x: SymbolicReal, bits: int) -> mpfr:
    with gmpy2.context(gmpy2.get_context(), precision=bits + 16):
        acc = mpfr(mpq(x.rational.numerator, x.rational.denominator))
        for s, c in x.terms:
            acc += s.value(bits + 16) * mpq(c.numerator, c.denominator)
    return mpfr(acc, bits)


def _symbol_product(a: Symbol, b: Symbol) -> SymbolicReal:
    ma, mb = _SQRT_RE.match(a.name), _SQRT_RE.match(b.name)
    if ma and mb and not a.factors and not b.factors:
        return SymbolicReal.sqrt(int(ma.group(1)) * int(mb.group(1)))
    x, y = sorted((a, b), key=str)
    name = f"({x})*({y})"
    sym = Symbol(name, lambda bits, x=x, y=y: x.value(bits) * y.value(bits),
                 factors=(x, y))
    return SymbolicReal.symbol(sym)


def _check_decidable(values: list[SymbolicReal]) -> list[Symbol]:
    syms = sorted(set().union(*(v.symbols() for v in values)), key=str)
    weak = [s for s in syms if not s.independent]
    if weak and (len(syms) > 1 or not weak[0].irrational):
        raise UndecidableInGrammar(
            "linear relations among " + ", ".join(map(str, syms)) + " are not declared"
        )
    return syms


def rank_over_q(values: list[SymbolicReal]) -> int:
    """Rank over Q of the given reals (exact Gaussian elimination)."""
    values = [SymbolicReal.of(v) for v in values]
    if not values:
        return 0
    basis = _check_decidable(values)
    rows = [v.vector(basis) for v in values]
    rank, col, ncols = 0, 0, len(basis) + 1
    while rank < len(rows) and col < ncols:
        pivot = next((r for r in range(rank, len(rows)) if rows[r][col] != 0), None)
        if pivot is None:
            col += 1
            continue
        rows[rank], rows[pivot] = rows[pivot], rows[rank]
        for r in range(len(rows)):
            if r != rank and rows[r][col] != 0:
                f = rows[r][col] / rows[rank][col]
                rows[r] = [a - f * b for a, b in zip(rows[r], rows[rank])]
        rank += 1
        col += 1
    return rank


def independent_over_q(values: list[SymbolicReal]) -> bool:
    return rank_over_q(values) == len(values)


def compare(x, y) -> int:
    """Exact-where-possible three-way comparison of two constants."""
    return (SymbolicReal.of(x) - SymbolicReal.of(y)).sign()


ZERO = SymbolicReal(Fraction(0))
ONE = SymbolicReal(Fraction(1))
