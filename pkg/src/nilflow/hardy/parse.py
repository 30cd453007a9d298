"""Text syntax for grammar expressions.

Examples: ``t^1.5``, ``t*log(t)``, ``sqrt2*t^2 + sqrt3*t``, ``t^sqrt3``,
``(log(t))^2``, ``t/2 + log(t)``, ``logfact(t)^2`` (``log(t!)`` also works).
Decimal literals are exact rationals.
"""

from __future__ import annotations

import re
from fractions import Fraction

from ..errors import GrammarError
from .expr import LOG, T, HardyExpr
from .symbolic import SymbolicReal, lookup_symbol

__all__ = ["parse_expr", "parse_constant", "stirling_logfact"]

_TOKEN = re.compile(r"\s*(?:(\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)|([A-Za-z_][A-Za-z_0-9]*)|(\S))")


def _tokenize(text: str):
    pos, out = 0, []
    text = text.strip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise GrammarError(f"cannot tokenize {text[pos:]!r}")
        num, name, op = m.groups()
        if num is not None:
            out.append(("num", num))
        elif name is not None:
            out.append(("name", name))
        else:
            if op not in "+-*/^()!,":
                raise GrammarError(f"unexpected character {op!r}")
            out.append(("op", op))
        pos = m.end()
    out.append(("end", ""))
    return out


def stirling_logfact() -> HardyExpr:
    """log(t!) as t log t - t + log(t)/2 + log sqrt(2 pi), error below 1/(12 t)."""
    halflog2pi = lookup_symbol("halflog2pi")
    body = T * LOG - T + LOG / 2 + HardyExpr.const(halflog2pi)
    tail = HardyExpr.monomial(Fraction(1, 12), -1)
    return HardyExpr(body.terms, tail)


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self, kind=None, value=None):
        tok = self.toks[self.i]
        if (kind and tok[0] != kind) or (value and tok[1] != value):
            raise GrammarError(f"expected {value or kind!s} in {self.text!r}, got {tok[1]!r}")
        self.i += 1
        return tok

    def parse(self) -> HardyExpr:
        e = self.expr()
        self.take("end")
        return e

    def expr(self) -> HardyExpr:
        e = self.term()
        while self.peek() in (("op", "+"), ("op", "-")):
            op = self.take()[1]
            rhs = self.term()
            e = e + rhs if op == "+" else e - rhs
        return e

    def term(self) -> HardyExpr:
        e = self.factor()
        while self.peek() in (("op", "*"), ("op", "/")):
            op = self.take()[1]
            rhs = self.factor()
            e = e * rhs if op == "*" else e / rhs
        return e

    def factor(self) -> HardyExpr:
        if self.peek() == ("op", "-"):
            self.take()
            return -self.factor()
        if self.peek() == ("op", "+"):
            self.take()
            return self.factor()
        return self.power()

    def power(self) -> HardyExpr:
        base = self.atom()
        if self.peek() == ("op", "^"):
            self.take()
            exponent = self.factor()
            if not exponent.is_constant():
                raise GrammarError("exponents must be constants")
            k = exponent.terms[0].coef if exponent.terms else SymbolicReal.of(0)
            if k.is_rational and k.rational.denominator == 1 and k.rational >= 0:
                return base ** int(k.rational)
            return base ** k
        return base

    def atom(self) -> HardyExpr:
        kind, val = self.take()
        if kind == "num":
            return HardyExpr.const(Fraction(val))
        if kind == "op" and val == "(":
            e = self.expr()
            self.take("op", ")")
            return e
        if kind == "name":
            if val == "t":
                return T
            if self.peek() == ("op", "("):
                return self.call(val)
            return HardyExpr.const(lookup_symbol(val))
        raise GrammarError(f"unexpected {val!r} in {self.text!r}")

    def call(self, fn: str) -> HardyExpr:
        self.take("op", "(")
        arg = self.expr()
        factorial = False
        if self.peek() == ("op", "!"):
            self.take()
            factorial = True
        self.take("op", ")")
        if fn == "log":
            if arg == T:
                return stirling_logfact() if factorial else LOG
            if factorial:
                raise GrammarError("log(x!) needs x = t")
            if arg.is_constant() and arg.terms and arg.terms[0].coef in (SymbolicReal.of(2), SymbolicReal.of(3)):
                return HardyExpr.const(lookup_symbol(f"log{arg.terms[0].coef.rational}"))
            raise GrammarError("log() only accepts t, 2 or 3")
        if factorial:
            raise GrammarError("'!' is only allowed as log(t!)")
        if fn == "logfact":
            if arg != T:
                raise GrammarError("logfact() needs t")
            return stirling_logfact()
        if fn == "sqrt":
            if arg == T:
                return T ** SymbolicReal.of(Fraction(1, 2))
            if arg.is_constant():
                c = arg.terms[0].coef if arg.terms else SymbolicReal.of(0)
                if c.is_rational and c.rational.denominator == 1:
                    return HardyExpr.const(SymbolicReal.sqrt(int(c.rational)))
            raise GrammarError("sqrt() accepts t or a non-negative integer")
        raise GrammarError(f"unknown function {fn!r}")


def parse_expr(text: str) -> HardyExpr:
    return _Parser(text).parse()


def parse_constant(text) -> SymbolicReal:
    """Parse a constant such as ``"sqrt2"``, ``"1/2 + sqrt5/2"`` or ``"0.3"``."""
    if isinstance(text, SymbolicReal):
        return text
    if isinstance(text, (int, Fraction)):
        return SymbolicReal.of(text)
    e = parse_expr(str(text))
    if not e.is_constant():
        raise GrammarError(f"{text!r} is not a constant")
    return e.terms[0].coef if e.terms else SymbolicReal.of(0)
