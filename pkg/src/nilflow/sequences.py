"""Integer and fractional parts of Hardy sequences at high precision.

Hardy sequences are indexed from n = 2 so that log n > 0.
"""

from __future__ import annotations

import numpy as np
from gmpy2 import mpfr

from ._prec import (
    DEFAULT_BITS,
    MAX_ESCALATIONS,
    NeedMorePrecision,
    PrecisionStats,
    frac_float,
    guarded_floor,
    to_mpfr,
    working,
)
from .errors import PrecisionExhausted
from .hardy import HardyExpr, SymbolicReal, parse_constant, parse_expr

__all__ = ["HardySequence", "scaled_fractional_parts", "FIRST_INDEX"]

FIRST_INDEX = 2


class HardySequence:
    """n -> a(n) for a grammar expression, with precision escalation.

    Parameters
    ----------
    a : HardyExpr or str
    bits : int
        Starting precision.  Values whose integer part is ambiguous at this
        precision are recomputed at doubled precision, at most four times.
    stats : PrecisionStats, optional
        Escalation counter shared with the caller.
    """

    def __init__(self, a: HardyExpr | str, bits: int = DEFAULT_BITS, stats: PrecisionStats | None = None):
        self.expr = parse_expr(a) if isinstance(a, str) else a
        self.bits = int(bits)
        self.stats = stats if stats is not None else PrecisionStats()
        self._evaluators = {}

    def _ev(self, bits):
        if bits not in self._evaluators:
            self._evaluators[bits] = self.expr.evaluator(bits)
        return self._evaluators[bits]

    def value(self, n: int, bits: int | None = None) -> mpfr:
        return self._ev(bits or self.bits)(n)

    def _floor(self, n: int) -> int:
        bits = self.bits
        for _ in range(MAX_ESCALATIONS + 1):
            try:
                return guarded_floor(self._ev(bits)(n))
            except NeedMorePrecision:
                self.stats.escalations += 1
                bits *= 2
        raise PrecisionExhausted(f"integer part of a({n}) undecided at {bits // 2} bits")

    def integer_parts(self, count: int, start: int = FIRST_INDEX) -> np.ndarray:
        """[a(n)] for n = start, ..., start + count - 1 as an int64 array when it fits."""
        vals = [self._floor(n) for n in range(start, start + count)]
        try:
            return np.array(vals, dtype=np.int64)
        except OverflowError:
            return np.array(vals, dtype=object)

    def fractional_parts(self, count: int, start: int = FIRST_INDEX) -> np.ndarray:
        """{a(n)} for n = start, ..., start + count - 1 as float64."""
        out = np.empty(count)
        ev = self._ev(self.bits)
        for k, n in enumerate(range(start, start + count)):
            try:
                out[k] = frac_float(ev(n))
            except PrecisionExhausted:
                self.stats.escalations += 1
                out[k] = frac_float(self._ev(self.bits * 2)(n))
        return out


def scaled_fractional_parts(ints, c, bits: int = DEFAULT_BITS) -> np.ndarray:
    """{m * c} for integers m and a constant c (SymbolicReal, str or number)."""
    if isinstance(c, str):
        c = parse_constant(c)
    if isinstance(c, SymbolicReal):
        cv = c.value(bits)
    else:
        cv = to_mpfr(c, bits)
    out = np.empty(len(ints))
    with working(bits):
        for k, m in enumerate(ints):
            out[k] = frac_float(int(m) * cv)
    return out

