"""Taylor blocks: replace a(n) on short intervals by polynomials and sum there.

The interval [N_start, N_end] is cut into consecutive blocks [N, N + L(N)]
with L(N) = floor(t^theta (log t)^eta) at t = N.  On each block a(N + n) is
replaced by its degree-m Taylor polynomial at N, whose error is controlled by
|a^(m+1)(N)| L^(m+1) / (m+1)!.  Exponential sums over the polynomial pieces
are computed exactly in fixed point with forward differences.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import gmpy2
import numpy as np
from gmpy2 import mpfr

from ._prec import DEFAULT_BITS, frac_float, working
from .equidist import Character, Obstruction, PolySeq, obstruction_scan
from .errors import NoFeasibleBlockLength
from .hardy import (
    HardyExpr,
    Order,
    SymbolicReal,
    classify_type,
    compare,
    growth_compare,
    parse_constant,
    parse_expr,
)
from .nilgroup import OrbitMap, SymbolicElement
from .sequences import FIRST_INDEX

__all__ = [
    "BlockLength",
    "select_block_length",
    "default_degree",
    "TaylorBlock",
    "taylor_block",
    "BlockSchedule",
    "cover",
    "BlockRecord",
    "BlockPipelineResult",
    "block_pipeline",
    "direct_weyl_average",
    "RBlockResult",
    "r_block_pipeline",
]

# fixed-point fraction bits for block phases
PHASE_BITS = 96
# endpoints of the feasible exponent interval closer than this are refused
DEGENERATE_GAP = 1e-6
HYPOTHESIS_POINTS = (10**4, 10**6, 10**8)


def _expr(a) -> HardyExpr:
    return parse_expr(a) if isinstance(a, str) else a


def default_degree(a: HardyExpr) -> int:
    """m = k + 1 for a of type k or k+."""
    return classify_type(a).k + 1


# block length ------------------------------------------------------------------

def _lex_cmp(x: tuple, y: tuple) -> int:
    c = compare(x[0], y[0])
    if c:
        return c
    return (x[1] > y[1]) - (x[1] < y[1])


@dataclass(frozen=True)
class BlockLength:
    """l(t) = t^theta * log(t)^eta.

    ``lower`` and ``upper`` are the (power, log-power) bounds of the open
    feasible interval, ordered lexicographically.
    """

    theta: SymbolicReal
    eta: Fraction
    m: int
    lower: tuple
    upper: tuple

    def __call__(self, t: int, bits: int = 128) -> int:
        with working(bits):
            t = mpfr(int(t))
            v = t ** self.theta.value(bits)
            if self.eta:
                v = v * gmpy2.log(t) ** (mpfr(self.eta.numerator) / self.eta.denominator)
            return max(1, int(gmpy2.floor(v)))

    def __str__(self) -> str:
        s = f"t^({self.theta})"
        if self.eta:
            s += f"*log(t)^({self.eta})"
        return s

    def certificates(self, a: HardyExpr) -> dict[str, Order]:
        """Growth of l against t, of l^(m+1) a^(m+1) and of l^m a^(m) against 1."""
        a = _expr(a)
        m = self.m
        lead_m = a.derivative(m).leading
        lead_m1 = a.derivative(m + 1).leading
        order = {-1: Order.SLOWER, 0: Order.COMPARABLE, 1: Order.FASTER}
        one = (SymbolicReal.of(0), Fraction(0))
        l_vs_t = _lex_cmp((self.theta, self.eta), (SymbolicReal.of(1), Fraction(0)))
        hi = ((m + 1) * self.theta + lead_m1.power, (m + 1) * self.eta + lead_m1.logpow)
        lo = (m * self.theta + lead_m.power, m * self.eta + lead_m.logpow)
        return {
            "l vs t": order[l_vs_t],
            "l^(m+1) a^(m+1) vs 1": order[_lex_cmp(hi, one)],
            "l^m a^(m) vs 1": order[_lex_cmp(lo, one)],
        }


def _check_hypotheses(a: HardyExpr, m: int) -> None:
    am, am1 = a.derivative(m), a.derivative(m + 1)
    if am.is_zero or am1.is_zero:
        raise NoFeasibleBlockLength(f"a^({m}) or a^({m + 1}) vanishes identically")
    t_m = HardyExpr.monomial(1, -m)
    if growth_compare(am, t_m) is not Order.FASTER or growth_compare(am, HardyExpr.const(1)) is not Order.SLOWER:
        raise NoFeasibleBlockLength(f"need t^-{m} << a^({m}) << 1 for a = {a}")
    vals = [abs(am1(t)) for t in HYPOTHESIS_POINTS]
    if not (vals[0] > vals[1] > vals[2]):
        raise NoFeasibleBlockLength(f"|a^({m + 1})| is not decreasing for a = {a}")


def select_block_length(a: HardyExpr | str, m: int | None = None,
                        theta=None, eta=0) -> BlockLength:
    """Choose the block length exponent for Taylor degree m.

    The feasible set is the open lexicographic interval of (theta, eta) with
    l^m a^(m) growing, l^(m+1) a^(m+1) decaying and l = o(t).  The returned
    exponent is the midpoint of the theta interval (or, when the theta
    endpoints coincide, of the eta interval).  ``theta``/``eta`` override the
    choice; the override must itself be feasible.
    """
    a = _expr(a)
    m = default_degree(a) if m is None else int(m)
    if m < 1:
        raise NoFeasibleBlockLength("degree must be at least 1")
    _check_hypotheses(a, m)
    lead_m = a.derivative(m).leading
    lead_m1 = a.derivative(m + 1).leading
    lower = (-lead_m.power / m, Fraction(-lead_m.logpow, m))
    upper = (-lead_m1.power / (m + 1), Fraction(-lead_m1.logpow, m + 1))
    cap = (SymbolicReal.of(1), Fraction(0))
    if _lex_cmp(cap, upper) < 0:
        upper = cap
    if _lex_cmp(lower, upper) >= 0:
        raise NoFeasibleBlockLength(f"empty block-length interval for a = {a}, m = {m}")

    if theta is not None:
        th = parse_constant(theta) if not isinstance(theta, SymbolicReal) else theta
        bl = BlockLength(th, Fraction(eta), m, lower, upper)
        if _lex_cmp(lower, (th, bl.eta)) >= 0 or _lex_cmp((th, bl.eta), upper) >= 0:
            raise NoFeasibleBlockLength(f"override {bl} is outside the feasible interval")
        return bl

    if compare(lower[0], upper[0]) < 0:
        if float(upper[0] - lower[0]) < DEGENERATE_GAP:
            raise NoFeasibleBlockLength(f"feasible interval for a = {a} is numerically degenerate")
        return BlockLength((lower[0] + upper[0]) / 2, Fraction(0), m, lower, upper)
    # equal powers: the log exponent decides
    return BlockLength(lower[0], (lower[1] + upper[1]) / 2, m, lower, upper)


# Taylor blocks -----------------------------------------------------------------

class _Derivatives:
    """Evaluators of a, a', ..., a^(m+1) at one precision."""

    def __init__(self, a: HardyExpr, m: int, bits: int):
        self.m, self.bits = m, bits
        self.evs = [a.derivative(i).evaluator(bits) if i else a.evaluator(bits) for i in range(m + 2)]

    def at(self, t) -> list[mpfr]:
        return [ev(t) for ev in self.evs]


@dataclass(frozen=True)
class TaylorBlock:
    """Degree-m Taylor polynomial of a around N on offsets 0..L."""

    base: int
    degree: int
    derivatives: tuple          # a^(i)(N), i = 0..m
    poly: PolySeq               # binomial basis in the offset n
    length: int
    remainder: mpfr

    @property
    def monomial(self) -> tuple:
        """Coefficients a^(i)(N) / i! of n^i."""
        with working(self.remainder.precision):
            return tuple(d / math.factorial(i) for i, d in enumerate(self.derivatives))


def _make_block(ders: _Derivatives, N: int, L: int) -> TaylorBlock:
    m = ders.m
    vals = ders.at(N)
    with working(ders.bits):
        mono = [v / math.factorial(i) for i, v in enumerate(vals[:m + 1])]
        poly = PolySeq.from_monomial(mono)
        rem = abs(vals[m + 1]) * mpfr(L) ** (m + 1) / math.factorial(m + 1)
    return TaylorBlock(N, m, tuple(vals[:m + 1]), poly, L, rem)


def taylor_block(a: HardyExpr | str, N: int, m: int, L: int, bits: int = DEFAULT_BITS) -> TaylorBlock:
    """Taylor block of a at N; the remainder bound assumes |a^(m+1)| decreasing."""
    if N < FIRST_INDEX:
        raise ValueError(f"block base must be at least {FIRST_INDEX}")
    return _make_block(_Derivatives(_expr(a), m, bits), int(N), int(L))


@dataclass(frozen=True)
class BlockSchedule:
    blocks: tuple               # ((start, end), ...), inclusive
    length: Callable[[int], int] = field(compare=False, repr=False)

    @property
    def start(self) -> int:
        return self.blocks[0][0]

    @property
    def end(self) -> int:
        return self.blocks[-1][1]

    def __len__(self):
        return len(self.blocks)


def cover(N_start: int, N_end: int, l) -> BlockSchedule:
    """Greedy cover of [N_start, N_end] by [k, k + l(k)], last block truncated.

    ``l`` is an int (constant length) or a callable t -> int.
    """
    length = (lambda t, c=int(l): c) if isinstance(l, int) else l
    if N_end < N_start:
        raise ValueError("empty range")
    blocks = []
    k = int(N_start)
    while k <= N_end:
        end = min(k + max(int(length(k)), 1), int(N_end))
        blocks.append((k, end))
        k = end + 1
    return BlockSchedule(tuple(blocks), length)


# exponential sums on blocks ----------------------------------------------------

def _fixed(x: mpfr, bits: int) -> int:
    """frac(x) * 2^PHASE_BITS rounded to the nearest integer, mod 2^PHASE_BITS."""
    with working(bits):
        f = x - gmpy2.floor(x)
        return int(gmpy2.rint(f * gmpy2.exp2(PHASE_BITS))) % (1 << PHASE_BITS)


def _phases(poly: PolySeq, kappa: int, offsets: range, bits: int) -> np.ndarray:
    """{kappa p(n)} for consecutive n, exact up to 2^-PHASE_BITS per coefficient."""
    with working(bits):
        state = [_fixed(kappa * c, bits) for c in poly.coeffs]
    mask = (1 << PHASE_BITS) - 1
    deg = len(state) - 1
    # advance to the first offset with the same difference scheme
    for _ in range(offsets.start):
        for i in range(deg):
            state[i] = (state[i] + state[i + 1]) & mask
    out = np.empty(len(offsets))
    shift = PHASE_BITS - 53
    for k in range(len(offsets)):
        out[k] = (state[0] >> shift) / 2.0**53
        for i in range(deg):
            state[i] = (state[i] + state[i + 1]) & mask
    return out


def _mean_e(phases: np.ndarray) -> complex:
    z = np.exp(2j * np.pi * phases)
    n = len(phases)
    return complex(math.fsum(z.real) / n, math.fsum(z.imag) / n)


@dataclass(frozen=True)
class BlockRecord:
    base: int
    length: int
    weyl: complex
    witness: Obstruction | None
    remainder: float

    @property
    def modulus(self) -> float:
        return abs(self.weyl)

    def csv_row(self) -> list[str]:
        return [str(self.base), str(self.length), repr(self.modulus),
                str(self.witness) if self.witness else "", repr(self.remainder)]


BLOCK_CSV_HEADER = ["N", "L", "weyl_modulus", "witness", "remainder"]


@dataclass(frozen=True)
class BlockPipelineResult:
    """Per-block sums, their weighted aggregate and the error bound against the plain sum."""

    a: str
    kappa: int
    block_length: BlockLength
    records: tuple
    aggregate: complex
    bound: float
    tail_weight: float

    @property
    def n_start(self) -> int:
        return self.records[0].base

    @property
    def n_end(self) -> int:
        r = self.records[-1]
        return r.base + r.length

    def max_modulus(self, from_base: int = 0) -> float:
        mods = [r.modulus for r in self.records if r.base >= from_base]
        return max(mods) if mods else float("nan")


def block_pipeline(a: HardyExpr | str, kappa: int, N_end: int, m: int | None = None,
                   N_start: int = FIRST_INDEX, block_length: BlockLength | None = None,
                   M: int = 10, bits: int = DEFAULT_BITS, threads: int = 1) -> BlockPipelineResult:
    """Weyl sums of e(kappa p_N(n)) over a block cover of [N_start, N_end].

    The aggregate weights block j by its point count L_j + 1, so it equals
    the plain average of e(kappa a(n)) up to ``bound`` =
    2 pi |kappa| sum_j (L_j + 1) R_j / count plus fixed-point rounding.
    Each block's Taylor polynomial is also scanned for a horizontal-character
    obstruction of size at most M.
    """
    a = _expr(a)
    kappa = int(kappa)
    if kappa == 0:
        raise ValueError("kappa must be non-zero")
    bl = block_length or select_block_length(a, m)
    m = bl.m
    schedule = cover(N_start, N_end, bl)
    ders = _Derivatives(a, m, bits)

    def run(block):
        start, end = block
        L = end - start
        tb = _make_block(ders, start, L)
        ph = _phases(tb.poly, kappa, range(L + 1), bits)
        witness = obstruction_scan(tb.poly.scale(kappa), max(L, 1), M) if m >= 1 else None
        return BlockRecord(start, L, _mean_e(ph), witness, float(tb.remainder))

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            records = list(pool.map(run, schedule.blocks))
    else:
        records = [run(b) for b in schedule.blocks]

    count = N_end - N_start + 1
    weights = [r.length + 1 for r in records]
    re = math.fsum(w * r.weyl.real for w, r in zip(weights, records)) / count
    im = math.fsum(w * r.weyl.imag for w, r in zip(weights, records)) / count
    rem = math.fsum(w * r.remainder for w, r in zip(weights, records)) / count
    # each phase carries at most (L+1)^m * 2^-(PHASE_BITS+1) fixed-point error
    arith = max((r.length + 1) ** m for r in records) * 2.0**-(PHASE_BITS + 1)
    bound = 2 * math.pi * (abs(kappa) * rem + arith)
    return BlockPipelineResult(str(a), kappa, bl, tuple(records), complex(re, im), bound,
                               weights[-1] / count)


def direct_weyl_average(a: HardyExpr | str, kappa: int, N_start: int, N_end: int,
                        bits: int = DEFAULT_BITS) -> complex:
    """(1 / count) sum_{N_start <= n <= N_end} e(kappa a(n)) by direct evaluation."""
    ev = _expr(a).evaluator(bits)
    out = np.empty(N_end - N_start + 1)
    with working(bits):
        for k, n in enumerate(range(N_start, N_end + 1)):
            out[k] = frac_float(kappa * ev(n))
    return _mean_e(out)


# R-blocks ----------------------------------------------------------------------

@dataclass(frozen=True)
class RBlockResult:
    """E_n |A_{R,n}| and its split by the size of ||kappa a'(Rn)||."""

    R: int
    N: int
    eps: float
    mean_abs: float
    mean: complex
    small_fraction: float       # share of n with ||kappa a_1'(Rn)|| <= eps
    sigma_small: float
    sigma_large: float

    @property
    def model_bound(self) -> float:
        """2 eps + 1 / (2 R eps), the bound for a single linear block phase."""
        return 2 * self.eps + 1 / (2 * self.R * self.eps)


def _r_degree(a: HardyExpr) -> int:
    return max(classify_type(a).k, 1)


def r_block_pipeline(seqs: Sequence, bs: Sequence | None = None, F: Callable | None = None,
                     R: int = 64, N: int = 10**4, eps: float = 0.05, kappa: int = 1,
                     x0s: Sequence | None = None, bits: int = DEFAULT_BITS) -> RBlockResult:
    """A_{R,n} = E_{1<=r<=R} F(point of p_{i,R,n}(r)) for n = n0, ..., n0 + N - 1.

    p_{i,R,n} is the Taylor polynomial of a_i at Rn of degree k_i (the type
    of a_i, at least 1).  Without ``bs`` the points are ({kappa p_i(r)})_i on
    the torus and F defaults to e(x_1 + ... + x_l); with ``bs`` they are the
    concatenated coordinates of b_i^{p_i(r)} x_i.  n starts at the first
    value with Rn >= 2.
    """
    exprs = [_expr(a) for a in seqs]
    R, N = int(R), int(N)
    if R < 1:
        raise ValueError("R must be positive")
    degs = [_r_degree(a) for a in exprs]
    ders = [_Derivatives(a, k, bits) for a, k in zip(exprs, degs)]
    if F is None:
        F = Character([1] * len(exprs))
    maps = None
    if bs is not None:
        if len(bs) != len(exprs):
            raise ValueError("one group element per sequence")
        x0s = x0s if x0s is not None else [None] * len(bs)
        maps = [OrbitMap(b.at(bits) if isinstance(b, SymbolicElement) else b, x)
                for b, x in zip(bs, x0s)]
    n0 = max(1, -(-FIRST_INDEX // R))
    abs_vals = np.empty(N)
    vals = np.empty(N, dtype=complex)
    small = np.zeros(N, dtype=bool)
    for idx in range(N):
        base = R * (n0 + idx)
        cols = []
        for j, (d, k) in enumerate(zip(ders, degs)):
            v = d.at(base)
            with working(bits):
                mono = [v[i] / math.factorial(i) for i in range(k + 1)]
                poly = PolySeq.from_monomial(mono)
                if j == 0:
                    small[idx] = float(_dist(kappa * v[1])) <= eps
            if maps is None:
                cols.append(_phases(poly, kappa, range(1, R + 1), bits)[:, None])
            else:
                with working(bits):
                    pts = [maps[j](poly(r)) for r in range(1, R + 1)]
                cols.append(np.array(pts))
        z = np.asarray(F(np.concatenate(cols, axis=1)))
        if np.iscomplexobj(z):
            a_rn = complex(math.fsum(z.real) / R, math.fsum(z.imag) / R)
        else:
            a_rn = complex(math.fsum(z) / R, 0.0)
        vals[idx] = a_rn
        abs_vals[idx] = abs(a_rn)
    mean = complex(math.fsum(vals.real) / N, math.fsum(vals.imag) / N)
    return RBlockResult(
        R, N, eps,
        math.fsum(abs_vals) / N,
        mean,
        float(small.mean()),
        math.fsum(abs_vals[small]) / N,
        math.fsum(abs_vals[~small]) / N,
    )


def _dist(x: mpfr) -> mpfr:
    f = x - gmpy2.floor(x)
    return min(f, 1 - f)

