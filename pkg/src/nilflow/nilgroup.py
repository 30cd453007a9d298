"""Unipotent upper-triangular groups UT(d, R) with lattice UT(d, Z).

Elements are stored as their strictly-upper entries, row-major, as gmpy2
``mpfr`` values.  For d = 3 the entry order is (1,2), (1,3), (2,3), so a
Heisenberg element ``[[1, x, z], [0, 1, y], [0, 0, 1]]`` is ``(x, z, y)``;
use :func:`heisenberg` to avoid thinking about it.

Points of the nilmanifold are Mal'cev coordinates of the second kind, one
per strictly-upper position, ordered superdiagonal first: ``g`` corresponds
to ``prod_k (I + u_k E_k)`` with the product taken in that order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import gmpy2
import numpy as np
from gmpy2 import mpfr
from scipy.stats import qmc

from ._prec import DEFAULT_BITS, NeedMorePrecision, guarded_floor, to_decimal_string, to_mpfr, working
from .errors import DimensionMismatch
from .hardy.symbolic import SymbolicReal, independent_over_q

__all__ = [
    "UnipotentElement",
    "LieElement",
    "NilPoint",
    "PolyMatrix",
    "identity",
    "heisenberg",
    "mul",
    "inv",
    "log_map",
    "exp_map",
    "pow_real",
    "pow_poly",
    "reduce",
    "embed",
    "malcev_coordinates",
    "horizontal",
    "is_ergodic_heisenberg",
    "haar_average",
    "HaarEstimate",
    "cube_average",
    "OrbitMap",
    "translate_coords",
    "sup_distance",
    "malcev_order",
    "NeedMorePrecision",
    "SymbolicElement",
]

MAX_DIM = 6


def _positions(d: int) -> list[tuple[int, int]]:
    """Strictly-upper positions in row-major order."""
    return [(i, j) for i in range(d) for j in range(i + 1, d)]


def malcev_order(d: int) -> list[tuple[int, int]]:
    """Strictly-upper positions ordered by superdiagonal, then by row."""
    return [(i, i + k) for k in range(1, d) for i in range(d - k)]


def _check_dim(d: int):
    if not 2 <= d <= MAX_DIM:
        raise DimensionMismatch(f"dimension must be between 2 and {MAX_DIM}, got {d}")


def _zeros(d: int):
    z = mpfr(0)
    return [[z] * d for _ in range(d)]


def _strict_matmul(a, b, d):
    """Product of two strictly upper-triangular matrices."""
    out = _zeros(d)
    for i in range(d):
        ai = a[i]
        for j in range(i + 2, d):
            acc = mpfr(0)
            for k in range(i + 1, j):
                acc += ai[k] * b[k][j]
            out[i][j] = acc
    return out


def _add(a, b, d, scale=1):
    return [[a[i][j] + scale * b[i][j] for j in range(d)] for i in range(d)]


def _scaled(a, c, d):
    return [[a[i][j] * c for j in range(d)] for i in range(d)]


class _Strict:
    """Common storage of d and strictly-upper entries."""

    __slots__ = ("d", "entries", "bits")

    def __init__(self, d: int, entries: Sequence, bits: int = DEFAULT_BITS):
        _check_dim(d)
        n = d * (d - 1) // 2
        if len(entries) != n:
            raise DimensionMismatch(f"expected {n} entries for d={d}, got {len(entries)}")
        self.d = int(d)
        self.bits = int(bits)
        self.entries = tuple(to_mpfr(x, self.bits) for x in entries)

    @classmethod
    def _from_strict(cls, mat, d: int, bits: int):
        obj = cls.__new__(cls)
        obj.d, obj.bits = d, bits
        obj.entries = tuple(mpfr(mat[i][j], bits) for i, j in _positions(d))
        return obj

    def _strict(self):
        m = _zeros(self.d)
        for (i, j), v in zip(_positions(self.d), self.entries):
            m[i][j] = v
        return m

    def entry(self, i: int, j: int) -> mpfr:
        """Entry at 0-based row i, column j."""
        if i == j:
            return mpfr(1 if isinstance(self, UnipotentElement) else 0)
        if j < i:
            return mpfr(0)
        return self.entries[_positions(self.d).index((i, j))]

    def to_numpy(self) -> np.ndarray:
        m = np.eye(self.d) if isinstance(self, UnipotentElement) else np.zeros((self.d, self.d))
        for (i, j), v in zip(_positions(self.d), self.entries):
            m[i, j] = float(v)
        return m

    def to_json(self) -> dict:
        return {"d": self.d, "bits": self.bits,
                "entries": [to_decimal_string(v) for v in self.entries]}

    @classmethod
    def from_json(cls, data: dict):
        bits = int(data["bits"])
        return cls(int(data["d"]), [mpfr(s, bits) for s in data["entries"]], bits)

    def __eq__(self, other):
        return type(self) is type(other) and self.d == other.d and self.entries == other.entries

    def __hash__(self):
        return hash((type(self).__name__, self.d, self.entries))

    def max_abs_diff(self, other) -> mpfr:
        if self.d != other.d:
            raise DimensionMismatch("dimensions differ")
        with working(max(self.bits, other.bits)):
            return max((abs(a - b) for a, b in zip(self.entries, other.entries)), default=mpfr(0))

    def __repr__(self):
        vals = ", ".join(f"{float(v):.6g}" for v in self.entries)
        return f"{type(self).__name__}(d={self.d}, [{vals}], bits={self.bits})"


class UnipotentElement(_Strict):
    """Unit upper-triangular d x d real matrix."""

    __slots__ = ()

    def __matmul__(self, other):
        return mul(self, other)

    __mul__ = __matmul__


class LieElement(_Strict):
    """Strictly upper-triangular d x d real matrix (nilpotent)."""

    __slots__ = ()

    def scale(self, s) -> LieElement:
        with working(self.bits):
            s = to_mpfr(s, self.bits)
            return LieElement(self.d, [v * s for v in self.entries], self.bits)

    def __neg__(self):
        return LieElement(self.d, [-v for v in self.entries], self.bits)

    def __add__(self, other):
        if self.d != other.d:
            raise DimensionMismatch("dimensions differ")
        bits = max(self.bits, other.bits)
        with working(bits):
            return LieElement(self.d, [a + b for a, b in zip(self.entries, other.entries)], bits)


def identity(d: int, bits: int = DEFAULT_BITS) -> UnipotentElement:
    return UnipotentElement(d, [0] * (d * (d - 1) // 2), bits)


def heisenberg(x, y, z, bits: int = DEFAULT_BITS) -> UnipotentElement:
    """``[[1, x, z], [0, 1, y], [0, 0, 1]]``."""
    return UnipotentElement(3, [x, z, y], bits)


def _bits(*elements) -> int:
    return max(e.bits for e in elements)


def _same_dim(*elements):
    if len({e.d for e in elements}) != 1:
        raise DimensionMismatch("elements have different dimensions")


def mul(g: UnipotentElement, h: UnipotentElement) -> UnipotentElement:
    _same_dim(g, h)
    d, bits = g.d, _bits(g, h)
    with working(bits):
        n, m = g._strict(), h._strict()
        out = _add(_add(n, m, d), _strict_matmul(n, m, d), d)
        return UnipotentElement._from_strict(out, d, bits)


def _series(n, d, coeffs: Callable[[int], object]):
    """sum_{j>=1} coeffs(j) * n^j for strictly-upper n (finite: n^d = 0)."""
    acc = _zeros(d)
    power = n
    for j in range(1, d):
        c = coeffs(j)
        if c:
            acc = _add(acc, power, d, c)
        power = _strict_matmul(power, n, d)
    return acc


def inv(g: UnipotentElement) -> UnipotentElement:
    d, bits = g.d, g.bits
    with working(bits):
        out = _series(g._strict(), d, lambda j: -1 if j % 2 else 1)
        return UnipotentElement._from_strict(out, d, bits)


def log_map(g: UnipotentElement) -> LieElement:
    d, bits = g.d, g.bits
    with working(bits):
        out = _series(g._strict(), d, lambda j: mpfr(1 if j % 2 else -1) / j)
        return LieElement._from_strict(out, d, bits)


def exp_map(x: LieElement) -> UnipotentElement:
    d, bits = x.d, x.bits
    with working(bits):
        out = _series(x._strict(), d, lambda j: mpfr(1) / math.factorial(j))
        return UnipotentElement._from_strict(out, d, bits)


def pow_real(b: UnipotentElement, s) -> UnipotentElement:
    """b**s = exp(s log b); agrees with repeated multiplication for integer s."""
    return exp_map(log_map(b).scale(s))


class PolyMatrix:
    """b**m as a matrix polynomial ``sum_j m**j * coeffs[j]`` (j < d).

    Entry (i, j) has degree at most j - i and the constant term is the
    identity.
    """

    def __init__(self, d: int, coeffs: list, bits: int):
        self.d, self.bits = d, bits
        # coeffs[j] is a strictly-upper d x d nested list for j >= 1
        self.coeffs = coeffs

    def entry_poly(self, i: int, j: int) -> list[mpfr]:
        """Coefficients of entry (i, j), lowest degree first."""
        base = [mpfr(1 if i == j else 0)]
        return base + [c[i][j] for c in self.coeffs[1:]]

    def __call__(self, m) -> UnipotentElement:
        d, bits = self.d, self.bits
        with working(bits):
            m = to_mpfr(m, bits)
            out = _zeros(d)
            # Horner over the matrix coefficients
            for c in reversed(self.coeffs[1:]):
                out = _add(_scaled(out, m, d), c, d)
            out = _scaled(out, m, d)
            return UnipotentElement._from_strict(out, d, bits)

    evaluate = __call__


def pow_poly(b: UnipotentElement) -> PolyMatrix:
    """Closed form of b**m: coefficient matrices (log b)**j / j!."""
    d, bits = b.d, b.bits
    with working(bits):
        x = log_map(b)._strict()
        coeffs = [None]
        power = x
        for j in range(1, d):
            coeffs.append(_scaled(power, mpfr(1) / math.factorial(j), d))
            power = _strict_matmul(power, x, d)
    return PolyMatrix(d, coeffs, bits)


# nilmanifold points --------------------------------------------------------

@dataclass(frozen=True)
class NilPoint:
    """Point gamma-coset of G/Gamma as second-kind coordinates in [0, 1)."""

    d: int
    coords: tuple

    def as_array(self) -> np.ndarray:
        return np.array([float(c) for c in self.coords])

    def to_json(self) -> dict:
        return {"d": self.d, "coords": [to_decimal_string(mpfr(c)) for c in self.coords]}


def embed(point: NilPoint | Sequence, d: int | None = None, bits: int = DEFAULT_BITS) -> UnipotentElement:
    """The group element prod_k (I + u_k E_k) in Mal'cev order."""
    if isinstance(point, NilPoint):
        d, coords = point.d, point.coords
    else:
        coords = list(point)
        if d is None:
            d = int(round((1 + math.sqrt(1 + 8 * len(coords))) / 2))
    order = malcev_order(d)
    if len(coords) != len(order):
        raise DimensionMismatch("wrong number of coordinates")
    with working(bits):
        m = [[mpfr(1 if i == j else 0) for j in range(d)] for i in range(d)]
        for (i, j), u in zip(order, coords):
            u = to_mpfr(u, bits)
            # right-multiply by I + u E_ij: column j += u * column i
            for r in range(i + 1):
                m[r][j] = m[r][j] + u * m[r][i]
        return UnipotentElement._from_strict(m, d, bits)


def _full(g: UnipotentElement):
    d = g.d
    m = [[mpfr(1 if i == j else 0) for j in range(d)] for i in range(d)]
    for (i, j), v in zip(_positions(d), g.entries):
        m[i][j] = v
    return m


def malcev_coordinates(g: UnipotentElement) -> list[mpfr]:
    """Second-kind coordinates of g itself (not reduced mod the lattice)."""
    d = g.d
    with working(g.bits):
        m = _full(g)
        out = []
        for i, j in malcev_order(d):
            u = m[i][j]
            out.append(u)
            # left-multiply by I - u E_ij: row i -= u * row j
            for c in range(j, d):
                m[i][c] = m[i][c] - u * m[j][c]
        return out


def _int_unipotent_inverse(a: list[list[int]], d: int) -> list[list[int]]:
    n = [[a[i][j] if i != j else 0 for j in range(d)] for i in range(d)]
    out = [[int(i == j) for j in range(d)] for i in range(d)]
    power = [row[:] for row in out]
    for k in range(1, d):
        power = [[sum(power[i][l] * n[l][j] for l in range(d)) for j in range(d)] for i in range(d)]
        sign = -1 if k % 2 else 1
        out = [[out[i][j] + sign * power[i][j] for j in range(d)] for i in range(d)]
    return out


def _peel(peeled, d: int, guard: int, acc=None) -> list:
    """Reduce the full matrix ``peeled`` in place; return second-kind coordinates.

    When ``acc`` is given it accumulates the integer right factors.
    """
    coords = []
    for i, j in malcev_order(d):
        n = guarded_floor(peeled[i][j], guard)
        if n:
            # right-multiply by I - n E_ij: column j -= n * column i
            for r in range(i + 1):
                peeled[r][j] = peeled[r][j] - n * peeled[r][i]
            if acc is not None:
                for r in range(i + 1):
                    acc[r][j] -= n * acc[r][i]
        u = peeled[i][j]
        coords.append(u)
        # left-multiply by I - u E_ij: row i -= u * row j
        for c in range(j, d):
            peeled[i][c] = peeled[i][c] - u * peeled[j][c]
    return coords


def reduce(g: UnipotentElement, guard: int = 32) -> tuple[NilPoint, UnipotentElement]:
    """Split g = embed(point) * gamma with gamma in UT(d, Z).

    Raises NeedMorePrecision (a PrecisionExhausted) when a coordinate lies
    within ``guard`` bits of the working precision of an integer; callers
    that can recompute g at higher precision should catch it and retry.
    """
    d, bits = g.d, g.bits
    with working(bits):
        acc = [[int(i == j) for j in range(d)] for i in range(d)]
        coords = _peel(_full(g), d, guard, acc)
        gamma = _int_unipotent_inverse(acc, d)
    gamma_el = UnipotentElement(d, [gamma[i][j] for i, j in _positions(d)], bits)
    return NilPoint(d, tuple(coords)), gamma_el


class OrbitMap:
    """m -> coordinates of b^m x0, specialised for speed.

    Equivalent to ``reduce(mul(pow_poly(b)(m), embed(x0)))[0]`` but skips
    building intermediate element objects.
    """

    def __init__(self, b: UnipotentElement, x0: NilPoint | None = None, guard: int = 32):
        self.d, self.bits, self.guard = b.d, b.bits, guard
        pm = pow_poly(b)
        # per entry: coefficients of m^1 .. m^(j-i), highest first for Horner
        self.entries = [(i, j, [pm.coeffs[k][i][j] for k in range(j - i, 0, -1)])
                        for i, j in _positions(self.d)]
        self.g0 = _full(embed(x0, bits=self.bits)) if x0 is not None else None

    def __call__(self, m) -> list[float]:
        d = self.d
        with working(self.bits):
            m = mpfr(int(m)) if not isinstance(m, mpfr) else m
            mat = [[mpfr(1 if i == j else 0) for j in range(d)] for i in range(d)]
            for i, j, cs in self.entries:
                acc = cs[0]
                for c in cs[1:]:
                    acc = acc * m + c
                mat[i][j] = acc * m
            if self.g0 is not None:
                g0 = self.g0
                mat = [[sum((mat[i][k] * g0[k][j] for k in range(i, j + 1)), mpfr(0)) if j > i
                        else mat[i][j] for j in range(d)] for i in range(d)]
            coords = _peel(mat, d, self.guard)
        return [float(u) for u in coords]


def horizontal(g: UnipotentElement) -> tuple[float, ...]:
    """Projection to the horizontal torus: superdiagonal entries mod 1."""
    out = []
    with working(g.bits):
        for i in range(g.d - 1):
            v = g.entry(i, i + 1)
            f = float(v - gmpy2.floor(v))
            out.append(0.0 if f >= 1.0 else f)
    return tuple(out)


def is_ergodic_heisenberg(alpha, beta) -> bool:
    """Whether 1, alpha, beta are linearly independent over Q.

    This decides ergodicity of the Heisenberg nilrotation whose horizontal
    part is (alpha, beta).
    """
    return independent_over_q([SymbolicReal.of(1), SymbolicReal.of(alpha), SymbolicReal.of(beta)])


def sup_distance(g: UnipotentElement, h: UnipotentElement) -> float:
    """Sup-norm distance between second-kind coordinates."""
    a, b = malcev_coordinates(g), malcev_coordinates(h)
    return max(abs(float(x - y)) for x, y in zip(a, b))


# float64 helpers for Haar checks -----------------------------------------

def _embed_array(coords: np.ndarray, d: int) -> np.ndarray:
    n = coords.shape[0]
    m = np.broadcast_to(np.eye(d), (n, d, d)).copy()
    for k, (i, j) in enumerate(malcev_order(d)):
        m[:, : i + 1, j] += coords[:, k, None] * m[:, : i + 1, i]
    return m


def _reduce_array(m: np.ndarray, d: int) -> np.ndarray:
    m = m.copy()
    order = malcev_order(d)
    out = np.empty((m.shape[0], len(order)))
    peeled = m.copy()
    for k, (i, j) in enumerate(order):
        n = np.floor(peeled[:, i, j])
        peeled[:, : i + 1, j] -= n[:, None] * peeled[:, : i + 1, i]
        u = peeled[:, i, j]
        out[:, k] = u
        peeled[:, i, j:] -= u[:, None] * peeled[:, j, j:]
    return np.mod(out, 1.0)


def translate_coords(g: UnipotentElement, coords: np.ndarray) -> np.ndarray:
    """Coordinates of g * x for each row x of ``coords`` (float64 arithmetic)."""
    coords = np.atleast_2d(np.asarray(coords, dtype=float))
    d = g.d
    pts = _embed_array(coords, d)
    moved = np.einsum("ij,njk->nik", g.to_numpy(), pts)
    return _reduce_array(moved, d)


class HaarEstimate(NamedTuple):
    mean: float
    stderr: float
    samples: int


def cube_average(f: Callable[[np.ndarray], np.ndarray], m: int, samples: int = 2**14,
                 replicas: int = 8, seed: int = 1000) -> HaarEstimate:
    """Randomised QMC estimate of the integral of ``f`` over [0, 1)^m.

    The standard error comes from the spread of independently scrambled
    Sobol replicas (seeds ``seed``, ``seed + 1``, ...).
    """
    if samples < 1000:
        raise ValueError("need at least 1000 samples")
    per = max(1, math.ceil(math.log2(samples / replicas)))
    means = []
    for r in range(replicas):
        pts = qmc.Sobol(m, scramble=True, rng=seed + r).random_base2(per)
        means.append(np.mean(f(pts)))
    means = np.array(means)
    err = float(np.std(means, ddof=1) / math.sqrt(replicas)) if replicas > 1 else float("nan")
    mean = np.mean(means)
    return HaarEstimate(mean if np.iscomplexobj(mean) else float(mean), err, replicas * 2**per)


def haar_average(f: Callable[[np.ndarray], np.ndarray], d: int, samples: int = 2**14,
                 replicas: int = 8, seed: int = 1000) -> HaarEstimate:
    """Haar integral of ``f`` over UT(d,R)/UT(d,Z).

    ``f`` maps an (n, m) array of second-kind coordinates to n values.  Haar
    measure is Lebesgue measure on the coordinate cube.
    """
    _check_dim(d)
    return cube_average(f, d * (d - 1) // 2, samples, replicas, seed)


class SymbolicElement:
    """A group element with exact (SymbolicReal) entries, realisable at any precision.

    Orbit code needs this to recompute b at higher precision when a
    fractional part is ambiguous.
    """

    def __init__(self, d: int, entries: Sequence):
        _check_dim(d)
        if len(entries) != d * (d - 1) // 2:
            raise DimensionMismatch(f"expected {d * (d - 1) // 2} entries for d={d}")
        self.d = d
        self.entries = tuple(SymbolicReal.of(e) for e in entries)
        self._cache: dict[int, UnipotentElement] = {}

    @classmethod
    def heisenberg(cls, x, y, z) -> SymbolicElement:
        return cls(3, [x, z, y])

    def at(self, bits: int) -> UnipotentElement:
        bits = int(bits)
        if bits not in self._cache:
            self._cache[bits] = UnipotentElement(self.d, [e.value(bits + 16) for e in self.entries], bits)
        return self._cache[bits]

    def entry(self, i: int, j: int) -> SymbolicReal:
        return self.entries[_positions(self.d).index((i, j))]

    def __repr__(self):
        return f"SymbolicElement(d={self.d}, [{', '.join(map(str, self.entries))}])"

