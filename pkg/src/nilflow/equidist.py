"""Equidistribution gauges: Weyl sums, discrepancies, smoothness norms, orbit averages.

Points on a torus are float64 arrays with entries in [0, 1): shape (N,) on
the circle, (N, m) on T^m.  Sums go through :func:`math.fsum`, which is
correctly rounded and therefore independent of summation order.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import gmpy2
import numpy as np
from gmpy2 import mpfr
from scipy.stats import qmc

from ._prec import DEFAULT_BITS, MAX_ESCALATIONS, NeedMorePrecision, PrecisionStats, working
from .errors import DimensionMismatch, PrecisionExhausted
from .nilgroup import (
    NilPoint,
    SymbolicElement,
    OrbitMap,
    UnipotentElement,
    cube_average,
)

__all__ = [
    "PolySeq",
    "dist_to_int",
    "cinf_norm",
    "obstruction_scan",
    "best_obstruction",
    "Obstruction",
    "weyl_sum",
    "star_discrepancy_1d",
    "l2_star_discrepancy",
    "l2_heuristic_bound",
    "DiscrepancyReport",
    "METRIC_RANGES",
    "Character",
    "Bump",
    "Constant",
    "orbit_coords",
    "orbit_average",
    "joint_orbit_average",
    "OrbitAverage",
]


# polynomial sequences ------------------------------------------------------

def _stirling2(n: int, k: int) -> int:
    return sum((-1) ** (k - j) * math.comb(k, j) * j**n for j in range(k + 1)) // math.factorial(k)


@dataclass(frozen=True)
class PolySeq:
    """p(n) = sum_i binom(n, i) * coeffs[i].

    Coefficients are Fractions (exact) or mpfr values.
    """

    coeffs: tuple

    def __post_init__(self):
        if not self.coeffs:
            raise ValueError("a PolySeq needs at least the constant coefficient")

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @classmethod
    def from_monomial(cls, mono: Sequence) -> PolySeq:
        """Convert sum_j mono[j] n^j to the binomial basis.

        Uses n^j = sum_i S(j, i) i! binom(n, i) with S the Stirling numbers of
        the second kind.
        """
        k = len(mono) - 1
        out = []
        for i in range(k + 1):
            acc = 0
            for j in range(i, k + 1):
                c = _stirling2(j, i) * math.factorial(i)
                if c:
                    acc = acc + mono[j] * c
            out.append(acc)
        return cls(tuple(out))

    def __call__(self, n: int):
        return sum(math.comb(n, i) * c for i, c in enumerate(self.coeffs))

    def scale(self, k: int) -> PolySeq:
        return PolySeq(tuple(k * c for c in self.coeffs))

    def __add__(self, other: PolySeq) -> PolySeq:
        n = max(len(self.coeffs), len(other.coeffs))
        a = self.coeffs + (0,) * (n - len(self.coeffs))
        b = other.coeffs + (0,) * (n - len(other.coeffs))
        return PolySeq(tuple(x + y for x, y in zip(a, b)))


def dist_to_int(x):
    """Distance from x to the nearest integer, exact for Fractions."""
    if isinstance(x, (Fraction, int)):
        x = Fraction(x)
        f = x - math.floor(x)
        return min(f, 1 - f)
    with working(max(x.precision, 53)):
        f = x - gmpy2.floor(x)
        return min(f, 1 - f)


def cinf_norm(p: PolySeq, N: int):
    """max_{1 <= i <= k} N^i * ||coeffs[i]|| (the constant term is ignored)."""
    if N < 1:
        raise ValueError("N must be positive")
    if p.degree < 1:
        raise ValueError("cinf_norm needs degree >= 1")
    vals = []
    for i, c in enumerate(p.coeffs[1:], start=1):
        d = dist_to_int(c)
        if isinstance(d, Fraction):
            vals.append(N**i * d)
        else:
            with working(d.precision):
                vals.append(mpfr(N) ** i * d)
    return max(vals)


@dataclass(frozen=True)
class Obstruction:
    kappa: tuple[int, ...]
    norm: object

    def __str__(self):
        return "(" + " ".join(str(k) for k in self.kappa) + ")"


def _combine(ps: Sequence[PolySeq], kappa) -> PolySeq:
    acc = PolySeq((0,))
    for k, p in zip(kappa, ps):
        if k:
            acc = acc + p.scale(k)
    return acc


def best_obstruction(ps: Sequence[PolySeq] | PolySeq, N: int, M: int = 10) -> Obstruction:
    """Frequency with the smallest smoothness norm among 0 < |kappa| <= M.

    ``ps`` holds one polynomial sequence per torus coordinate.  Ties are
    broken by smaller sup-norm, then by the lexicographically largest kappa.
    """
    if isinstance(ps, PolySeq):
        ps = [ps]
    if M < 1:
        raise ValueError("M must be at least 1")
    best = None
    for kappa in itertools.product(range(-M, M + 1), repeat=len(ps)):
        if not any(kappa):
            continue
        q = _combine(ps, kappa)
        if q.degree < 1:
            norm = Fraction(0)
        else:
            norm = cinf_norm(q, N)
        key = (norm, max(abs(k) for k in kappa), tuple(-k for k in kappa))
        if best is None or key < best[0]:
            best = (key, kappa, norm)
    return Obstruction(best[1], best[2])


def obstruction_scan(ps: Sequence[PolySeq] | PolySeq, N: int, M: int = 10) -> Obstruction | None:
    """The best obstruction when its smoothness norm is at most M, else None."""
    best = best_obstruction(ps, N, M)
    return best if best.norm <= M else None


# Weyl sums and discrepancies -----------------------------------------------

def _as_points(points, m_expected=None) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if m_expected is not None and pts.shape[1] != m_expected:
        raise DimensionMismatch(f"points have {pts.shape[1]} coordinates, frequency has {m_expected}")
    return pts


def weyl_sum(points, kappa, N: int | None = None) -> complex:
    """(1/N) sum_{n<N} e(kappa . x_n) over the first N points."""
    kappa = np.atleast_1d(np.asarray(kappa, dtype=np.int64))
    if not kappa.any():
        raise ValueError("the frequency must be non-zero")
    pts = _as_points(points, len(kappa))
    if N is not None:
        if N < 1 or N > len(pts):
            raise ValueError(f"N must be in [1, {len(pts)}]")
        pts = pts[:N]
    n = len(pts)
    # reduce the phase mod 1 before scaling by 2 pi to keep it small
    phase = np.mod(pts @ kappa.astype(float), 1.0) * (2 * math.pi)
    re = math.fsum(np.cos(phase)) / n
    im = math.fsum(np.sin(phase)) / n
    return complex(re, im)


def star_discrepancy_1d(points, N: int | None = None) -> float:
    """Exact star discrepancy of points on [0, 1) by sorting."""
    x = np.sort(np.asarray(points, dtype=float)[:N])
    n = len(x)
    if n == 0:
        raise ValueError("need at least one point")
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - x), np.max(x - (i - 1) / n)))


def l2_star_discrepancy(points, N: int | None = None) -> float:
    """L2 star discrepancy (Warnock's closed form, O(N^2 m), scipy's compiled kernel)."""
    pts = _as_points(points)
    if N is not None:
        pts = pts[:N]
    if len(pts) == 0:
        raise ValueError("need at least one point")
    return float(qmc.discrepancy(pts, method="L2-star", iterative=False))


def l2_heuristic_bound(N: int, m: int) -> float:
    """Root-mean-square L2 star discrepancy of N i.i.d. uniform points in [0,1)^m."""
    return math.sqrt((2.0**-m - 3.0**-m) / N)


# reports ---------------------------------------------------------------------

METRIC_RANGES = {
    "star_discrepancy": (0.0, 1.0),
    "l2_star_discrepancy": (0.0, 1.0),
    "weyl_modulus": (0.0, 1.0),
}


@dataclass
class DiscrepancyReport:
    """One (N, metric) measurement."""

    experiment: str
    N: int
    metric: str
    value: float
    witness: str | None = None
    seconds: float | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        lo, hi = METRIC_RANGES.get(self.metric.split(":")[0], (-math.inf, math.inf))
        if not math.isnan(self.value) and not lo <= self.value <= hi + 1e-12:
            raise ValueError(f"{self.metric}={self.value} outside [{lo}, {hi}]")

    def csv_row(self, timings: bool = False) -> list[str]:
        secs = f"{self.seconds:.3f}" if (timings and self.seconds is not None) else ""
        return [self.experiment, str(self.N), self.metric, repr(float(self.value)),
                self.witness or "", secs]


# test functions ------------------------------------------------------------

class Character:
    """x -> e(kappa . x[columns]); its Haar integral is 0 for non-zero kappa."""

    def __init__(self, kappa, columns=None):
        self.kappa = np.asarray(kappa, dtype=np.int64)
        self.columns = list(range(len(self.kappa))) if columns is None else list(columns)
        if len(self.columns) != len(self.kappa):
            raise DimensionMismatch("one frequency per selected column")
        self.lipschitz = 2 * math.pi * float(np.abs(self.kappa).sum())
        self.haar_value = 0j if self.kappa.any() else 1 + 0j

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        phase = np.mod(x[:, self.columns] @ self.kappa.astype(float), 1.0) * (2 * math.pi)
        return np.exp(1j * phase)

    def __repr__(self):
        return f"Character({self.kappa.tolist()}, columns={self.columns})"


class Bump:
    """Product of tents max(0, 1 - |4x - 2|) over the selected columns.

    Each tent is supported in (1/4, 3/4) and integrates to 1/4, so the Haar
    integral is (1/4)^k for k columns.
    """

    def __init__(self, columns):
        self.columns = list(columns)
        self.lipschitz = 4.0 * len(self.columns)
        self.haar_value = 0.25 ** len(self.columns)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)[:, self.columns]
        return np.prod(np.maximum(0.0, 1.0 - np.abs(4.0 * x - 2.0)), axis=1)

    def __repr__(self):
        return f"Bump({self.columns})"


class Constant:
    def __init__(self, c: float = 1.0):
        self.c = float(c)
        self.lipschitz = 0.0
        self.haar_value = self.c

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.full(np.atleast_2d(x).shape[0], self.c)

    def __repr__(self):
        return f"Constant({self.c})"


def _haar_of(f, m: int) -> complex:
    hv = getattr(f, "haar_value", None)
    if hv is not None:
        return complex(hv)
    return complex(cube_average(f, m, samples=2**16).mean)


def _mean(values: np.ndarray) -> complex:
    values = np.asarray(values)
    n = len(values)
    if np.iscomplexobj(values):
        return complex(math.fsum(values.real) / n, math.fsum(values.imag) / n)
    return complex(math.fsum(values) / n, 0.0)


# orbits ------------------------------------------------------------------------

def orbit_coords(b: UnipotentElement | SymbolicElement, seq, x0: NilPoint | None = None,
                 bits: int = DEFAULT_BITS, stats: PrecisionStats | None = None) -> np.ndarray:
    """Coordinates of b^m x0 for each integer m in ``seq``, shape (len(seq), d(d-1)/2).

    With a SymbolicElement, points whose reduction is ambiguous are
    recomputed at doubled precision (at most four times).
    """
    d = b.d
    stats = stats if stats is not None else PrecisionStats()
    maps: dict[int, OrbitMap] = {}

    def point(m, bits):
        if bits not in maps:
            elem = b.at(bits) if isinstance(b, SymbolicElement) else b
            maps[bits] = OrbitMap(elem, x0)
        return maps[bits](m)

    out = np.empty((len(seq), d * (d - 1) // 2))
    for k, m in enumerate(seq):
        b_bits = bits
        for _ in range(MAX_ESCALATIONS + 1):
            try:
                out[k] = point(m, b_bits)
                break
            except NeedMorePrecision:
                if not isinstance(b, SymbolicElement):
                    raise
                stats.escalations += 1
                b_bits *= 2
        else:
            raise PrecisionExhausted(f"orbit point m={m} undecided at {b_bits // 2} bits")
    return out


@dataclass(frozen=True)
class OrbitAverage:
    value: complex
    haar: complex
    gap: float


def orbit_average(b, x0, seq, f: Callable, N: int | None = None, bits: int = DEFAULT_BITS,
                  coords: np.ndarray | None = None) -> OrbitAverage:
    """(1/N) sum_n f(b^{seq(n)} x0) and its distance to the Haar integral of f.

    ``coords`` may pass precomputed orbit coordinates (for caching).
    """
    if coords is None:
        seq = list(seq)[:N] if N is not None else list(seq)
        coords = orbit_coords(b, seq, x0, bits)
    elif N is not None:
        coords = coords[:N]
    value = _mean(f(coords))
    haar = _haar_of(f, coords.shape[1])
    return OrbitAverage(value, haar, abs(value - haar))


def joint_orbit_average(bs, x0s, seqs, f: Callable, N: int | None = None,
                        bits: int = DEFAULT_BITS, coords: list | None = None) -> OrbitAverage:
    """Orbit average on the product X^l of the points (b_i^{seq_i(n)} x_i)_i.

    ``f`` sees the concatenated coordinates of all factors.
    """
    if coords is None:
        x0s = x0s if x0s is not None else [None] * len(bs)
        coords = [orbit_coords(b, list(s)[:N] if N is not None else list(s), x, bits)
                  for b, x, s in zip(bs, x0s, seqs)]
    elif N is not None:
        coords = [c[:N] for c in coords]
    if len({len(c) for c in coords}) != 1:
        raise DimensionMismatch("all sequences need the same length")
    stacked = np.concatenate(coords, axis=1)
    value = _mean(f(stacked))
    haar = _haar_of(f, stacked.shape[1])
    return OrbitAverage(value, haar, abs(value - haar))

