"""Random sparse sequences: keep each n independently with probability sigma_n.

Decisions come from Philox streams keyed by (seed, block index), one block
per BLOCK consecutive integers, so a sample is a pure function of
(spec, seed, range) no matter how blocks are scheduled.  Inside a block with
small rates the kept positions are generated by geometric skipping at the
block's largest rate and thinned to the exact sigma_n, so the cost is
proportional to the number of kept integers rather than to the range.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import mpmath
import numpy as np

from .equidist import orbit_coords
from .hardy import HardyExpr, Order, growth_compare, parse_expr

__all__ = [
    "SigmaSpec",
    "RandomSeqSample",
    "sample",
    "weight",
    "compare_averages",
    "AverageComparison",
    "moment_estimate",
    "MomentEstimate",
]

BLOCK = 1 << 16
# below this rate a block is sampled by geometric skipping
SKIP_RATE = 0.25


def _frac(x) -> Fraction:
    return Fraction(str(x)) if isinstance(x, (str, float)) else Fraction(x)


@dataclass(frozen=True)
class SigmaSpec:
    """sigma_n for n >= 1.

    form ``power``: sigma_n = n^-c with 0 <= c < 1 (c = 1 only as a negative
    control).  ``table``: sigma_1..sigma_K given, sigma_n = sigma_K beyond.
    ``custom``: a grammar expression s(t), sigma_n = min(1, s(max(n, 2))).
    """

    form: str
    c: Fraction = Fraction(0)
    table: tuple = ()
    expr: str = ""
    negative_control: bool = False
    _compiled: object = field(default=None, compare=False, hash=False, repr=False)

    def __post_init__(self):
        if self.form == "power":
            c = _frac(self.c)
            object.__setattr__(self, "c", c)
            if not 0 <= c <= 1 or (c == 1 and not self.negative_control):
                raise ValueError("power(c) needs 0 <= c < 1 (c = 1 only as a negative control)")
        elif self.form == "table":
            vals = tuple(_frac(v) for v in self.table)
            object.__setattr__(self, "table", vals)
            if not vals:
                raise ValueError("empty sigma table")
            if any(not 0 <= v <= 1 for v in vals) or any(b > a for a, b in zip(vals, vals[1:])):
                raise ValueError("sigma table must be non-increasing in [0, 1]")
        elif self.form == "custom":
            e = parse_expr(self.expr)
            object.__setattr__(self, "_compiled", e)
            if not e.is_zero and growth_compare(e, HardyExpr.const(1)) is Order.FASTER:
                raise ValueError("custom sigma must stay bounded")
            d = e.derivative()
            if not d.is_zero and d.leading.coef.sign() > 0:
                raise ValueError("custom sigma must be non-increasing")
        else:
            raise ValueError(f"unknown sigma form {self.form!r}")

    @classmethod
    def power(cls, c, negative_control: bool = False) -> SigmaSpec:
        return cls("power", c=_frac(c), negative_control=negative_control)

    @classmethod
    def constant(cls, p) -> SigmaSpec:
        return cls("table", table=(_frac(p),))

    def to_json(self) -> dict:
        if self.form == "power":
            out = {"form": "power", "c": str(self.c)}
        elif self.form == "table":
            out = {"form": "table", "table": [str(v) for v in self.table]}
        else:
            out = {"form": "custom", "expr": self.expr}
        if self.negative_control:
            out["negative_control"] = True
        return out

    @classmethod
    def from_json(cls, data: dict) -> SigmaSpec:
        return cls(data["form"], c=_frac(data.get("c", 0)), table=tuple(data.get("table", ())),
                   expr=data.get("expr", ""), negative_control=bool(data.get("negative_control", False)))

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_json(), sort_keys=True).encode()).hexdigest()

    @property
    def divergent_mass(self) -> bool:
        """Whether n * sigma_n -> infinity holds by construction."""
        if self.form == "power":
            return self.c < 1
        if self.form == "table":
            return self.table[-1] > 0
        e = self._compiled
        return not e.is_zero and growth_compare(e * HardyExpr.monomial(1, 1), HardyExpr.const(1)) is Order.FASTER

    def values(self, n: np.ndarray) -> np.ndarray:
        """sigma_n as float64 for an integer array n >= 1."""
        n = np.asarray(n, dtype=np.int64)
        if self.form == "power":
            if self.c == 0:
                return np.ones(n.shape)
            return np.power(n.astype(np.float64), -float(self.c))
        if self.form == "table":
            tab = np.array([float(v) for v in self.table])
            return tab[np.minimum(n, len(tab)) - 1]
        ev = self._compiled.evaluator(64)
        return np.array([min(1.0, max(0.0, float(ev(max(int(k), 2))))) for k in n.ravel()]).reshape(n.shape)


# sampling ----------------------------------------------------------------------

def _rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=(int(block) << 64) | (int(seed) & (2**64 - 1))))


def _sample_block(spec: SigmaSpec, seed: int, j: int) -> np.ndarray:
    """Kept integers in [j*BLOCK + 1, (j+1)*BLOCK]."""
    lo = j * BLOCK + 1
    rng = _rng(seed, j)
    top = float(spec.values(np.array([lo]))[0])
    if top <= 0:
        return np.empty(0, dtype=np.int64)
    if top >= SKIP_RATE:
        n = np.arange(lo, lo + BLOCK, dtype=np.int64)
        return n[rng.random(BLOCK) < spec.values(n)]
    # Bernoulli(top) positions by geometric gaps, then thinning to sigma_n / top
    expected = BLOCK * top
    chunk = int(expected + 6 * math.sqrt(expected) + 16)
    pos = np.cumsum(rng.geometric(top, size=chunk))
    while pos[-1] < BLOCK:
        pos = np.concatenate([pos, pos[-1] + np.cumsum(rng.geometric(top, size=chunk))])
    n = lo - 1 + pos[pos <= BLOCK]
    keep = rng.random(len(n)) * top < spec.values(n)
    return n[keep]


@dataclass(frozen=True)
class RandomSeqSample:
    """Kept integers a_1 < a_2 < ... inside [1, n_max]."""

    spec: SigmaSpec
    seed: int
    kept: np.ndarray = field(compare=False)
    n_max: int

    def __eq__(self, other):
        return (isinstance(other, RandomSeqSample) and self.spec == other.spec and self.seed == other.seed
                and self.n_max == other.n_max and np.array_equal(self.kept, other.kept))

    def count(self, N: int) -> int:
        """A(N): number of kept integers <= N."""
        if N > self.n_max:
            raise ValueError(f"sample only covers n <= {self.n_max}")
        return int(np.searchsorted(self.kept, N, side="right"))

    def term(self, k: int) -> int:
        """a_k, 1-indexed."""
        return int(self.kept[k - 1])

    def to_rle(self) -> dict:
        """Run lengths of the kept-set bitmap over 1..n_max, starting with a run of zeros."""
        runs = []
        prev = 0  # last covered integer
        k = 0
        kept = self.kept
        while k < len(kept):
            start = int(kept[k])
            end = start
            while k + 1 < len(kept) and kept[k + 1] == end + 1:
                k += 1
                end += 1
            runs.extend([start - prev - 1, end - start + 1])
            prev = end
            k += 1
        if prev < self.n_max:
            runs.append(self.n_max - prev)
        return {"seed": self.seed, "spec": self.spec.to_json(), "spec_hash": self.spec.digest(),
                "n_max": self.n_max, "runs": runs}

    @classmethod
    def from_rle(cls, data: dict) -> RandomSeqSample:
        spec = SigmaSpec.from_json(data["spec"])
        if spec.digest() != data["spec_hash"]:
            raise ValueError("spec hash mismatch")
        kept, pos, on = [], 0, False
        for r in data["runs"]:
            if on:
                kept.extend(range(pos + 1, pos + r + 1))
            pos += r
            on = not on
        if pos != data["n_max"]:
            raise ValueError("run lengths do not add up to n_max")
        return cls(spec, int(data["seed"]), np.array(kept, dtype=np.int64), int(data["n_max"]))


def sample(spec: SigmaSpec, seed: int, n_max: int | None = None, terms: int | None = None,
           threads: int = 1) -> RandomSeqSample:
    """Sample the kept set up to ``n_max``, or until it has ``terms`` elements.

    With ``terms`` the covered range ends at the block containing the
    terms-th kept integer (whole blocks, so A(N) stays exact for N <= n_max).
    """
    if (n_max is None) == (terms is None):
        raise ValueError("give exactly one of n_max and terms")
    if n_max is not None:
        nblocks = -(-int(n_max) // BLOCK)
        if threads > 1:
            with ThreadPoolExecutor(threads) as pool:
                parts = list(pool.map(lambda j: _sample_block(spec, seed, j), range(nblocks)))
        else:
            parts = [_sample_block(spec, seed, j) for j in range(nblocks)]
        kept = np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)
        return RandomSeqSample(spec, seed, kept[kept <= n_max], int(n_max))
    parts, have, j = [], 0, 0
    while have < terms:
        if not spec.divergent_mass and j > 2**40 // BLOCK:
            raise ValueError("sigma mass too small to reach the requested number of terms")
        part = _sample_block(spec, seed, j)
        parts.append(part)
        have += len(part)
        j += 1
    return RandomSeqSample(spec, seed, np.concatenate(parts), j * BLOCK)


# weights -----------------------------------------------------------------------

def weight(spec: SigmaSpec, N: int, dps: int = 40) -> float:
    """w(N) = sum_{n <= N} sigma_n.

    Power forms use the Hurwitz zeta identity
    sum_{n <= N} n^-c = zeta(c) - zeta(c, N + 1) (harmonic numbers for c = 1).
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    if spec.form == "power":
        if spec.c == 0:
            return float(N)
        ctx = mpmath.MPContext()
        ctx.dps = dps
        if spec.c == 1:
            return float(ctx.harmonic(N))
        c = ctx.mpf(spec.c.numerator) / spec.c.denominator
        return float(ctx.zeta(c) - ctx.zeta(c, N + 1))
    if spec.form == "table":
        k = len(spec.table)
        head = sum(spec.table[:min(N, k)], Fraction(0))
        return float(head + max(N - k, 0) * spec.table[-1])
    return math.fsum(spec.values(np.arange(1, N + 1)))


# averages ----------------------------------------------------------------------

@dataclass(frozen=True)
class AverageComparison:
    sparse: complex
    full: complex
    gap: float
    count: int


def _mean(z) -> complex:
    z = np.asarray(z)
    if np.iscomplexobj(z):
        return complex(math.fsum(z.real) / len(z), math.fsum(z.imag) / len(z))
    return complex(math.fsum(z) / len(z), 0.0)


def compare_averages(smp: RandomSeqSample, b, x0, F: Callable, N: int, mode: str = "terms",
                     full: complex | None = None, bits: int = 192) -> AverageComparison:
    """Sparse orbit average of F against the full one (1/N) sum_{n<=N} F(b^n x0).

    mode ``terms``: the sparse average runs over the first N kept integers
    a_1..a_N.  mode ``range``: over the A(N) kept integers a_n <= N.
    ``full`` may pass a precomputed full average.
    """
    if mode == "terms":
        if len(smp.kept) < N:
            raise ValueError(f"sample has only {len(smp.kept)} terms")
        idx = smp.kept[:N]
    elif mode == "range":
        idx = smp.kept[: smp.count(N)]
    else:
        raise ValueError(f"unknown mode {mode!r}")
    if full is None:
        full = _mean(F(orbit_coords(b, range(1, N + 1), x0, bits)))
    if len(idx) == 0:
        raise ValueError("no kept integers in range")
    sparse = _mean(F(orbit_coords(b, [int(m) for m in idx], x0, bits)))
    return AverageComparison(sparse, full, abs(sparse - full), len(idx))


@dataclass(frozen=True)
class MomentEstimate:
    value: float
    stderr: float
    p: int
    trials: int


def moment_estimate(spec: SigmaSpec, c, N: int, trials: int = 500, seed: int = 0,
                    resamples: int = 200) -> MomentEstimate:
    """L^p norm over omega of (1/w(N)) sum_{n<=N} (X_n - sigma_n) c_n, p = ceil(log N).

    ``c`` is a constant, an array of c_1..c_N or a callable on an integer
    array; |c_n| <= 1.  Trial t uses seed ``seed + t``.  The error bar is the
    bootstrap standard deviation of the estimate.
    """
    if trials < 100:
        raise ValueError("need at least 100 trials")
    n = np.arange(1, N + 1)
    if callable(c):
        cn = np.asarray(c(n), dtype=float)
    else:
        cn = np.broadcast_to(np.asarray(c, dtype=float), (N,))
    if np.any(np.abs(cn) > 1):
        raise ValueError("coefficients must satisfy |c_n| <= 1")
    p = math.ceil(math.log(N))
    if not np.any(cn):
        return MomentEstimate(0.0, 0.0, p, trials)
    sig = spec.values(n)
    base = math.fsum(sig * cn)
    w = weight(spec, N)
    z = np.empty(trials)
    for t in range(trials):
        kept = sample(spec, seed + t, n_max=N).kept
        z[t] = (math.fsum(cn[kept - 1]) - base) / w
    moments = np.abs(z) ** p
    value = float(np.mean(moments) ** (1 / p))
    rng = np.random.default_rng(seed)
    boots = [np.mean(moments[rng.integers(0, trials, trials)]) ** (1 / p) for _ in range(resamples)]
    return MomentEstimate(value, float(np.std(boots, ddof=1)), p, trials)
