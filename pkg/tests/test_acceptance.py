"""Acceptance gate: one test per criterion, each at its stated tolerance and time limit.

Thresholds are desk-scale; scripts/pilot.py measures the same quantities
over wider grids.
"""

import filecmp
import math
import random
import time
from fractions import Fraction

import gmpy2

from nilflow.blocks import block_pipeline, direct_weyl_average
from nilflow.equidist import (
    Bump,
    Character,
    PolySeq,
    joint_orbit_average,
    obstruction_scan,
    orbit_average,
    orbit_coords,
    star_discrepancy_1d,
)
from nilflow.hardy import SymbolicReal
from nilflow.lab import OrbitCache, list_experiments, load_config, run, write_outputs
from nilflow.nilgroup import (
    LieElement,
    SymbolicElement,
    UnipotentElement,
    exp_map,
    heisenberg,
    identity,
    inv,
    log_map,
    mul,
    pow_poly,
    pow_real,
)
from nilflow.randomseq import SigmaSpec, compare_averages, moment_estimate, sample, weight
from nilflow.sequences import HardySequence, scaled_fractional_parts

BITS = 192
HEIS = SymbolicElement.heisenberg(SymbolicReal.sqrt(2), SymbolicReal.sqrt(3), 0)


def frac(x):
    return Fraction(*x.as_integer_ratio())


def max_diff(g, h):
    return max(abs(frac(a) - frac(b)) for a, b in zip(g.entries, h.entries))


# 1 -----------------------------------------------------------------------------

def test_criterion_01_algebraic_suite(criterion):
    t0 = time.perf_counter()
    rng = random.Random(2024)
    tol = Fraction(1, 2 ** (BITS - 24))
    worst = Fraction(0)
    count = 0
    for d in (3, 4, 5):
        n = d * (d - 1) // 2
        for _ in range(34 if d < 5 else 32):
            g, h, k, b = (UnipotentElement(d, [rng.uniform(-1, 1) for _ in range(n)], BITS) for _ in range(4))
            x = LieElement(d, [rng.uniform(-1, 1) for _ in range(n)], BITS)
            s1, s2 = Fraction(rng.randint(-40, 40), 16), Fraction(rng.randint(-40, 40), 16)
            checks = [
                (mul(mul(g, h), k), mul(g, mul(h, k))),
                (mul(g, identity(d, BITS)), g),
                (mul(g, inv(g)), identity(d, BITS)),
                (exp_map(log_map(b)), b),
                (log_map(exp_map(x)), x),
                (pow_real(b, s1 + s2), mul(pow_real(b, s1), pow_real(b, s2))),
                (pow_real(pow_real(b, s1), s2), pow_real(b, s1 * s2)),
                (pow_real(mul(mul(g, b), inv(g)), s1), mul(mul(g, pow_real(b, s1)), inv(g))),
            ]
            worst = max([worst] + [max_diff(u, v) for u, v in checks])
            count += 1
    secs = time.perf_counter() - t0
    ok = count == 100 and worst <= tol and secs < 10
    detail = f"{count} elements, worst entry error 2^{math.log2(worst) if worst else -math.inf:.1f}" \
             f" (limit 2^-{BITS - 24}), {secs:.1f}s"
    assert criterion(1, "group axioms, exp/log, one-parameter laws", ok, detail)


# 2 -----------------------------------------------------------------------------

def test_criterion_02_heisenberg_closed_forms(criterion):
    t0 = time.perf_counter()
    rng = random.Random(7)
    tol = Fraction(1, 2 ** (BITS - 16))
    worst = Fraction(0)
    for _ in range(20):
        a, b, c = (Fraction(rng.randint(-99, 99), rng.randint(1, 50)) for _ in range(3))
        el = heisenberg(a, b, c, BITS)
        ea, eb, ec = frac(el.entry(0, 1)), frac(el.entry(1, 2)), frac(el.entry(0, 2))
        s = Fraction(rng.randint(-300, 300), rng.randint(1, 64))
        # b^s = [[1, s a, s c + s(s-1)/2 a b], [0, 1, s b], [0, 0, 1]]
        p = pow_real(el, s)
        worst = max(worst, abs(frac(p.entry(0, 1)) - s * ea), abs(frac(p.entry(1, 2)) - s * eb),
                    abs(frac(p.entry(0, 2)) - (s * ec + s * (s - 1) / 2 * ea * eb)) / max(1, abs(s) ** 2))
        # the matrix polynomial of b^n has coefficients (0, a), (0, b), (0, c - ab/2, ab/2)
        pm = pow_poly(el)
        want = {(0, 1): [0, ea], (1, 2): [0, eb], (0, 2): [0, ec - ea * eb / 2, ea * eb / 2]}
        for (i, j), coeffs in want.items():
            got = pm.entry_poly(i, j)
            got = got + [gmpy2.mpfr(0)] * (len(coeffs) - len(got))
            worst = max(worst, max(abs(frac(u) - v) for u, v in zip(got, coeffs)))
        m = rng.randint(-10**4, 10**4)
        q = pm(m)
        worst = max(worst, abs(frac(q.entry(0, 2)) - (m * ec + Fraction(m * (m - 1), 2) * ea * eb)) / max(1, m * m))
        # exp of (x, z, y) is [[1, x, z + xy/2], [0, 1, y], [0, 0, 1]]
        e = exp_map(LieElement(3, [ea, ec, eb], BITS))
        worst = max(worst, abs(frac(e.entry(0, 2)) - (ec + ea * eb / 2)))
    secs = time.perf_counter() - t0
    ok = worst <= tol and secs < 5
    detail = f"20 random (alpha, beta, gamma), worst relative error 2^{math.log2(worst) if worst else -math.inf:.1f}, {secs:.1f}s"
    assert criterion(2, "Heisenberg pow_real / pow_poly closed forms", ok, detail)


# 3, 4, 8 -----------------------------------------------------------------------

def test_criterion_03_equidistribution_mod_1(criterion):
    t0 = time.perf_counter()
    parts, ok = [], True
    for expr in ("t^(3/2)", "t*log(t)", "sqrt2*t^2 + t^(1/2)"):
        x = HardySequence(expr, bits=BITS).fractional_parts(10**5)
        d = [star_discrepancy_1d(x[:N]) for N in (10**3, 10**4, 10**5)]
        ok &= d[0] > d[1] > d[2] and d[2] <= 0.01
        parts.append(f"{expr}: " + " > ".join(f"{v:.4f}" for v in d))
    secs = time.perf_counter() - t0
    ok &= secs < 60
    assert criterion(3, "star discrepancy <= 0.01 at 1e5 and decreasing", ok, "; ".join(parts) + f"; {secs:.1f}s")


def test_criterion_04_log_negative_control(criterion):
    t0 = time.perf_counter()
    d = star_discrepancy_1d(HardySequence("log(t)", bits=BITS).fractional_parts(10**5))
    secs = time.perf_counter() - t0
    ok = d >= 0.1 and secs < 10
    assert criterion(4, "log t is not equidistributed", ok, f"D* = {d:.4f} at 1e5, {secs:.1f}s")


def test_criterion_08_squared_integer_parts(criterion):
    t0 = time.perf_counter()
    ints = [int(m) ** 2 for m in HardySequence("t^(3/2)", bits=BITS).integer_parts(10**5)]
    d = star_discrepancy_1d(scaled_fractional_parts(ints, "sqrt2", BITS))
    secs = time.perf_counter() - t0
    ok = d <= 0.02 and secs < 60
    assert criterion(8, "sqrt2 [n^(3/2)]^2 mod 1", ok, f"D* = {d:.4f} at 1e5, {secs:.1f}s")


# 5 -----------------------------------------------------------------------------

def test_criterion_05_block_pipeline(criterion):
    t0 = time.perf_counter()
    res = block_pipeline("t*log(t)", 1, 10**4, bits=BITS)
    direct = direct_weyl_average("t*log(t)", 1, 2, 10**4, BITS)
    gap = abs(res.aggregate - direct)
    secs = time.perf_counter() - t0
    ok = gap <= res.bound and res.bound <= 1e-3 and secs < 30
    detail = f"|pipeline - direct| = {gap:.2e}, summed remainder bound = {res.bound:.3e} (limit 1e-3), {secs:.1f}s"
    assert criterion(5, "Taylor-block Weyl sum matches direct summation", ok, detail)


# 6, 7 --------------------------------------------------------------------------

def test_criterion_06_single_orbit(criterion):
    t0 = time.perf_counter()
    ints = [int(m) for m in HardySequence("t^(3/2)", bits=BITS).integer_parts(10**5)]
    coords = orbit_coords(HEIS, ints, None, BITS)
    fns = [Character([1], [0]), Character([0, 1], [0, 1]), Bump([2])]
    gaps = [orbit_average(None, None, None, f, coords=coords).gap for f in fns]
    secs = time.perf_counter() - t0
    ok = max(gaps) <= 0.02 and secs < 120
    detail = ", ".join(f"{f!r} {g:.4f}" for f, g in zip(fns, gaps)) + f"; {secs:.1f}s"
    assert criterion(6, "b^[n^(3/2)] x equidistributes", ok, detail)


def test_criterion_07_several_orbits(criterion):
    t0 = time.perf_counter()
    coords = []
    for expr in ("t^(3/2)", "t^(5/2)"):
        ints = [int(m) for m in HardySequence(expr, bits=BITS).integer_parts(10**5)]
        coords.append(orbit_coords(HEIS, ints, None, BITS))
    f = Character([1, 1], [0, 3])
    gap = joint_orbit_average(None, None, None, f, coords=coords).gap
    secs = time.perf_counter() - t0
    ok = gap <= 0.03 and secs < 180
    assert criterion(7, "joint orbit ([n^(3/2)], [n^(5/2)])", ok, f"{f!r} gap {gap:.4f} at 1e5, {secs:.1f}s")


# 9 -----------------------------------------------------------------------------

def brute_force(p, N, M):
    best = None
    for k in range(-M, M + 1):
        if k == 0:
            continue
        v = 0
        for i in range(1, p.degree + 1):
            c = k * p.coeffs[i]
            v = max(v, N**i * min(c - math.floor(c), math.ceil(c) - c))
        key = (v, abs(k), -k)
        if best is None or key < best[0]:
            best = (key, k, v)
    return (best[1], best[2]) if best[2] <= M else None


def test_criterion_09_obstruction_scanner(criterion):
    t0 = time.perf_counter()
    rng = random.Random(99)
    agree = 0
    for _ in range(100):
        q = rng.randint(2, 500)
        p = PolySeq(tuple(Fraction(rng.randint(-3 * q, 3 * q), q) for _ in range(rng.randint(2, 4))))
        N, M = rng.randint(1, 1000), rng.randint(1, 20)
        got, want = obstruction_scan(p, N, M), brute_force(p, N, M)
        agree += (got is None and want is None) or (
            got is not None and want is not None and got.kappa == (want[0],) and got.norm == want[1])
    half = obstruction_scan(PolySeq((0, Fraction(1, 2))), 10**4, 10)
    root2 = obstruction_scan(PolySeq((0, SymbolicReal.sqrt(2).value(BITS))), 10**4, 10)
    secs = time.perf_counter() - t0
    ok = agree == 100 and half is not None and half.kappa == (2,) and root2 is None and secs < 10
    detail = f"{agree}/100 exact agreements, alpha=1/2 -> {half}, alpha=sqrt2 -> {root2}, {secs:.1f}s"
    assert criterion(9, "obstruction scanner vs brute force", ok, detail)


# 10 ----------------------------------------------------------------------------

def test_criterion_10_random_sparse(criterion):
    t0 = time.perf_counter()
    spec = SigmaSpec.power("1/2")
    N = 10**5
    fns = [Character([1], [0]), Bump([0, 1, 2])]
    full_coords = orbit_coords(HEIS, range(1, N + 1), None, BITS)
    full = [orbit_average(None, None, None, f, coords=full_coords).value for f in fns]
    growth, gaps = [], []
    for seed in range(20):
        smp = sample(spec, seed, terms=N)
        growth.append(smp.term(10**4) / 10**8)
        gaps.append(max(compare_averages(smp, HEIS, None, f, N, full=v, bits=BITS).gap
                        for f, v in zip(fns, full)))
    in_band = sum(0.8 <= g <= 1.2 for g in growth)
    small = sum(g <= 0.03 for g in gaps)
    m = moment_estimate(spec, 1, 10**4, trials=500)
    bound = 8 * math.sqrt(math.log(10**4) / weight(spec, 10**4))
    secs = time.perf_counter() - t0
    ok = in_band >= 18 and small >= 18 and m.value <= bound and secs < 300
    detail = (f"growth a_n/n^2 in [0.8, 1.2] for {in_band}/20 seeds (median {sorted(growth)[10]:.3f}); "
              f"sparse gap <= 0.03 for {small}/20 (max {max(gaps):.4f}); "
              f"moment {m.value:.4f} <= {bound:.4f}; {secs:.1f}s")
    assert criterion(10, "random sparse sequences", ok, detail)


# 11 ----------------------------------------------------------------------------

def _tables(d):
    return sorted(p.name for p in d.iterdir() if p.suffix in (".csv", ".tsv"))


def test_criterion_11_reproducibility(criterion, tmp_path):
    t0 = time.perf_counter()
    cache = tmp_path / "cache"
    runs = [dict(threads=1, cache=None), dict(threads=4, cache=cache), dict(threads=2, cache=cache)]
    mismatched = []
    cat = list_experiments()
    for e in cat:
        cfg = load_config(e.path)
        dirs = []
        for i, opts in enumerate(runs):
            c = OrbitCache(opts["cache"]) if opts["cache"] else None
            dirs.append(write_outputs(run(cfg, threads=opts["threads"], cache=c), tmp_path / f"run{i}"))
        names = _tables(dirs[0])
        for d in dirs[1:]:
            _, diff, errors = filecmp.cmpfiles(dirs[0], d, names, shallow=False)
            if diff or errors or _tables(d) != names:
                mismatched.append(e.name)
    secs = time.perf_counter() - t0
    ok = not mismatched
    detail = (f"{len(cat)} shipped configs x 3 runs (no cache / 4 threads cold cache / 2 threads warm cache), "
              f"mismatches: {mismatched or 'none'}, {secs:.0f}s")
    assert criterion(11, "byte-identical CSV across thread counts and cache state", ok, detail)
