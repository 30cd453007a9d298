import math
import random
from fractions import Fraction

import gmpy2
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nilflow.equidist import (
    Bump,
    Character,
    Constant,
    DiscrepancyReport,
    PolySeq,
    cinf_norm,
    joint_orbit_average,
    l2_heuristic_bound,
    l2_star_discrepancy,
    obstruction_scan,
    orbit_average,
    orbit_coords,
    star_discrepancy_1d,
    weyl_sum,
)
from nilflow.hardy import SymbolicReal
from nilflow.nilgroup import NilPoint, SymbolicElement, embed, mul, pow_poly, reduce
from nilflow.sequences import HardySequence, scaled_fractional_parts


def kronecker(alpha, n, start=1):
    return scaled_fractional_parts(range(start, start + n), alpha, bits=128)


def test_weyl_sum_rational_rotation():
    x = np.mod(np.arange(1, 101) * 0.5, 1.0)
    assert weyl_sum(x, 2) == 1
    assert abs(weyl_sum(x, 1)) < 1e-15


def test_weyl_sum_sqrt2_against_direct_sum():
    x = kronecker(SymbolicReal.sqrt(2), 1000)
    got = weyl_sum(x, 1)
    with gmpy2.context(gmpy2.get_context(), precision=128):
        s2 = gmpy2.sqrt(gmpy2.mpfr(2))
        re = sum(gmpy2.cos(2 * gmpy2.const_pi() * n * s2) for n in range(1, 1001)) / 1000
        im = sum(gmpy2.sin(2 * gmpy2.const_pi() * n * s2) for n in range(1, 1001)) / 1000
    assert abs(got - complex(float(re), float(im))) < 1e-12
    assert abs(got) <= 0.05


def test_weyl_sum_rejects_zero_frequency():
    with pytest.raises(ValueError):
        weyl_sum([0.1, 0.2], 0)


def brute_star_discrepancy(x):
    # sup over anchored intervals [0, u) and [0, u] with u at the points or 1
    x = list(x)
    n = len(x)
    best = 0.0
    for u in x + [1.0]:
        open_count = sum(1 for v in x if v < u)
        closed_count = sum(1 for v in x if v <= u)
        best = max(best, abs(open_count / n - u), abs(closed_count / n - u))
    return best


def test_star_discrepancy_basics():
    n = 50
    assert star_discrepancy_1d(np.arange(n) / n) == pytest.approx(1 / n, abs=1e-15)
    assert star_discrepancy_1d([0.0]) == 1.0
    x = kronecker(SymbolicReal.sqrt(2), 100)
    assert star_discrepancy_1d(x) == pytest.approx(brute_star_discrepancy(x), abs=1e-15)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0, 1, exclude_max=True), min_size=1, max_size=200))
def test_star_discrepancy_matches_brute_force(x):
    d = star_discrepancy_1d(x)
    assert 0 < d <= 1
    assert d == pytest.approx(brute_star_discrepancy(x), abs=1e-12)


def test_star_discrepancy_decreases_for_sqrt2():
    x = kronecker(SymbolicReal.sqrt(2), 10**5)
    assert star_discrepancy_1d(x[:10**5]) < star_discrepancy_1d(x[:10**3])


def test_l2_single_point_at_origin():
    # integral over u of (1 - u)^2 = 1/3
    assert l2_star_discrepancy([0.0]) == pytest.approx(math.sqrt(1 / 3), rel=1e-14)
    # two dimensions: integral of (1 - uv)^2 over the square = 1 - 1/2 + 1/9
    assert l2_star_discrepancy([[0.0, 0.0]]) == pytest.approx(math.sqrt(1 - 0.5 + 1 / 9), rel=1e-14)


def _warnock(pts):
    n, m = pts.shape
    mx = np.maximum(pts[:, None, :], pts[None, :, :])
    sq = 3.0**-m - 2.0 ** (1 - m) / n * np.prod(1 - pts**2, axis=1).sum() + np.prod(1 - mx, axis=2).sum() / n**2
    return math.sqrt(sq)


@pytest.mark.parametrize("m", [1, 2, 3, 5])
def test_l2_matches_warnock_formula(m):
    pts = np.random.default_rng(m).random((300, m))
    assert l2_star_discrepancy(pts) == pytest.approx(_warnock(pts), rel=1e-10)


def test_l2_against_monte_carlo_integral():
    rng = np.random.default_rng(4)
    pts = rng.random((40, 2))
    u = rng.random((200_000, 2))
    inside = np.all(pts[None, :, :] < u[:, None, :], axis=2).mean(axis=1)
    mc = np.mean((inside - u.prod(axis=1)) ** 2)
    assert l2_star_discrepancy(pts) ** 2 == pytest.approx(mc, rel=0.03)


def test_l2_low_discrepancy_product_below_heuristic():
    n = 4096
    pts = np.stack([kronecker(SymbolicReal.sqrt(2), n), kronecker(SymbolicReal.sqrt(3), n)], axis=1)
    assert l2_star_discrepancy(pts) < 2 * l2_heuristic_bound(n, 2)


def test_l2_identical_points_is_worst():
    n = 64
    rng = np.random.default_rng(0)
    same = np.full((n, 2), 0.5)
    spread = rng.random((n, 2))
    grid = np.stack(np.meshgrid((np.arange(8) + 0.5) / 8, (np.arange(8) + 0.5) / 8), -1).reshape(-1, 2)
    assert l2_star_discrepancy(same) > max(l2_star_discrepancy(spread), l2_star_discrepancy(grid))


def test_cinf_norm_formula():
    assert cinf_norm(PolySeq((0, Fraction(1, 2))), 10) == 5
    assert cinf_norm(PolySeq((0, Fraction(1))), 10) == 0
    assert cinf_norm(PolySeq((0, 0, Fraction(1, 3))), 4) == Fraction(16, 3)
    # the maximum picks the right term and ignores the constant
    assert cinf_norm(PolySeq((Fraction(1, 2), Fraction(1, 100), Fraction(9, 10))), 3) == Fraction(9, 10)
    assert cinf_norm(PolySeq((0, Fraction(-3, 10))), 1) == Fraction(3, 10)


def test_from_monomial():
    p = PolySeq.from_monomial([Fraction(1), Fraction(2), Fraction(3), Fraction(-1)])
    for n in range(10):
        assert p(n) == 1 + 2 * n + 3 * n**2 - n**3


def test_obstruction_examples():
    w = obstruction_scan(PolySeq((0, Fraction(1, 2))), 100, 5)
    assert w.kappa == (2,) and w.norm == 0
    s2 = SymbolicReal.sqrt(2).value(192)
    assert obstruction_scan(PolySeq((0, s2)), 10**4, 10) is None
    with gmpy2.context(gmpy2.get_context(), precision=192):
        assert min(10**4 * min(k * s2 % 1, 1 - k * s2 % 1) for k in range(1, 11)) > 10
    p = PolySeq.from_monomial([Fraction(0), Fraction(3, 10), Fraction(1, 7)])
    assert obstruction_scan(p, 10**3, 10) is None


def reference_scan(p, N, M):
    # plain double loop over k and coefficient index
    best_k, best = None, None
    for k in range(-M, M + 1):
        if k == 0:
            continue
        v = 0
        for i in range(1, p.degree + 1):
            c = k * p.coeffs[i]
            frac = c - math.floor(c)
            v = max(v, N**i * min(frac, 1 - frac))
        if best is None or v < best or (v == best and abs(k) < abs(best_k)) \
                or (v == best and abs(k) == abs(best_k) and k > best_k):
            best_k, best = k, v
    return (best_k, best) if best <= M else None


def test_obstruction_scan_matches_reference():
    rng = random.Random(9)
    for _ in range(100):
        deg = rng.randint(1, 3)
        q = rng.choice([2, 3, 5, 7, 11, 13, 17, 19, 97, 1009])
        p = PolySeq(tuple(Fraction(rng.randint(0, 3 * q), q) for _ in range(deg + 1)))
        N, M = rng.randint(1, 1000), rng.randint(1, 20)
        got = obstruction_scan(p, N, M)
        want = reference_scan(p, N, M)
        assert (got is None) == (want is None)
        if got is not None:
            assert got.kappa == (want[0],) and got.norm == want[1]


def test_obstruction_scan_two_dimensions():
    p1 = PolySeq((0, Fraction(1, 3)))
    p2 = PolySeq((0, Fraction(2, 3)))
    w = obstruction_scan([p1, p2], 50, 3)
    assert w.norm == 0
    assert (w.kappa[0] + 2 * w.kappa[1]) % 3 == 0


def test_report_ranges():
    DiscrepancyReport("x", 10, "star_discrepancy", 0.5)
    with pytest.raises(ValueError):
        DiscrepancyReport("x", 10, "weyl_modulus", 1.5)
    row = DiscrepancyReport("x", 10, "weyl_modulus", 0.25, witness="(2)", seconds=1.5).csv_row()
    assert row == ["x", "10", "weyl_modulus", "0.25", "(2)", ""]


def test_test_function_integrals():
    g = (np.arange(200) + 0.5) / 200
    grid = np.stack(np.meshgrid(g, g, indexing="ij"), -1).reshape(-1, 2)
    assert Bump([0, 1])(grid).mean() == pytest.approx(1 / 16, abs=1e-4)
    assert abs(Character([1, -2])(grid).mean()) < 1e-12
    assert Constant(2.0)(grid).mean() == 2.0


HEIS = SymbolicElement.heisenberg(SymbolicReal.sqrt(2), SymbolicReal.sqrt(3), 0)


def test_orbit_coords_match_group_operations():
    x0 = NilPoint(3, (0.3, 0.6, 0.2))
    ms = [2, 17, 1000, 31622]
    got = orbit_coords(HEIS, ms, x0)
    b = HEIS.at(192)
    for row, m in zip(got, ms):
        ref = reduce(mul(pow_poly(b)(m), embed(x0)))[0].as_array()
        assert np.array_equal(row, ref)


def test_orbit_average_constant():
    res = orbit_average(HEIS, None, range(1, 200), Constant(1.0))
    assert res.value == 1 and res.gap == 0


def test_orbit_average_linear_sequence():
    res = orbit_average(HEIS, None, range(1, 20001), Character([1], [0]))
    assert res.gap < 0.02


def test_joint_with_one_factor_is_orbit_average():
    seq = list(range(1, 3001))
    f = Bump([0, 1, 2])
    a = orbit_average(HEIS, None, seq, f)
    b = joint_orbit_average([HEIS], None, [seq], f)
    assert a == b


def test_hardy_sequence_integer_parts_exact_at_squares():
    s = HardySequence("t^(3/2)")
    m = s.integer_parts(100)
    n = np.arange(2, 102)
    assert np.array_equal(m, np.array([math.isqrt(k**3) for k in n]))
    assert s.stats.escalations == 0


def test_hardy_fractional_parts_against_mpmath():
    import mpmath

    ctx = mpmath.MPContext()
    ctx.prec = 300
    fr = HardySequence("t*log(t)").fractional_parts(50, start=10**6)
    for k in (0, 17, 49):
        n = 10**6 + k
        v = ctx.mpf(n) * ctx.log(n)
        assert fr[k] == pytest.approx(float(v - ctx.floor(v)), abs=1e-15)


def test_scaled_fractional_parts():
    fr = scaled_fractional_parts([1, 2, 10**12], "sqrt2")
    with gmpy2.context(gmpy2.get_context(), precision=256):
        want = [float(k * gmpy2.sqrt(gmpy2.mpfr(2)) % 1) for k in (1, 2, 10**12)]
    assert np.allclose(fr, want, atol=1e-15, rtol=0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 1, exclude_max=True), min_size=1, max_size=50),
       st.integers(-5, 5).filter(bool))
def test_weyl_modulus_bounded(x, k):
    assert abs(weyl_sum(x, k)) <= 1 + 1e-15


